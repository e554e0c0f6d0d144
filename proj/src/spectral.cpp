#include "swave/spectral.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace swave {

Field Field::unit(std::size_t n_modes, std::size_t mode)
{
    if (mode < 1 || mode > n_modes)
    {
        throw std::out_of_range("Field::unit: mode " + std::to_string(mode) + " outside 1.." +
                                std::to_string(n_modes));
    }
    Field f(n_modes);
    f[mode - 1] = 1.0;
    return f;
}

SpectralBasis::SpectralBasis(DomainSpec domain, OperatorSpec op, std::size_t n_modes)
    : domain_(domain), op_(op), n_modes_(n_modes)
{
    if (n_modes_ < 1)
    {
        throw std::invalid_argument("spectral basis needs at least one mode");
    }
    if (!(domain_.length > 0.0) || !std::isfinite(domain_.length))
    {
        throw std::invalid_argument("domain length must be positive and finite");
    }
    if (!(op_.wave_speed_sq > 0.0))
    {
        throw std::invalid_argument("wave_speed_sq must be positive");
    }
    if (!(op_.mass >= 0.0))
    {
        throw std::invalid_argument("mass must be non-negative");
    }
    if (domain_.grid_points == 0)
    {
        domain_.grid_points = 4 * n_modes_;
    }
    std::size_t const m = domain_.grid_points;
    if (m < 2 * n_modes_)
    {
        throw std::invalid_argument("grid_points (" + std::to_string(m) +
                                    ") must be at least twice the number of modes (" +
                                    std::to_string(n_modes_) + ")");
    }

    double const length = domain_.length;
    weight_ = length / static_cast<double>(m + 1);
    grid_.resize(m);
    for (std::size_t j = 0; j < m; ++j)
    {
        grid_[j] = weight_ * static_cast<double>(j + 1);
    }

    double const norm = std::sqrt(2.0 / length);
    eta_.resize(n_modes_);
    phi_.resize(n_modes_ * m);
    dphi_.resize(n_modes_ * m);
    for (std::size_t n = 0; n < n_modes_; ++n)
    {
        double const k = static_cast<double>(n + 1) * std::numbers::pi / length;
        eta_[n] = op_.wave_speed_sq * k * k + op_.mass;
        for (std::size_t j = 0; j < m; ++j)
        {
            // Exact integer phase avoids drift in sin(k x_j) for large n.
            double const phase = std::numbers::pi * static_cast<double>((n + 1) * (j + 1)) /
                                 static_cast<double>(m + 1);
            phi_[n * m + j] = norm * std::sin(phase);
            dphi_[n * m + j] = norm * k * std::cos(phase);
        }
    }
}

std::span<double const> SpectralBasis::phi_row(std::size_t n) const
{
    return std::span<double const>(phi_).subspan(n * grid_.size(), grid_.size());
}

std::span<double const> SpectralBasis::dphi_row(std::size_t n) const
{
    return std::span<double const>(dphi_).subspan(n * grid_.size(), grid_.size());
}

std::size_t SpectralBasis::max_exact_degree() const
{
    // Degree d times phi_m spans wavenumbers up to (d + 1) N < 2 (M + 1).
    std::size_t const limit = 2 * (grid_.size() + 1);
    std::size_t d = 0;
    while ((d + 2) * n_modes_ < limit)
    {
        ++d;
    }
    return d;
}

void SpectralBasis::evaluate(std::span<double const> coeffs, std::span<double> out) const
{
    if (coeffs.size() != n_modes_ || out.size() != grid_.size())
    {
        throw std::invalid_argument("evaluate: size mismatch");
    }
    std::size_t const m = grid_.size();
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t n = 0; n < n_modes_; ++n)
    {
        double const c = coeffs[n];
        if (c == 0.0)
        {
            continue;
        }
        double const* row = phi_.data() + n * m;
        for (std::size_t j = 0; j < m; ++j)
        {
            out[j] += c * row[j];
        }
    }
}

void SpectralBasis::evaluate_gradient(std::span<double const> coeffs, std::span<double> out) const
{
    if (coeffs.size() != n_modes_ || out.size() != grid_.size())
    {
        throw std::invalid_argument("evaluate_gradient: size mismatch");
    }
    std::size_t const m = grid_.size();
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t n = 0; n < n_modes_; ++n)
    {
        double const c = coeffs[n];
        if (c == 0.0)
        {
            continue;
        }
        double const* row = dphi_.data() + n * m;
        for (std::size_t j = 0; j < m; ++j)
        {
            out[j] += c * row[j];
        }
    }
}

void SpectralBasis::project(std::span<double const> values, std::span<double> coeffs_out) const
{
    if (values.size() != grid_.size() || coeffs_out.size() != n_modes_)
    {
        throw std::invalid_argument("project: size mismatch");
    }
    std::size_t const m = grid_.size();
    for (std::size_t n = 0; n < n_modes_; ++n)
    {
        double const* row = phi_.data() + n * m;
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j)
        {
            acc += values[j] * row[j];
        }
        coeffs_out[n] = weight_ * acc;
    }
}

double SpectralBasis::integrate(std::span<double const> values) const
{
    if (values.size() != grid_.size())
    {
        throw std::invalid_argument("integrate: size mismatch");
    }
    return weight_ * std::accumulate(values.begin(), values.end(), 0.0);
}

double SpectralBasis::phi_at(std::size_t mode, double x) const
{
    double const length = domain_.length;
    return std::sqrt(2.0 / length) * std::sin(static_cast<double>(mode) * std::numbers::pi * x / length);
}

SpectralBasis build_basis(DomainSpec const& domain, OperatorSpec const& op, std::size_t n_modes)
{
    return SpectralBasis(domain, op, n_modes);
}

Field project(GridFunction const& g, SpectralBasis const& basis)
{
    Field u(basis.modes());
    basis.project(g.span(), u.span());
    return u;
}

GridFunction evaluate(Field const& u, SpectralBasis const& basis)
{
    GridFunction g(basis.grid_size());
    basis.evaluate(u.span(), g.span());
    return g;
}

double l2_norm_sq(Field const& u)
{
    return std::inner_product(u.coeffs.begin(), u.coeffs.end(), u.coeffs.begin(), 0.0);
}

double h1_norm_sq(Field const& u, SpectralBasis const& basis)
{
    if (u.size() != basis.modes())
    {
        throw std::invalid_argument("h1_norm_sq: size mismatch");
    }
    double acc = 0.0;
    for (std::size_t n = 0; n < u.size(); ++n)
    {
        acc += basis.eta(n) * u[n] * u[n];
    }
    return acc;
}

double inner(Field const& a, Field const& b)
{
    if (a.size() != b.size())
    {
        throw std::invalid_argument("inner: size mismatch");
    }
    return std::inner_product(a.coeffs.begin(), a.coeffs.end(), b.coeffs.begin(), 0.0);
}

NormsAndGradient norms_and_gradient(Field const& u, SpectralBasis const& basis)
{
    for (double c : u.coeffs)
    {
        if (!std::isfinite(c))
        {
            throw std::domain_error("norms_and_gradient: non-finite coefficient");
        }
    }
    NormsAndGradient out;
    out.l2 = std::sqrt(l2_norm_sq(u));
    out.h1 = std::sqrt(h1_norm_sq(u, basis));
    out.gradient = GridFunction(basis.grid_size());
    basis.evaluate_gradient(u.span(), out.gradient.span());
    return out;
}

}  // namespace swave
