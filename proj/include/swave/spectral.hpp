#pragma once

#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace swave {

/// Interval (0, L) with M interior collocation points x_j = j L / (M + 1).
struct DomainSpec
{
    double length = std::numbers::pi;
    /// Zero selects the default 4 * n_modes.
    std::size_t grid_points = 0;
};

/// Constant-coefficient operator A = c^2 d^2/dx^2 - b0 with Dirichlet ends.
struct OperatorSpec
{
    double wave_speed_sq = 1.0;
    double mass = 0.0;
};

/// Spectral coefficients in the Dirichlet eigenbasis.
struct Field
{
    std::vector<double> coeffs;

    Field() = default;
    explicit Field(std::size_t n_modes) : coeffs(n_modes, 0.0) {}
    explicit Field(std::vector<double> c) : coeffs(std::move(c)) {}

    /// Unit coefficient on the 1-based mode index.
    static Field unit(std::size_t n_modes, std::size_t mode);

    std::size_t size() const { return coeffs.size(); }
    double& operator[](std::size_t i) { return coeffs[i]; }
    double operator[](std::size_t i) const { return coeffs[i]; }
    std::span<double> span() { return coeffs; }
    std::span<double const> span() const { return coeffs; }
};

/// Samples on the interior collocation grid.
struct GridFunction
{
    std::vector<double> values;

    GridFunction() = default;
    explicit GridFunction(std::size_t n_points) : values(n_points, 0.0) {}
    explicit GridFunction(std::vector<double> v) : values(std::move(v)) {}

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    std::span<double> span() { return values; }
    std::span<double const> span() const { return values; }
};

/// Eigenpairs of -A on the interval with cached collocation tables.
///
/// phi_n(x) = sqrt(2/L) sin(n pi x / L), eta_n = c^2 (n pi / L)^2 + b0.
/// The quadrature is the trapezoid rule on the uniform grid including the
/// (zero-valued) end points, so products of sines are integrated exactly as
/// long as their total wavenumber stays below 2(M + 1).
///
/// Immutable after construction; safe to share across threads.
class SpectralBasis
{
  public:
    SpectralBasis(DomainSpec domain, OperatorSpec op, std::size_t n_modes);

    std::size_t modes() const { return n_modes_; }
    std::size_t grid_size() const { return grid_.size(); }
    double length() const { return domain_.length; }
    DomainSpec const& domain() const { return domain_; }
    OperatorSpec const& op() const { return op_; }

    std::span<double const> eigenvalues() const { return eta_; }
    double eta(std::size_t mode_index) const { return eta_[mode_index]; }
    std::span<double const> grid() const { return grid_; }
    double weight() const { return weight_; }

    /// phi_n(x_j) for 0-based mode index n.
    std::span<double const> phi_row(std::size_t n) const;
    std::span<double const> dphi_row(std::size_t n) const;

    /// Largest polynomial degree whose products with basis functions are
    /// still integrated exactly by the grid.
    std::size_t max_exact_degree() const;

    void evaluate(std::span<double const> coeffs, std::span<double> out) const;
    void evaluate_gradient(std::span<double const> coeffs, std::span<double> out) const;
    void project(std::span<double const> values, std::span<double> coeffs_out) const;
    double integrate(std::span<double const> values) const;

    double phi_at(std::size_t mode, double x) const;

  private:
    DomainSpec domain_;
    OperatorSpec op_;
    std::size_t n_modes_;
    double weight_;
    std::vector<double> eta_;
    std::vector<double> grid_;
    std::vector<double> phi_;
    std::vector<double> dphi_;
};

SpectralBasis build_basis(DomainSpec const& domain, OperatorSpec const& op, std::size_t n_modes);

Field project(GridFunction const& g, SpectralBasis const& basis);
GridFunction evaluate(Field const& u, SpectralBasis const& basis);

double l2_norm_sq(Field const& u);
double h1_norm_sq(Field const& u, SpectralBasis const& basis);
double inner(Field const& a, Field const& b);

struct NormsAndGradient
{
    double l2 = 0.0;
    double h1 = 0.0;
    GridFunction gradient;
};

NormsAndGradient norms_and_gradient(Field const& u, SpectralBasis const& basis);

}  // namespace swave
