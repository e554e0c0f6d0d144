#include "swave/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/tools/minima.hpp>

namespace swave {
namespace {

template <class... Ts>
struct overloaded : Ts...
{
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Odd extension of u^k so that non-integer powers stay real.
inline double signed_power(double u, double k)
{
    if (k == 1.0)
    {
        return u;
    }
    double const a = std::pow(std::abs(u), k);
    return u < 0.0 ? -a : a;
}

void check_channels(NoiseCoefficientSpec const& spec, CovarianceSpec const& cov, std::size_t n_modes)
{
    std::size_t const need = required_channels(spec);
    if (cov.channel_count() == 0)
    {
        return;  // no noise at all
    }
    if (need != 0 && cov.channel_count() != need)
    {
        throw std::invalid_argument(noise_kind_name(spec) + " noise needs " + std::to_string(need) +
                                    " channel(s), covariance has " + std::to_string(cov.channel_count()));
    }
    for (auto const& ch : cov.channels)
    {
        if (ch.size() > n_modes)
        {
            throw std::invalid_argument("covariance spectrum longer than the number of modes");
        }
        for (double s : ch)
        {
            if (!std::isfinite(s))
            {
                throw std::invalid_argument("covariance amplitudes must be finite");
            }
        }
    }
}

}  // namespace

double CovarianceSpec::trace(std::size_t channel) const
{
    auto const& ch = channels.at(channel);
    return std::inner_product(ch.begin(), ch.end(), ch.begin(), 0.0);
}

bool CovarianceSpec::is_zero() const
{
    for (auto const& ch : channels)
    {
        for (double s : ch)
        {
            if (s != 0.0)
            {
                return false;
            }
        }
    }
    return true;
}

CovarianceSpec CovarianceSpec::single(std::vector<double> amplitudes)
{
    CovarianceSpec c;
    c.channels.push_back(std::move(amplitudes));
    return c;
}

std::size_t required_channels(NoiseCoefficientSpec const& spec)
{
    return std::visit(overloaded{[](AdditiveNoise const&) -> std::size_t { return 0; },
                                 [](Example1Noise const&) -> std::size_t { return 1; },
                                 [](Example2Noise const&) -> std::size_t { return 2; },
                                 [](LinearStateNoise const&) -> std::size_t { return 1; }},
                      spec);
}

std::string noise_kind_name(NoiseCoefficientSpec const& spec)
{
    return std::visit(overloaded{[](AdditiveNoise const&) { return std::string("additive"); },
                                 [](Example1Noise const&) { return std::string("example1"); },
                                 [](Example2Noise const&) { return std::string("example2"); },
                                 [](LinearStateNoise const&) { return std::string("linear_state"); }},
                      spec);
}

WienerIncrement sample_increment(CovarianceSpec const& cov, double dt, RngStream& rng)
{
    WienerIncrement out;
    out.channels.reserve(cov.channel_count());
    for (auto const& ch : cov.channels)
    {
        out.channels.emplace_back(ch.size());
    }
    sample_increment_into(cov, dt, rng, out);
    return out;
}

void sample_increment_into(CovarianceSpec const& cov, double dt, RngStream& rng, WienerIncrement& out)
{
    if (!(dt > 0.0))
    {
        throw std::invalid_argument("sample_increment: dt must be positive");
    }
    double const sq = std::sqrt(dt);
    for (std::size_t c = 0; c < cov.channel_count(); ++c)
    {
        auto const& amp = cov.channels[c];
        auto& dst = out.channels[c].coeffs;
        // Always draw so the stream position does not depend on which
        // amplitudes happen to be zero.
        for (std::size_t n = 0; n < dst.size(); ++n)
        {
            double const z = rng.normal();
            dst[n] = n < amp.size() ? amp[n] * sq * z : 0.0;
        }
    }
}

double r_diag(CovarianceSpec const& cov, SpectralBasis const& basis, std::size_t channel, double x)
{
    auto const& amp = cov.channels.at(channel);
    double acc = 0.0;
    for (std::size_t n = 0; n < amp.size(); ++n)
    {
        double const p = basis.phi_at(n + 1, x);
        acc += amp[n] * amp[n] * p * p;
    }
    return acc;
}

double r0(CovarianceSpec const& cov, SpectralBasis const& basis, std::size_t channel, std::size_t refine)
{
    refine = std::max<std::size_t>(refine, 1);
    std::size_t const cells = (basis.grid_size() + 1) * refine;
    double const h = basis.length() / static_cast<double>(cells);
    double best = 0.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i <= cells; ++i)
    {
        double const r = r_diag(cov, basis, channel, h * static_cast<double>(i));
        if (r > best)
        {
            best = r;
            arg = i;
        }
    }
    best = std::max(best, r_diag(cov, basis, channel, 0.5 * basis.length()));
    if (best > 0.0)
    {
        // Polish the best cell pair with Brent's method.
        double const lo = h * static_cast<double>(arg == 0 ? 0 : arg - 1);
        double const hi = std::min(basis.length(), h * static_cast<double>(arg + 1));
        auto const neg = [&](double x) { return -r_diag(cov, basis, channel, x); };
        auto const [x, f] = boost::math::tools::brent_find_minima(neg, lo, hi, 50);
        (void)x;
        best = std::max(best, -f);
    }
    return best;
}

NoiseEvaluator::NoiseEvaluator(NoiseCoefficientSpec spec, CovarianceSpec cov, SpectralBasis const& basis)
    : spec_(std::move(spec)), cov_(std::move(cov)), basis_(&basis)
{
    check_channels(spec_, cov_, basis.modes());
    if (cov_.channels.empty())
    {
        cov_.channels.assign(std::max<std::size_t>(required_channels(spec_), 1), {});
    }
    for (auto& ch : cov_.channels)
    {
        ch.resize(basis.modes(), 0.0);
    }
    std::size_t const m = basis.grid_size();
    r_diag_.assign(cov_.channel_count(), std::vector<double>(m, 0.0));
    for (std::size_t c = 0; c < cov_.channel_count(); ++c)
    {
        for (std::size_t n = 0; n < basis.modes(); ++n)
        {
            double const s2 = cov_.channels[c][n] * cov_.channels[c][n];
            if (s2 == 0.0)
            {
                continue;
            }
            auto const row = basis.phi_row(n);
            for (std::size_t j = 0; j < m; ++j)
            {
                r_diag_[c][j] += s2 * row[j] * row[j];
            }
        }
    }
    sigma_.assign(cov_.channel_count(), std::vector<double>(m, 0.0));
    u_grid_.assign(m, 0.0);
    du_grid_.assign(m, 0.0);
    w_grid_.assign(m, 0.0);
    product_.assign(m, 0.0);
}

bool NoiseEvaluator::state_independent() const
{
    return std::holds_alternative<AdditiveNoise>(spec_);
}

void NoiseEvaluator::sigma_on_grid(std::span<double const> u, double t, double scale)
{
    std::size_t const m = basis_->grid_size();
    std::visit(overloaded{
                   [&](AdditiveNoise const& a) {
                       for (auto& ch : sigma_)
                       {
                           std::fill(ch.begin(), ch.end(), a.amplitude * scale);
                       }
                   },
                   [&](Example1Noise const& e) {
                       basis_->evaluate(u, u_grid_);
                       basis_->evaluate_gradient(u, du_grid_);
                       double const zeta = e.zeta0 * std::exp(-e.zeta_decay * t);
                       for (std::size_t j = 0; j < m; ++j)
                       {
                           double const g = 1.0 + du_grid_[j] * du_grid_[j];
                           sigma_[0][j] = scale * zeta * std::pow(g, e.delta) * signed_power(u_grid_[j], e.power);
                       }
                   },
                   [&](Example2Noise const& e) {
                       basis_->evaluate_gradient(u, du_grid_);
                       for (std::size_t j = 0; j < m; ++j)
                       {
                           sigma_[0][j] = scale * e.sigma1 * std::sqrt(1.0 + du_grid_[j] * du_grid_[j]);
                           sigma_[1][j] = scale * e.sigma2;
                       }
                   },
                   [&](LinearStateNoise const& e) {
                       basis_->evaluate(u, u_grid_);
                       for (std::size_t j = 0; j < m; ++j)
                       {
                           sigma_[0][j] = scale * e.zeta0 * u_grid_[j];
                       }
                   },
               },
               spec_);
    for (auto const& ch : sigma_)
    {
        for (double s : ch)
        {
            if (!std::isfinite(s))
            {
                throw PathFault("noise coefficient evaluated to a non-finite value");
            }
        }
    }
}

void NoiseEvaluator::increment(std::span<double const> u, double t, double scale, WienerIncrement const& dW,
                               std::span<double> out)
{
    if (out.size() != basis_->modes() || dW.channels.size() != cov_.channel_count())
    {
        throw std::invalid_argument("noise increment: shape mismatch");
    }
    if (auto const* a = std::get_if<AdditiveNoise>(&spec_))
    {
        // Constant amplitude times a band-limited field projects onto itself.
        std::fill(out.begin(), out.end(), 0.0);
        double const s = a->amplitude * scale;
        for (auto const& ch : dW.channels)
        {
            for (std::size_t n = 0; n < out.size(); ++n)
            {
                out[n] += s * ch[n];
            }
        }
        return;
    }
    sigma_on_grid(u, t, scale);
    increment_from_grid(dW, out);
}

void NoiseEvaluator::increment_from_grid(WienerIncrement const& dW, std::span<double> out)
{
    std::fill(product_.begin(), product_.end(), 0.0);
    for (std::size_t c = 0; c < cov_.channel_count(); ++c)
    {
        basis_->evaluate(dW.channels[c].span(), w_grid_);
        auto const& sg = sigma_[c];
        for (std::size_t j = 0; j < product_.size(); ++j)
        {
            product_[j] += sg[j] * w_grid_[j];
        }
    }
    basis_->project(product_, out);
}

double NoiseEvaluator::trace(std::span<double const> u, double t, double scale)
{
    if (auto const* a = std::get_if<AdditiveNoise>(&spec_))
    {
        double tr = 0.0;
        for (std::size_t c = 0; c < cov_.channel_count(); ++c)
        {
            tr += cov_.trace(c);
        }
        double const s = a->amplitude * scale;
        return s * s * tr;
    }
    sigma_on_grid(u, t, scale);
    return trace_from_grid();
}

double NoiseEvaluator::trace_from_grid() const
{
    double acc = 0.0;
    for (std::size_t c = 0; c < cov_.channel_count(); ++c)
    {
        auto const& sg = sigma_[c];
        auto const& rd = r_diag_[c];
        for (std::size_t j = 0; j < sg.size(); ++j)
        {
            acc += rd[j] * sg[j] * sg[j];
        }
    }
    return basis_->weight() * acc;
}

std::vector<GridFunction> apply_sigma(NoiseCoefficientSpec const& spec, Field const& u, double t,
                                      SpectralBasis const& basis)
{
    std::size_t const channels = std::max<std::size_t>(required_channels(spec), 1);
    CovarianceSpec cov;
    cov.channels.assign(channels, std::vector<double>(basis.modes(), 0.0));
    NoiseEvaluator ev(spec, cov, basis);
    ev.sigma_on_grid(u.span(), t, 1.0);
    std::vector<GridFunction> out;
    for (auto const& ch : ev.sigma_grid())
    {
        out.emplace_back(ch);
    }
    return out;
}

double trace_Q(NoiseCoefficientSpec const& spec, CovarianceSpec const& cov, Field const& u, double t,
               SpectralBasis const& basis)
{
    NoiseEvaluator ev(spec, cov, basis);
    // The additive case also goes through the grid so this stays a quadrature.
    ev.sigma_on_grid(u.span(), t, 1.0);
    return ev.trace_from_grid();
}

Field multiplicative_increment(NoiseCoefficientSpec const& spec, CovarianceSpec const& cov, Field const& u,
                               WienerIncrement const& dW, SpectralBasis const& basis, double t)
{
    NoiseEvaluator ev(spec, cov, basis);
    Field out(basis.modes());
    ev.increment(u.span(), t, 1.0, dW, out.span());
    return out;
}

MomentDiagnosticReport martingale_moment_diagnostic(SigmaSchedule const& sigma, CovarianceSpec const& cov,
                                                    SpectralBasis const& basis,
                                                    MomentDiagnosticConfig const& cfg)
{
    if (cfg.p != 2 && cfg.p != 4)
    {
        throw std::invalid_argument("moment diagnostic: p must be 2 or 4");
    }
    if (cfg.paths < 100)
    {
        throw std::invalid_argument("moment diagnostic: ensemble too small (need at least 100 paths)");
    }
    if (!(cfg.horizon > 0.0) || cfg.dts.empty())
    {
        throw std::invalid_argument("moment diagnostic: horizon and dt sweep must be non-empty");
    }
    check_channels(AdditiveNoise{}, cov, basis.modes());

    std::size_t const n_modes = basis.modes();
    std::size_t const m = basis.grid_size();
    std::size_t const n_ch = cov.channel_count();
    CovarianceSpec padded = cov;
    for (auto& ch : padded.channels)
    {
        ch.resize(n_modes, 0.0);
    }

    MomentDiagnosticReport report;
    report.p = cfg.p;
    double const p = static_cast<double>(cfg.p);

    for (std::size_t di = 0; di < cfg.dts.size(); ++di)
    {
        double const dt = cfg.dts[di];
        if (!(dt > 0.0))
        {
            throw std::invalid_argument("moment diagnostic: dt must be positive");
        }
        auto const steps = static_cast<std::size_t>(std::llround(cfg.horizon / dt));

        // Frozen schedule on the grid, and the per-step projected trace.
        std::vector<std::vector<double>> sig(steps, std::vector<double>(m));
        MomentDiagnosticRow row;
        row.dt = dt;
        std::vector<double> prod(m), coef(n_modes);
        for (std::size_t k = 0; k < steps; ++k)
        {
            double const t = dt * static_cast<double>(k);
            double norm_sq = 0.0;
            for (std::size_t j = 0; j < m; ++j)
            {
                sig[k][j] = sigma(basis.grid()[j], t);
                norm_sq += sig[k][j] * sig[k][j];
            }
            norm_sq *= basis.weight();
            row.sigma_moment += std::pow(norm_sq, p / 2.0) * dt;

            double tr = 0.0;
            for (std::size_t c = 0; c < n_ch; ++c)
            {
                for (std::size_t n = 0; n < n_modes; ++n)
                {
                    double const s2 = padded.channels[c][n] * padded.channels[c][n];
                    if (s2 == 0.0)
                    {
                        continue;
                    }
                    auto const phi = basis.phi_row(n);
                    for (std::size_t j = 0; j < m; ++j)
                    {
                        prod[j] = sig[k][j] * phi[j];
                    }
                    basis.project(prod, coef);
                    tr += s2 * std::inner_product(coef.begin(), coef.end(), coef.begin(), 0.0);
                }
            }
            row.isometry_target += tr * dt;
        }

        double sup_sum = 0.0, sup_sq = 0.0, term_sum = 0.0, term_sq = 0.0;
        WienerIncrement dW;
        for (std::size_t c = 0; c < n_ch; ++c)
        {
            dW.channels.emplace_back(n_modes);
        }
        std::vector<double> M(n_modes), w(m), inc(n_modes);
        for (std::size_t path = 0; path < cfg.paths; ++path)
        {
            RngStream rng(cfg.seed, make_stream_id(StreamPurpose::diagnostic, (di << 32) | path));
            std::fill(M.begin(), M.end(), 0.0);
            double sup = 0.0;
            for (std::size_t k = 0; k < steps; ++k)
            {
                sample_increment_into(padded, dt, rng, dW);
                std::fill(prod.begin(), prod.end(), 0.0);
                for (std::size_t c = 0; c < n_ch; ++c)
                {
                    basis.evaluate(dW.channels[c].span(), w);
                    for (std::size_t j = 0; j < m; ++j)
                    {
                        prod[j] += sig[k][j] * w[j];
                    }
                }
                basis.project(prod, inc);
                for (std::size_t n = 0; n < n_modes; ++n)
                {
                    M[n] += inc[n];
                }
                double const norm_sq = std::inner_product(M.begin(), M.end(), M.begin(), 0.0);
                sup = std::max(sup, std::pow(norm_sq, p / 2.0));
            }
            double const terminal = std::pow(std::inner_product(M.begin(), M.end(), M.begin(), 0.0), p / 2.0);
            sup_sum += sup;
            sup_sq += sup * sup;
            term_sum += terminal;
            term_sq += terminal * terminal;
        }
        double const n = static_cast<double>(cfg.paths);
        auto se = [n](double s, double s2) {
            double const mean = s / n;
            double const var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
            return std::sqrt(var / n);
        };
        row.sup_moment = sup_sum / n;
        row.sup_moment_se = se(sup_sum, sup_sq);
        row.terminal_moment = term_sum / n;
        row.terminal_moment_se = se(term_sum, term_sq);
        row.ratio = row.sigma_moment > 0.0 ? row.sup_moment / row.sigma_moment : 0.0;
        if (cfg.p == 2)
        {
            double const slack = 3.0 * row.terminal_moment_se + 1e-12;
            report.isometry_ok = report.isometry_ok &&
                                 std::abs(row.terminal_moment - row.isometry_target) <= slack;
        }
        report.rows.push_back(row);
    }

    double lo = report.rows.front().ratio, hi = lo;
    for (auto const& r : report.rows)
    {
        lo = std::min(lo, r.ratio);
        hi = std::max(hi, r.ratio);
    }
    if (hi == 0.0)
    {
        report.ratio_spread = 1.0;
    }
    else
    {
        report.ratio_spread = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    }
    report.ratio_bounded = report.ratio_spread <= 2.0;
    return report;
}

}  // namespace swave
