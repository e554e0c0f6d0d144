#include "swave/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace swave {
namespace {

void check_state(State const& s, SpectralBasis const& basis)
{
    if (s.u.size() != basis.modes() || s.v.size() != basis.modes())
    {
        throw std::invalid_argument("state does not match the basis");
    }
}

template <class F>
double grid_integral(Field const& u, SpectralBasis const& basis, F&& density)
{
    GridFunction const g = evaluate(u, basis);
    double acc = 0.0;
    for (double x : g.values)
    {
        acc += density(x);
    }
    acc *= basis.weight();
    if (!std::isfinite(acc))
    {
        throw PathFault("superenergy overflow");
    }
    return acc;
}

double bisect(std::function<bool(double)> const& pass, double fail_at, double pass_at)
{
    for (int i = 0; i < 200 && std::abs(pass_at - fail_at) > 1e-15 * std::max(1.0, std::abs(pass_at)); ++i)
    {
        double const mid = 0.5 * (fail_at + pass_at);
        if (pass(mid))
        {
            pass_at = mid;
        }
        else
        {
            fail_at = mid;
        }
    }
    return pass_at;
}

}  // namespace

double energy(Field const& u, Field const& v, SpectralBasis const& basis)
{
    return h1_norm_sq(u, basis) + l2_norm_sq(v);
}

double energy(State const& s, SpectralBasis const& basis)
{
    check_state(s, basis);
    return energy(s.u, s.v, basis);
}

double pseudo_energy(State const& s, double lambda, SpectralBasis const& basis)
{
    check_state(s, basis);
    double acc = h1_norm_sq(s.u, basis);
    for (std::size_t n = 0; n < s.u.size(); ++n)
    {
        double const w = s.v[n] + lambda * s.u[n];
        acc += w * w;
    }
    return acc;
}

double pseudo_energy_expanded(State const& s, double lambda, SpectralBasis const& basis)
{
    check_state(s, basis);
    return energy(s, basis) + 2.0 * lambda * inner(s.u, s.v) + lambda * lambda * l2_norm_sq(s.u);
}

double lambda_for_mu_fraction(double f, double eta1)
{
    if (!(f >= 0.0 && f < 1.0) || !(eta1 > 0.0))
    {
        throw std::invalid_argument("lambda_for_mu_fraction: need 0 <= f < 1 and eta1 > 0");
    }
    return 2.0 * f * std::sqrt(eta1) / std::sqrt(1.0 - f * f);
}

double lambda0(double alpha, double eta1)
{
    if (!(alpha > 0.0) || !(eta1 > 0.0))
    {
        throw std::invalid_argument("lambda0: alpha and eta1 must be positive");
    }
    return std::min(alpha / 2.0, eta1 / (4.0 * alpha));
}

EquivalenceConstants equivalence_constants(double lambda, double eta1)
{
    if (!(eta1 > 0.0) || !(lambda >= 0.0))
    {
        throw std::invalid_argument("equivalence_constants: need eta1 > 0 and lambda >= 0");
    }
    EquivalenceConstants c;
    c.mu1 = std::sqrt(4.0 * eta1 + lambda * lambda);
    if (!(lambda < c.mu1))
    {
        throw std::invalid_argument("equivalence_constants: lambda must be below mu1");
    }
    c.lower = (c.mu1 - lambda) / (c.mu1 + lambda);
    c.upper = (c.mu1 + lambda) / (c.mu1 - lambda);
    return c;
}

namespace {
void check_envelope(EnergyParams const& p)
{
    if (!(p.alpha1 > 0.0 && p.alpha1 < p.lambda))
    {
        throw std::invalid_argument("envelope: alpha1 must lie in (0, lambda)");
    }
}
}  // namespace

double exp_envelope(double t, double e_lambda_0, EnergyParams const& p, Schedule const& f_norm_sq,
                    Schedule const& trace_q)
{
    check_envelope(p);
    double value = e_lambda_0 * std::exp(-p.alpha1 * t);
    if (t > 0.0)
    {
        auto integrand = [&](double s) {
            double const f = f_norm_sq ? f_norm_sq(s) : 0.0;
            double const q = trace_q ? trace_q(s) : 0.0;
            return std::exp(-p.alpha1 * (t - s)) * (2.0 / p.alpha1 * f + q);
        };
        value += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, t, 15, 1e-12);
    }
    return value;
}

double exp_envelope_const(double t, double e_lambda_0, EnergyParams const& p, double f_norm_sq, double trace_q)
{
    check_envelope(p);
    double const decay = std::exp(-p.alpha1 * t);
    double const source = 2.0 / p.alpha1 * f_norm_sq + trace_q;
    return e_lambda_0 * decay + source * (-std::expm1(-p.alpha1 * t)) / p.alpha1;
}

double exp_envelope_energy(double t, double e_0, EnergyParams const& p, double eta1, double f_norm_sq,
                           double trace_q)
{
    double const k = equivalence_constants(p.lambda, eta1).upper;
    return k * exp_envelope_const(t, e_0, p, f_norm_sq, trace_q);
}

std::vector<double> energy_identity_residual(Trajectory const& traj, ModelSpec const& model, QvRule rule)
{
    if (traj.accumulators.size() != traj.states.size() || traj.states.empty())
    {
        throw std::invalid_argument("energy_identity_residual: trajectory lacks accumulators");
    }
    auto const& basis = model.basis;
    double const e0 = energy(traj.states.front(), basis);
    std::vector<double> out;
    out.reserve(traj.states.size());
    for (std::size_t i = 0; i < traj.states.size(); ++i)
    {
        Accumulators const& a = traj.accumulators[i];
        double const qv = rule == QvRule::realized ? a.quadratic_variation : a.trace_q;
        double const rhs = e0 - 4.0 * model.alpha * a.dissipation + 2.0 * a.forcing + 2.0 * a.martingale + qv;
        out.push_back(energy(traj.states[i], basis) - rhs);
    }
    return out;
}

double superenergy(DriftSpec const& drift, Field const& u, SpectralBasis const& basis)
{
    if (u.size() != basis.modes())
    {
        throw std::invalid_argument("superenergy: size mismatch");
    }
    if (auto const* d = std::get_if<Example1Drift>(&drift))
    {
        int const two_n = 2 * d->n;
        return d->kappa / d->n * grid_integral(u, basis, [two_n](double x) { return std::pow(x, two_n); });
    }
    if (auto const* d = std::get_if<Example2Drift>(&drift))
    {
        double const c0 = std::numbers::pi / 4.0 - 0.5 * std::log(2.0);
        return d->kappa * grid_integral(u, basis, [c0](double x) {
                   double const w = 1.0 + x * x;
                   return w * std::atan(w) - 0.5 * std::log1p(w * w) - c0;
               });
    }
    if (auto const* d = std::get_if<CustomPolynomialDrift>(&drift))
    {
        auto const& a = d->coefficients;
        return grid_integral(u, basis, [&a](double x) {
            // -2 sum a_j x^{j+1} / (j + 1)
            double acc = 0.0;
            for (std::size_t j = a.size(); j-- > 0;)
            {
                acc = acc * x + a[j] / static_cast<double>(j + 1);
            }
            return -2.0 * acc * x;
        });
    }
    return 0.0;
}

SuperEnergy phi_superenergy(State const& s, Example1Drift const& drift, SpectralBasis const& basis)
{
    SuperEnergy out;
    out.phi = superenergy(drift, s.u, basis);
    out.j = energy(s, basis) + out.phi;
    return out;
}

LambdaInterval admissible_interval(std::function<bool(double)> const& pass, double lambda_max, std::size_t points)
{
    LambdaInterval out;
    if (!(lambda_max > 0.0) || points == 0)
    {
        return out;
    }
    double const h = lambda_max / static_cast<double>(points);
    std::size_t first = points + 1, last = 0;
    for (std::size_t i = 1; i <= points; ++i)
    {
        if (pass(h * static_cast<double>(i)))
        {
            first = std::min(first, i);
            last = i;
        }
    }
    if (first > points)
    {
        return out;
    }
    out.empty = false;
    double const lo_pass = h * static_cast<double>(first);
    out.lo = bisect(pass, h * static_cast<double>(first - 1), lo_pass);
    if (first == 1 && out.lo < 1e-12 * lambda_max)
    {
        out.lo = 0.0;
        out.lo_open = true;
    }
    out.hi = last == points ? lambda_max : bisect(pass, h * static_cast<double>(last + 1), h * static_cast<double>(last));
    return out;
}

ConditionReportB conditions_b(double beta1, double beta2, double beta3, double gamma1, double gamma2, double gamma3,
                              double delta1, double lambda, bool strict, double lambda_max)
{
    ConditionReportB r;
    r.beta1 = beta1;
    r.beta2 = beta2;
    r.beta3 = beta3;
    r.gamma1 = gamma1;
    r.gamma2 = gamma2;
    r.gamma3 = gamma3;
    r.delta1 = delta1;
    r.lambda = lambda;
    r.strict = strict;
    auto first = [=](double l) { return (beta1 - 0.5) * l * l - beta3 * l - beta2; };
    auto second = [=](double l) { return (gamma1 - 0.5) * l * l + gamma3 * l + gamma2; };
    auto holds = [=](double l) {
        return strict ? (first(l) > 0.0 && second(l) < 0.0) : (first(l) >= 0.0 && second(l) <= 0.0);
    };
    r.first = first(lambda);
    r.second = second(lambda);
    r.first_ok = strict ? r.first > 0.0 : r.first >= 0.0;
    r.second_ok = strict ? r.second < 0.0 : r.second <= 0.0;
    r.pass = r.first_ok && r.second_ok;
    r.admissible = admissible_interval(holds, lambda_max);
    return r;
}

ConditionReportB example1_conditions(Example1Params const& p)
{
    if (!(p.kappa > 0.0) || p.n < 1)
    {
        throw std::invalid_argument("example1: need kappa > 0 and n >= 1");
    }
    if (!(p.delta > 0.0 && p.delta < 0.5))
    {
        throw std::invalid_argument("example1: delta must lie in (0, 1/2)");
    }
    if (p.beta0 != 0.0 && !(p.m >= 2 && p.m < p.n))
    {
        throw std::invalid_argument("example1: need 2 <= m < n when beta0 != 0");
    }
    double const top = p.beta0 != 0.0 ? p.m : p.n;
    if (!(p.k > 0.0 && p.k < top * (1.0 - 2.0 * p.delta)))
    {
        throw std::invalid_argument("example1: noise power k must lie in (0, " +
                                    std::string(p.beta0 != 0.0 ? "m" : "n") + " (1 - 2 delta))");
    }
    if (!(p.r0 >= 0.0) || !(p.zeta0 >= 0.0) || !(p.eps >= 0.0) || !(p.eps1 >= 0.0) || !(p.eps2 >= 0.0))
    {
        throw std::invalid_argument("example1: r0, zeta0 and the epsilons must be non-negative");
    }
    if (!(p.lambda > 0.0))
    {
        throw std::invalid_argument("example1: lambda must be positive");
    }
    double const n = p.n;
    double const noise = p.r0 * p.zeta0 * p.zeta0;
    ConditionReportB r = conditions_b(2.0 * p.kappa, p.eps * p.kappa / n, noise * p.eps1 * p.kappa / n, 0.0, 0.0,
                                      noise * p.eps2, 0.0, p.lambda, true, p.lambda_max);
    r.theta = p.beta0 == 0.0 ? "0" : "C1 * L * (beta0 exp(-" + std::to_string(p.beta_decay) + " t))^(2q)";
    r.rho = noise == 0.0 ? "0" : "C2 * r0 * L * (zeta0 exp(-" + std::to_string(p.zeta_decay) + " t))^2";
    r.theta_integrable = p.beta0 == 0.0 || p.beta_decay > 0.0;
    r.rho_integrable = noise == 0.0 || p.zeta_decay > 0.0;
    return r;
}

double example1_kappa_threshold(Example1Params const& p)
{
    double const l = p.lambda;
    double const n = p.n;
    double const denom = 2.0 * l * l - p.r0 * p.zeta0 * p.zeta0 * p.eps1 / n * l - p.eps / n;
    if (!(denom > 0.0))
    {
        return std::numeric_limits<double>::infinity();
    }
    return 0.5 * l * l / denom;
}

bool conditions_c_hold(double b1, double b2, double k1, double k2, double lambda)
{
    return std::max(b1 + b2 * lambda, k1 + k2 * lambda) <= 0.5 * lambda * lambda;
}

ConditionReportC example2_conditions(Example2Params const& p)
{
    if (!(p.kappa >= 0.0) || !(p.r0 >= 0.0) || !(p.eta1 > 0.0) || !(p.wave_speed_sq > 0.0))
    {
        throw std::invalid_argument("example2: need kappa >= 0, r0 >= 0, eta1 > 0, wave_speed_sq > 0");
    }
    ConditionReportC r;
    double const pi = std::numbers::pi;
    double const s1 = p.sigma1 * p.sigma1;
    r.b1 = std::pow(p.kappa * pi / (2.0 * p.eta1), 2);
    r.b1_direct = std::pow(p.kappa * pi / 2.0, 2) / p.eta1;
    r.c1 = 0.0;
    // ||Du||^2 <= ||u||_1^2 / c^2.
    r.b2 = s1 * p.r0 / p.wave_speed_sq;
    r.k1 = p.kappa * p.kappa / p.eta1 * std::pow(1.0 + pi / 2.0, 2);
    r.k2 = r.b2;
    r.c2 = s1 * p.trace_r1 + p.sigma2 * p.sigma2 * p.trace_r2;
    r.lambda0 = lambda0(p.alpha, p.eta1);
    r.lambda = p.lambda;
    auto const holds = [&](double l) { return conditions_c_hold(r.b1, r.b2, r.k1, r.k2, l); };
    r.admissible = admissible_interval(holds, r.lambda0);
    if (p.lambda)
    {
        double const l = *p.lambda;
        r.b_ok = r.b1 + r.b2 * l <= 0.5 * l * l;
        r.k_ok = r.k1 + r.k2 * l <= 0.5 * l * l;
        r.pass = r.b_ok && r.k_ok && l > 0.0 && l <= r.lambda0;
    }
    else
    {
        r.pass = !r.admissible.empty;
        if (r.pass)
        {
            double const l = r.admissible.hi;
            r.b_ok = r.b1 + r.b2 * l <= 0.5 * l * l;
            r.k_ok = r.k1 + r.k2 * l <= 0.5 * l * l;
        }
    }
    r.note = "C3 enforced as max(b1 + b2 l, k1 + k2 l) <= l^2/2, i.e. both the b and the k inequality must hold";
    return r;
}

}  // namespace swave
