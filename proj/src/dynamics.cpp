#include "swave/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace swave {
namespace {

template <class... Ts>
struct overloaded : Ts...
{
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline double ipow(double x, int k)
{
    double r = 1.0;
    for (int i = 0; i < k; ++i)
    {
        r *= x;
    }
    return r;
}

double pointwise(DriftSpec const& drift, double u, double t)
{
    return std::visit(overloaded{
                          [](ForcedLinearDrift const&) { return 0.0; },
                          [&](Example1Drift const& d) {
                              double f = -d.kappa * ipow(u, 2 * d.n - 1);
                              if (d.beta0 != 0.0 && d.m > 0)
                              {
                                  f += d.beta0 * std::exp(-d.beta_decay * t) * ipow(u, d.m);
                              }
                              return f;
                          },
                          [&](Example2Drift const& d) { return -d.kappa * u * std::atan(1.0 + u * u); },
                          [&](CustomPolynomialDrift const& d) {
                              double f = 0.0;
                              for (auto it = d.coefficients.rbegin(); it != d.coefficients.rend(); ++it)
                              {
                                  f = f * u + *it;
                              }
                              return f;
                          },
                      },
                      drift);
}

// Pseudospectral evaluation with caller-owned scratch.
void drift_on_basis(DriftSpec const& drift, std::span<double const> u, double t, SpectralBasis const& basis,
                    std::vector<double>& grid_u, std::vector<double>& grid_f, std::span<double> out)
{
    if (auto const* lin = std::get_if<ForcedLinearDrift>(&drift))
    {
        std::fill(out.begin(), out.end(), 0.0);
        std::copy_n(lin->forcing.begin(), std::min(lin->forcing.size(), out.size()), out.begin());
        return;
    }
    basis.evaluate(u, grid_u);
    for (std::size_t j = 0; j < grid_u.size(); ++j)
    {
        grid_f[j] = pointwise(drift, grid_u[j], t);
        if (!std::isfinite(grid_f[j]))
        {
            throw PathFault("drift evaluated to a non-finite value");
        }
    }
    basis.project(grid_f, out);
}

double h1_norm(std::span<double const> u, SpectralBasis const& basis)
{
    double acc = 0.0;
    for (std::size_t n = 0; n < u.size(); ++n)
    {
        acc += basis.eta(n) * u[n] * u[n];
    }
    return std::sqrt(acc);
}

Field padded(Field const& f, std::size_t n)
{
    Field out(n);
    std::copy_n(f.coeffs.begin(), std::min(n, f.size()), out.coeffs.begin());
    return out;
}

// C(t) and S(t) of exp(t Y) = C I + S Y with Y^2 = -q I.
void cos_sin_pair(double q, double t, double& c, double& s)
{
    if (std::abs(q) * t * t < 1e-2)
    {
        double term_c = 1.0, term_s = t;
        c = 0.0;
        s = 0.0;
        double const x = -q * t * t;
        for (int k = 0; k < 12; ++k)
        {
            c += term_c;
            s += term_s;
            term_c *= x / static_cast<double>((2 * k + 1) * (2 * k + 2));
            term_s *= x / static_cast<double>((2 * k + 2) * (2 * k + 3));
        }
        return;
    }
    if (q > 0.0)
    {
        double const w = std::sqrt(q);
        c = std::cos(w * t);
        s = std::sin(w * t) / w;
    }
    else
    {
        double const w = std::sqrt(-q);
        c = std::cosh(w * t);
        s = std::sinh(w * t) / w;
    }
}

}  // namespace

std::string drift_kind_name(DriftSpec const& drift)
{
    return std::visit(overloaded{[](ForcedLinearDrift const&) { return std::string("forced_linear"); },
                                 [](Example1Drift const&) { return std::string("example1"); },
                                 [](Example2Drift const&) { return std::string("example2"); },
                                 [](CustomPolynomialDrift const&) { return std::string("custom_polynomial"); }},
                      drift);
}

std::optional<std::size_t> drift_degree(DriftSpec const& drift)
{
    return std::visit(overloaded{
                          [](ForcedLinearDrift const&) -> std::optional<std::size_t> { return 0; },
                          [](Example1Drift const& d) -> std::optional<std::size_t> {
                              std::size_t deg = static_cast<std::size_t>(std::max(2 * d.n - 1, 0));
                              if (d.beta0 != 0.0)
                              {
                                  deg = std::max(deg, static_cast<std::size_t>(std::max(d.m, 0)));
                              }
                              return deg;
                          },
                          [](Example2Drift const&) -> std::optional<std::size_t> { return std::nullopt; },
                          [](CustomPolynomialDrift const& d) -> std::optional<std::size_t> {
                              return d.coefficients.empty() ? 0 : d.coefficients.size() - 1;
                          },
                      },
                      drift);
}

std::string scheme_name(Scheme s)
{
    return s == Scheme::euler_maruyama ? "euler_maruyama" : "exponential";
}

Scheme parse_scheme(std::string const& name)
{
    if (name == "euler_maruyama")
    {
        return Scheme::euler_maruyama;
    }
    if (name == "exponential")
    {
        return Scheme::exponential;
    }
    throw std::invalid_argument("unknown scheme '" + name + "' (expected euler_maruyama or exponential)");
}

void ModelSpec::validate() const
{
    std::size_t const n_modes = basis.modes();
    if (!(alpha > 0.0) || !std::isfinite(alpha))
    {
        throw std::invalid_argument("model.alpha must be positive and finite");
    }
    if (g.size() > n_modes || h.size() > n_modes)
    {
        throw std::invalid_argument("model.init: more coefficients than modes");
    }
    for (double c : g.coeffs)
    {
        if (!std::isfinite(c))
        {
            throw std::invalid_argument("model.init.u: non-finite coefficient");
        }
    }
    for (double c : h.coeffs)
    {
        if (!std::isfinite(c))
        {
            throw std::invalid_argument("model.init.v: non-finite coefficient");
        }
    }
    if (!(truncation > 0.0))
    {
        throw std::invalid_argument("model.truncation must be positive");
    }
    Field const g_full = padded(g, n_modes);
    if (!(truncation > std::sqrt(h1_norm_sq(g_full, basis))))
    {
        throw std::invalid_argument("model.truncation must exceed the H1 norm of the initial displacement");
    }

    std::visit(overloaded{
                   [&](ForcedLinearDrift const& d) {
                       if (d.forcing.size() > n_modes)
                       {
                           throw std::invalid_argument("model.drift.forcing: more coefficients than modes");
                       }
                       for (double f : d.forcing)
                       {
                           if (!std::isfinite(f))
                           {
                               throw std::invalid_argument("model.drift.forcing: non-finite coefficient");
                           }
                       }
                   },
                   [&](Example1Drift const& d) {
                       if (!(d.kappa > 0.0))
                       {
                           throw std::invalid_argument("model.drift.kappa must be positive");
                       }
                       if (d.n < 1)
                       {
                           throw std::invalid_argument("model.drift.n must be at least 1");
                       }
                       if (d.beta0 != 0.0 && !(d.m >= 2 && d.m < d.n))
                       {
                           throw std::invalid_argument("model.drift.m must satisfy 2 <= m < n when beta0 != 0");
                       }
                   },
                   [&](Example2Drift const& d) {
                       if (!(d.kappa >= 0.0) || !std::isfinite(d.kappa))
                       {
                           throw std::invalid_argument("model.drift.kappa must be non-negative");
                       }
                   },
                   [&](CustomPolynomialDrift const& d) {
                       if (d.coefficients.empty())
                       {
                           throw std::invalid_argument("model.drift.coefficients must not be empty");
                       }
                       for (double a : d.coefficients)
                       {
                           if (!std::isfinite(a))
                           {
                               throw std::invalid_argument("model.drift.coefficients: non-finite value");
                           }
                       }
                   },
               },
               drift);
    if (auto const deg = drift_degree(drift); deg && *deg > basis.max_exact_degree())
    {
        throw std::invalid_argument("model.domain.grid_points too small for drift degree " + std::to_string(*deg) +
                                    " (exact up to degree " + std::to_string(basis.max_exact_degree()) + ")");
    }

    if (auto const* e = std::get_if<Example1Noise>(&noise))
    {
        if (!(e->zeta0 >= 0.0) || !(e->delta > 0.0 && e->delta < 0.5) || !(e->power > 0.0))
        {
            throw std::invalid_argument("model.noise: example1 needs zeta0 >= 0, delta in (0, 1/2), power > 0");
        }
        if (auto const* d = std::get_if<Example1Drift>(&drift))
        {
            // u^k must stay below the growth the drift controls.
            double const top = d->beta0 != 0.0 ? d->m : d->n;
            if (!(e->power < top * (1.0 - 2.0 * e->delta)))
            {
                throw std::invalid_argument("model.noise.power must be below " + std::string(d->beta0 != 0.0 ? "m" : "n") +
                                            " (1 - 2 delta)");
            }
        }
    }
    // Channel layout and amplitudes are checked by the evaluator.
    NoiseEvaluator probe(noise, covariance, basis);
    (void)probe;
}

bool ModelSpec::is_linear_additive() const
{
    return std::holds_alternative<ForcedLinearDrift>(drift) && std::holds_alternative<AdditiveNoise>(noise);
}

State initial_state(ModelSpec const& model)
{
    State s;
    s.u = padded(model.g, model.basis.modes());
    s.v = padded(model.h, model.basis.modes());
    s.t = 0.0;
    return s;
}

Mat2 linear_mode_propagator(double eta, double alpha, double dt)
{
    double c = 1.0, s = 0.0;
    cos_sin_pair(eta - alpha * alpha, dt, c, s);
    double const e = std::exp(-alpha * dt);
    return Mat2{e * (c + alpha * s), e * s, -eta * e * s, e * (c - alpha * s)};
}

Field apply_drift(DriftSpec const& drift, Field const& u, double t, SpectralBasis const& basis)
{
    if (u.size() != basis.modes())
    {
        throw std::invalid_argument("apply_drift: size mismatch");
    }
    std::vector<double> gu(basis.grid_size()), gf(basis.grid_size());
    Field out(basis.modes());
    drift_on_basis(drift, u.span(), t, basis, gu, gf, out.span());
    return out;
}

double smooth_cutoff(double s, double n_trunc)
{
    if (!(s > 0.5 * n_trunc))
    {
        return 1.0;
    }
    if (s >= n_trunc)
    {
        return 0.0;
    }
    double const w = 2.0 * s / n_trunc - 1.0;
    return 1.0 - w * w * (3.0 - 2.0 * w);
}

Field truncate_state(Field const& u, SpectralBasis const& basis, double n_trunc)
{
    double const k = smooth_cutoff(h1_norm(u.span(), basis), n_trunc);
    Field out = u;
    if (k != 1.0)
    {
        for (auto& c : out.coeffs)
        {
            c *= k;
        }
    }
    return out;
}

Field truncated_drift(DriftSpec const& drift, Field const& u, double t, SpectralBasis const& basis,
                      double n_trunc)
{
    double const k = smooth_cutoff(h1_norm(u.span(), basis), n_trunc);
    Field f = apply_drift(drift, truncate_state(u, basis, n_trunc), t, basis);
    if (k != 1.0)
    {
        for (auto& c : f.coeffs)
        {
            c *= k;
        }
    }
    return f;
}

Stepper::Stepper(ModelSpec const& model, Scheme scheme)
    : model_(&model), scheme_(scheme), noise_(model.noise, model.covariance, model.basis)
{
    model.validate();
    std::size_t const n = model.basis.modes();
    std::size_t const m = model.basis.grid_size();
    grid_u_.assign(m, 0.0);
    grid_f_.assign(m, 0.0);
    drift_.assign(n, 0.0);
    dm_.assign(n, 0.0);
    su_.assign(n, 0.0);
}

WienerIncrement Stepper::make_increment() const
{
    WienerIncrement w;
    for (std::size_t c = 0; c < noise_.covariance().channel_count(); ++c)
    {
        w.channels.emplace_back(model_->basis.modes());
    }
    return w;
}

void Stepper::prepare(double dt)
{
    if (dt == cached_dt_)
    {
        return;
    }
    using boost::math::quadrature::gauss;
    auto const& basis = model_->basis;
    double const alpha = model_->alpha;
    modes_.resize(basis.modes());
    for (std::size_t n = 0; n < basis.modes(); ++n)
    {
        double const eta = basis.eta(n);
        ModeCache& mc = modes_[n];
        mc.prop = linear_mode_propagator(eta, alpha, dt);
        if (scheme_ != Scheme::exponential)
        {
            continue;
        }
        double const rate = std::sqrt(std::abs(eta - alpha * alpha)) + alpha;
        auto const panels = static_cast<std::size_t>(std::max(1.0, std::ceil(2.0 * rate * dt)));
        double const width = dt / static_cast<double>(panels);
        mc.i11 = mc.i12 = mc.i22 = 0.0;
        for (std::size_t p = 0; p < panels; ++p)
        {
            double const a = width * static_cast<double>(p);
            double const b = a + width;
            mc.i11 += gauss<double, 20>::integrate(
                [&](double s) {
                    double const x = linear_mode_propagator(eta, alpha, s).a21;
                    return x * x;
                },
                a, b);
            mc.i12 += gauss<double, 20>::integrate(
                [&](double s) {
                    Mat2 const q = linear_mode_propagator(eta, alpha, s);
                    return q.a21 * q.a22;
                },
                a, b);
            mc.i22 += gauss<double, 20>::integrate(
                [&](double s) {
                    double const x = linear_mode_propagator(eta, alpha, s).a22;
                    return x * x;
                },
                a, b);
        }
    }
    cached_dt_ = dt;
}

void Stepper::drift_into(std::span<double const> u, double t, std::span<double> out)
{
    drift_on_basis(model_->drift, u, t, model_->basis, grid_u_, grid_f_, out);
}

void Stepper::step(State& s, double dt, WienerIncrement const& dW, Accumulators* acc)
{
    if (!(dt > 0.0))
    {
        throw std::invalid_argument("step: dt must be positive");
    }
    prepare(dt);
    auto const& basis = model_->basis;
    std::size_t const n_modes = basis.modes();
    double const t = s.t;

    // Truncation: S_N u and the outer cutoff factor.
    double const k = smooth_cutoff(h1_norm(s.u.span(), basis), model_->truncation);
    std::span<double const> su = s.u.span();
    if (k != 1.0)
    {
        ramp_entered_ = true;
        for (std::size_t n = 0; n < n_modes; ++n)
        {
            su_[n] = k * s.u[n];
        }
        su = su_;
    }

    drift_into(su, t, drift_);
    if (k != 1.0)
    {
        for (auto& f : drift_)
        {
            f *= k;
        }
    }

    double trace = 0.0;
    if (noise_.covariance().is_zero())
    {
        std::fill(dm_.begin(), dm_.end(), 0.0);
    }
    else if (noise_.state_independent())
    {
        noise_.increment(su, t, k, dW, dm_);
        trace = noise_.trace(su, t, k);
    }
    else
    {
        noise_.sigma_on_grid(su, t, k);
        noise_.increment_from_grid(dW, dm_);
        trace = noise_.trace_from_grid();
    }

    if (acc != nullptr)
    {
        // The exponential scheme applies v + F dt + dM as one kick, so its
        // energy jump also carries |F dt|^2 and 2 (F dt, dM). Evaluating the
        // forcing at v + F dt / 2 and the martingale at v + F dt (both known
        // at the left point) books them and keeps the discrete balance exact.
        double const kick = scheme_ == Scheme::exponential ? dt : 0.0;
        double vf = 0.0, vm = 0.0, mm = 0.0;
        for (std::size_t n = 0; n < n_modes; ++n)
        {
            vf += (s.v[n] + 0.5 * kick * drift_[n]) * drift_[n];
            vm += (s.v[n] + kick * drift_[n]) * dm_[n];
            mm += dm_[n] * dm_[n];
        }
        acc->forcing += vf * dt;
        acc->martingale += vm;
        acc->trace_q += trace * dt;
        acc->quadratic_variation += mm;
    }

    double const alpha = model_->alpha;
    double diss = 0.0;
    if (scheme_ == Scheme::euler_maruyama)
    {
        for (std::size_t n = 0; n < n_modes; ++n)
        {
            double const u = s.u[n];
            double const v = s.v[n];
            diss += v * v;
            s.u[n] = u + v * dt;
            s.v[n] = v + (-basis.eta(n) * u - 2.0 * alpha * v + drift_[n]) * dt + dm_[n];
        }
        diss *= dt;
    }
    else
    {
        for (std::size_t n = 0; n < n_modes; ++n)
        {
            ModeCache const& mc = modes_[n];
            double const u = s.u[n];
            double const v = s.v[n] + drift_[n] * dt + dm_[n];
            diss += u * u * mc.i11 + 2.0 * u * v * mc.i12 + v * v * mc.i22;
            s.u[n] = mc.prop.a11 * u + mc.prop.a12 * v;
            s.v[n] = mc.prop.a21 * u + mc.prop.a22 * v;
        }
    }
    if (acc != nullptr)
    {
        acc->dissipation += diss;
    }
    s.t = t + dt;

    for (std::size_t n = 0; n < n_modes; ++n)
    {
        if (!std::isfinite(s.u[n]) || !std::isfinite(s.v[n]))
        {
            throw PathFault("state became non-finite at t = " + std::to_string(s.t));
        }
    }
}

Trajectory simulate(ModelSpec const& model, double T, double dt, Scheme scheme, std::uint64_t seed,
                    SimulateOptions const& opts)
{
    Stepper stepper(model, scheme);
    return simulate_with(stepper, T, dt, seed, opts.path_index, opts.record_stride, opts.observer);
}

Trajectory simulate_with(Stepper& stepper, double T, double dt, std::uint64_t seed, std::uint64_t path_index,
                         std::size_t record_stride, std::function<void(State const&)> const& observer)
{
    if (!(T > 0.0) || !(dt > 0.0))
    {
        throw std::invalid_argument("simulate: T and dt must be positive");
    }
    if (record_stride == 0)
    {
        throw std::invalid_argument("simulate: record_stride must be at least 1");
    }
    auto const steps = static_cast<std::size_t>(std::llround(T / dt));
    if (steps == 0)
    {
        throw std::invalid_argument("simulate: T shorter than one step");
    }
    ModelSpec const& model = stepper.model();
    double const threshold = 0.5 * model.truncation;
    stepper.reset_flags();

    Trajectory traj;
    traj.scheme = stepper.scheme();
    traj.dt = dt;
    traj.states.reserve(steps / record_stride + 2);
    traj.accumulators.reserve(steps / record_stride + 2);

    State s = initial_state(model);
    Accumulators acc;
    traj.states.push_back(s);
    traj.accumulators.push_back(acc);
    if (observer)
    {
        observer(s);
    }
    if (h1_norm(s.u.span(), model.basis) > threshold)
    {
        traj.stop.stopped = true;
        traj.stop.tau = 0.0;
        traj.stop.reason = "initial state beyond truncation / 2";
        return traj;
    }

    RngStream rng(seed, make_stream_id(StreamPurpose::path_noise, path_index));
    WienerIncrement dW = stepper.make_increment();
    CovarianceSpec const& cov = stepper.noise().covariance();
    for (std::size_t k = 1; k <= steps; ++k)
    {
        sample_increment_into(cov, dt, rng, dW);
        try
        {
            stepper.step(s, dt, dW, &acc);
        }
        catch (PathFault const& e)
        {
            traj.stop.stopped = true;
            traj.stop.fault = true;
            traj.stop.tau = dt * static_cast<double>(k);
            traj.stop.reason = e.what();
            break;
        }
        s.t = dt * static_cast<double>(k);
        if (observer)
        {
            observer(s);
        }
        bool const exceeded = h1_norm(s.u.span(), model.basis) > threshold;
        if (k % record_stride == 0 || k == steps || exceeded)
        {
            traj.states.push_back(s);
            traj.accumulators.push_back(acc);
        }
        if (exceeded)
        {
            traj.stop.stopped = true;
            traj.stop.tau = s.t;
            traj.stop.reason = "H1 norm exceeded truncation / 2";
            break;
        }
    }
    traj.stop.ramp_entered = stepper.ramp_entered();
    return traj;
}

MomentPair linear_moment_oracle_eta(double eta, double t, double h, double sigma, double alpha, double v0)
{
    if (!(eta > alpha * alpha))
    {
        throw std::invalid_argument("linear_moment_oracle: mode is not underdamped (eta <= alpha^2)");
    }
    if (t < 0.0)
    {
        throw std::invalid_argument("linear_moment_oracle: t must be non-negative");
    }
    double const w = std::sqrt(eta - alpha * alpha);
    MomentPair out;
    out.mean = std::exp(-alpha * t) * (h * std::cos(w * t) + (v0 + alpha * h) / w * std::sin(w * t));
    if (t > 0.0 && sigma != 0.0)
    {
        auto f = [&](double s) {
            double const sn = std::sin(w * s);
            return std::exp(-2.0 * alpha * s) * sn * sn;
        };
        double const integral =
            boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, t, 20, 1e-14);
        out.variance = (sigma / w) * (sigma / w) * integral;
    }
    return out;
}

MomentPair linear_moment_oracle(std::size_t mode, double t, double h, double sigma, double alpha, double c,
                                double v0)
{
    double const k = static_cast<double>(mode) * c;
    return linear_moment_oracle_eta(k * k, t, h, sigma, alpha, v0);
}

double stationary_variance(double eta, double sigma, double alpha)
{
    return sigma * sigma / (4.0 * alpha * eta);
}

std::vector<ModeMoments> mode_moments(double eta, double alpha, double sigma_sq, double forcing, double u0,
                                      double v0, double dt, std::size_t steps, MomentRecursion method)
{
    if (!(dt > 0.0) || !(eta > 0.0) || !(alpha >= 0.0))
    {
        throw std::invalid_argument("mode_moments: need dt > 0, eta > 0, alpha >= 0");
    }
    using Mat = Eigen::Matrix2d;
    using Vec = Eigen::Vector2d;

    Mat const A{{0.0, 1.0}, {-eta, -2.0 * alpha}};
    Mat phi;
    Mat qd;
    Vec shift;
    Mat const G{{0.0, 0.0}, {0.0, sigma_sq}};
    switch (method)
    {
    case MomentRecursion::exact: {
        Mat2 const p = linear_mode_propagator(eta, alpha, dt);
        phi << p.a11, p.a12, p.a21, p.a22;
        // Van Loan: exp([[-A, G], [0, A^T]] dt) = [[., F12], [0, F22]],
        // Phi = F22^T and Q_d = Phi F12.
        Eigen::Matrix4d block = Eigen::Matrix4d::Zero();
        block.topLeftCorner<2, 2>() = -A * dt;
        block.topRightCorner<2, 2>() = G * dt;
        block.bottomRightCorner<2, 2>() = A.transpose() * dt;
        Eigen::Matrix4d const e = block.exp();
        qd = phi * e.topRightCorner<2, 2>();
        qd = 0.5 * (qd + qd.transpose()).eval();
        shift = A.inverse() * (phi - Mat::Identity()) * Vec(0.0, forcing);
        break;
    }
    case MomentRecursion::euler_maruyama:
        phi = Mat::Identity() + A * dt;
        qd = G * dt;
        shift = Vec(0.0, forcing * dt);
        break;
    case MomentRecursion::exponential: {
        Mat2 const p = linear_mode_propagator(eta, alpha, dt);
        phi << p.a11, p.a12, p.a21, p.a22;
        qd = phi * (G * dt) * phi.transpose();
        shift = phi * Vec(0.0, forcing * dt);
        break;
    }
    }

    std::vector<ModeMoments> out;
    out.reserve(steps + 1);
    Vec m(u0, v0);
    Mat P = Mat::Zero();
    for (std::size_t k = 0; k <= steps; ++k)
    {
        ModeMoments row;
        row.t = dt * static_cast<double>(k);
        row.mean = {m(0), m(1)};
        row.cov = {P(0, 0), P(0, 1), P(1, 0), P(1, 1)};
        out.push_back(row);
        m = phi * m + shift;
        P = phi * P * phi.transpose() + qd;
    }
    return out;
}

}  // namespace swave
