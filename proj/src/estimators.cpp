#include "swave/estimators.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace swave {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Runs work(ctx, i) for i in [0, n) on a small pool; ctx is per worker.
template <class MakeCtx, class Work>
void for_each_path(std::size_t n, MakeCtx&& make_ctx, Work&& work)
{
    std::size_t const workers = worker_count(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    auto body = [&] {
        try
        {
            auto ctx = make_ctx();
            for (;;)
            {
                std::size_t const i = next.fetch_add(1);
                if (i >= n)
                {
                    break;
                }
                work(ctx, i);
            }
        }
        catch (...)
        {
            std::lock_guard<std::mutex> lock(mu);
            if (!error)
            {
                error = std::current_exception();
            }
            next.store(n);
        }
    };
    if (workers <= 1)
    {
        body();
    }
    else
    {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w)
        {
            pool.emplace_back(body);
        }
        for (auto& t : pool)
        {
            t.join();
        }
    }
    if (error)
    {
        std::rethrow_exception(error);
    }
}

double h1_norm(Field const& u, SpectralBasis const& basis)
{
    return std::sqrt(h1_norm_sq(u, basis));
}

State difference(State const& a, State const& b)
{
    State d;
    d.t = a.t;
    d.u = a.u;
    d.v = a.v;
    for (std::size_t n = 0; n < d.u.size(); ++n)
    {
        d.u[n] -= b.u[n];
        d.v[n] -= b.v[n];
    }
    return d;
}

// Index on the record grid, or npos when t is off the grid.
std::size_t grid_index(double t, double dt, std::size_t stride)
{
    auto const k = static_cast<std::size_t>(std::llround(t / dt));
    if (k % stride != 0)
    {
        return static_cast<std::size_t>(-1);
    }
    return k / stride;
}

double quantile(std::vector<double> sorted, double q)
{
    std::sort(sorted.begin(), sorted.end());
    double const pos = q * static_cast<double>(sorted.size() - 1);
    auto const i = static_cast<std::size_t>(std::floor(pos));
    double const frac = pos - static_cast<double>(i);
    if (i + 1 >= sorted.size())
    {
        return sorted.back();
    }
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

std::vector<double> mean_over_paths(std::vector<std::vector<double>> const& per_path, std::size_t nt,
                                    std::vector<std::size_t> const* pick = nullptr)
{
    std::vector<double> sum(nt, 0.0);
    std::vector<std::size_t> cnt(nt, 0);
    std::size_t const n = pick ? pick->size() : per_path.size();
    for (std::size_t k = 0; k < n; ++k)
    {
        auto const& row = per_path[pick ? (*pick)[k] : k];
        for (std::size_t i = 0; i < nt; ++i)
        {
            if (!std::isnan(row[i]))
            {
                sum[i] += row[i];
                ++cnt[i];
            }
        }
    }
    for (std::size_t i = 0; i < nt; ++i)
    {
        sum[i] = cnt[i] > 0 ? sum[i] / static_cast<double>(cnt[i]) : kNaN;
    }
    return sum;
}

}  // namespace

std::string verdict_name(Verdict v)
{
    switch (v)
    {
    case Verdict::pass:
        return "pass";
    case Verdict::fail:
        return "fail";
    case Verdict::inconclusive:
        return "inconclusive";
    }
    return "inconclusive";
}

std::size_t EnsembleConfig::steps() const
{
    return static_cast<std::size_t>(std::llround(T / dt));
}

void EnsembleConfig::validate() const
{
    if (!(dt > 0.0) || !std::isfinite(dt))
    {
        throw std::invalid_argument("ensemble.dt must be positive");
    }
    if (!(T > 0.0) || !std::isfinite(T))
    {
        throw std::invalid_argument("ensemble.T must be positive");
    }
    if (n_paths == 0)
    {
        throw std::invalid_argument("ensemble.paths must be at least 1");
    }
    if (record_stride == 0)
    {
        throw std::invalid_argument("ensemble.stride must be at least 1");
    }
    std::size_t const k = steps();
    if (k == 0 || std::abs(static_cast<double>(k) * dt - T) > 1e-9 * T)
    {
        throw std::invalid_argument("ensemble.T must be a whole number of steps of ensemble.dt");
    }
    if (k % record_stride != 0)
    {
        throw std::invalid_argument("ensemble.stride must divide the number of steps T / dt");
    }
}

std::vector<double> EnsembleConfig::record_times() const
{
    std::size_t const n = steps() / record_stride;
    std::vector<double> t(n + 1);
    for (std::size_t i = 0; i <= n; ++i)
    {
        t[i] = dt * static_cast<double>(i * record_stride);
    }
    return t;
}

std::size_t worker_count(std::size_t work_items)
{
    std::size_t n = std::thread::hardware_concurrency();
    if (char const* env = std::getenv("SWAVE_THREADS"))
    {
        char* end = nullptr;
        long const v = std::strtol(env, &end, 10);
        if (end != env && v > 0)
        {
            n = static_cast<std::size_t>(v);
        }
    }
    n = std::max<std::size_t>(n, 1);
    return std::min(n, std::max<std::size_t>(work_items, 1));
}

Functional energy_functional(SpectralBasis const& basis)
{
    return {"energy", [&basis](State const& s, Accumulators const&) { return energy(s, basis); }};
}

Functional pseudo_energy_functional(SpectralBasis const& basis, double lambda)
{
    return {"pseudo_energy",
            [&basis, lambda](State const& s, Accumulators const&) { return pseudo_energy(s, lambda, basis); }};
}

Functional superenergy_functional(ModelSpec const& model, double lambda)
{
    return {lambda == 0.0 ? "superenergy" : "superenergy_lambda",
            [&model, lambda](State const& s, Accumulators const&) {
                return pseudo_energy(s, lambda, model.basis) + superenergy(model.drift, s.u, model.basis);
            }};
}

Functional mode_u_functional(std::size_t mode)
{
    if (mode == 0)
    {
        throw std::invalid_argument("mode index is 1-based");
    }
    return {"u" + std::to_string(mode), [mode](State const& s, Accumulators const&) { return s.u[mode - 1]; }};
}

Functional mode_v_functional(std::size_t mode)
{
    if (mode == 0)
    {
        throw std::invalid_argument("mode index is 1-based");
    }
    return {"v" + std::to_string(mode), [mode](State const& s, Accumulators const&) { return s.v[mode - 1]; }};
}

Functional point_value_functional(SpectralBasis const& basis, double x)
{
    std::vector<double> phi(basis.modes());
    for (std::size_t n = 0; n < phi.size(); ++n)
    {
        phi[n] = basis.phi_at(n + 1, x);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "u_at_%.6g", x);
    return {buf, [phi](State const& s, Accumulators const&) {
                return std::inner_product(phi.begin(), phi.end(), s.u.coeffs.begin(), 0.0);
            }};
}

Functional identity_residual_functional(ModelSpec const& model, QvRule rule)
{
    double const e0 = energy(initial_state(model), model.basis);
    double const alpha = model.alpha;
    return {"identity_residual", [&model, e0, alpha, rule](State const& s, Accumulators const& a) {
                double const qv = rule == QvRule::realized ? a.quadratic_variation : a.trace_q;
                return energy(s, model.basis) -
                       (e0 - 4.0 * alpha * a.dissipation + 2.0 * a.forcing + 2.0 * a.martingale + qv);
            }};
}

SeriesWithError summarize(std::string name, std::vector<double> const& times,
                          std::vector<std::vector<double>> const& per_path, std::size_t stopped)
{
    SeriesWithError s;
    s.name = std::move(name);
    s.times = times;
    s.n_paths = per_path.size();
    s.stopped = stopped;
    std::size_t const nt = times.size();
    s.mean.assign(nt, kNaN);
    s.se.assign(nt, kNaN);
    s.variance.assign(nt, kNaN);
    s.variance_se.assign(nt, kNaN);
    s.n_active.assign(nt, 0);
    for (std::size_t i = 0; i < nt; ++i)
    {
        double sum = 0.0;
        std::size_t n = 0;
        for (auto const& row : per_path)
        {
            if (!std::isnan(row[i]))
            {
                sum += row[i];
                ++n;
            }
        }
        s.n_active[i] = n;
        if (n == 0)
        {
            continue;
        }
        double const mean = sum / static_cast<double>(n);
        double m2 = 0.0, m4 = 0.0;
        for (auto const& row : per_path)
        {
            if (!std::isnan(row[i]))
            {
                double const d = row[i] - mean;
                m2 += d * d;
                m4 += d * d * d * d;
            }
        }
        s.mean[i] = mean;
        if (n < 2)
        {
            continue;
        }
        double const nn = static_cast<double>(n);
        double const var = m2 / (nn - 1.0);
        s.variance[i] = var;
        s.se[i] = std::sqrt(var / nn);
        double const pop_var = m2 / nn;
        s.variance_se[i] = std::sqrt(std::max(0.0, m4 / nn - pop_var * pop_var) / nn);
    }
    return s;
}

SeriesWithError const& EnsembleResult::get(std::string const& name) const
{
    return series.at(index(name));
}

std::size_t EnsembleResult::index(std::string const& name) const
{
    for (std::size_t i = 0; i < series.size(); ++i)
    {
        if (series[i].name == name)
        {
            return i;
        }
    }
    throw std::out_of_range("no series named " + name);
}

EnsembleResult run_ensemble(ModelSpec const& model, EnsembleConfig const& cfg,
                            std::vector<Functional> const& functionals)
{
    cfg.validate();
    model.validate();
    EnsembleResult out;
    out.times = cfg.record_times();
    out.n_paths = cfg.n_paths;
    std::size_t const nt = out.times.size();
    std::size_t const nf = functionals.size();
    out.values.assign(nf, std::vector<std::vector<double>>(cfg.n_paths, std::vector<double>(nt, kNaN)));
    out.tau.assign(cfg.n_paths, kNaN);
    std::vector<char> fault(cfg.n_paths, 0), ramp(cfg.n_paths, 0);

    for_each_path(
        cfg.n_paths, [&] { return Stepper(model, cfg.scheme); },
        [&](Stepper& stepper, std::size_t p) {
            Trajectory const traj =
                simulate_with(stepper, cfg.T, cfg.dt, cfg.master_seed, p, cfg.record_stride, nullptr);
            for (std::size_t r = 0; r < traj.states.size(); ++r)
            {
                State const& s = traj.states[r];
                std::size_t const i = grid_index(s.t, cfg.dt, cfg.record_stride);
                if (i >= nt || (traj.stop.stopped && !(s.t < traj.stop.tau)))
                {
                    continue;
                }
                for (std::size_t f = 0; f < nf; ++f)
                {
                    out.values[f][p][i] = functionals[f].fn(s, traj.accumulators[r]);
                }
            }
            if (traj.stop.stopped)
            {
                out.tau[p] = traj.stop.tau;
                fault[p] = traj.stop.fault ? 1 : 0;
            }
            ramp[p] = traj.stop.ramp_entered ? 1 : 0;
        });

    for (std::size_t p = 0; p < cfg.n_paths; ++p)
    {
        out.stopped += std::isnan(out.tau[p]) ? 0 : 1;
        out.faults += fault[p];
        out.ramp_entered = out.ramp_entered || ramp[p] != 0;
    }
    out.all_stopped = out.stopped == cfg.n_paths;
    for (std::size_t f = 0; f < nf; ++f)
    {
        out.series.push_back(summarize(functionals[f].name, out.times, out.values[f], out.stopped));
    }
    return out;
}

EnvelopeReport verify_envelope(SeriesWithError const& series, std::vector<double> const& envelope)
{
    if (envelope.size() != series.times.size())
    {
        throw std::invalid_argument("verify_envelope: envelope and series lengths differ");
    }
    EnvelopeReport r;
    r.max_excess_se = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < envelope.size(); ++i)
    {
        double const se = std::isnan(series.se[i]) ? 0.0 : series.se[i];
        double const m = series.mean[i];
        if (std::isnan(m))
        {
            continue;
        }
        if (se > 0.0)
        {
            r.max_excess_se = std::max(r.max_excess_se, (m - envelope[i]) / se);
        }
        if (m - 3.0 * se > envelope[i])
        {
            ++r.violations;
            r.violation_times.push_back(series.times[i]);
        }
    }
    r.pass = r.violations == 0;
    return r;
}

DecayFit fit_decay(std::vector<double> const& times, std::vector<double> const& values, double lo, double hi)
{
    if (times.size() != values.size())
    {
        throw std::invalid_argument("fit_decay: size mismatch");
    }
    double const slack = 1e-9 * std::max(1.0, std::abs(hi));
    std::vector<double> x, y;
    for (std::size_t i = 0; i < times.size(); ++i)
    {
        if (times[i] < lo - slack || times[i] > hi + slack)
        {
            continue;
        }
        if (!(values[i] > 0.0))
        {
            throw std::domain_error("fit_decay: non-positive value in the fit window");
        }
        x.push_back(times[i]);
        y.push_back(std::log(values[i]));
    }
    if (x.size() < 2)
    {
        throw std::domain_error("fit_decay: fewer than two points in the fit window");
    }
    double const n = static_cast<double>(x.size());
    double const mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double const my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    DecayFit fit;
    double const slope = sxy / sxx;
    fit.rate = -slope;
    fit.intercept = my - slope * mx;
    fit.window_lo = lo;
    fit.window_hi = hi;
    fit.points = x.size();
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        double const r = y[i] - (fit.intercept + slope * x[i]);
        rss += r * r;
    }
    fit.residual_norm = std::sqrt(rss);
    return fit;
}

DecayFit fit_decay(SeriesWithError const& series, std::optional<std::pair<double, double>> window)
{
    if (series.times.empty())
    {
        throw std::invalid_argument("fit_decay: empty series");
    }
    double const T = series.times.back();
    auto const [lo, hi] = window.value_or(std::make_pair(0.2 * T, T));
    return fit_decay(series.times, series.mean, lo, hi);
}

BootstrapInterval bootstrap_decay(std::vector<std::vector<double>> const& per_path, std::vector<double> const& times,
                                  double lo, double hi, std::size_t resamples, std::uint64_t seed, double level)
{
    if (per_path.empty() || resamples < 2)
    {
        throw std::invalid_argument("bootstrap_decay: need paths and at least two resamples");
    }
    std::size_t const n = per_path.size();
    std::size_t const nt = times.size();
    BootstrapInterval out;
    out.level = level;
    out.resamples = resamples;
    out.estimate = fit_decay(times, mean_over_paths(per_path, nt), lo, hi).rate;
    std::vector<double> rates;
    rates.reserve(resamples);
    std::vector<std::size_t> pick(n);
    for (std::size_t b = 0; b < resamples; ++b)
    {
        RngStream rng(seed, make_stream_id(StreamPurpose::bootstrap, b));
        for (auto& k : pick)
        {
            k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
            k = std::min(k, n - 1);
        }
        rates.push_back(fit_decay(times, mean_over_paths(per_path, nt, &pick), lo, hi).rate);
    }
    double const tail = 0.5 * (1.0 - level);
    out.lo = quantile(rates, tail);
    out.hi = quantile(rates, 1.0 - tail);
    return out;
}

StationaryReport stationary_check(ModelSpec const& model, EnsembleConfig const& cfg,
                                  std::vector<std::pair<double, double>> const& points)
{
    if (!model.is_linear_additive())
    {
        throw std::invalid_argument("stationary check needs a linear drift with additive noise");
    }
    auto const& basis = model.basis;
    double const amp = std::get<AdditiveNoise>(model.noise).amplitude;
    std::vector<double> s2(basis.modes(), 0.0);
    for (auto const& ch : model.covariance.channels)
    {
        for (std::size_t n = 0; n < ch.size(); ++n)
        {
            s2[n] += amp * amp * ch[n] * ch[n];
        }
    }
    for (std::size_t n = 0; n < basis.modes(); ++n)
    {
        if (s2[n] > 0.0 && !(basis.eta(n) > model.alpha * model.alpha))
        {
            throw std::invalid_argument("stationary check: noisy mode " + std::to_string(n + 1) +
                                        " is not underdamped");
        }
    }

    EnsembleConfig c = cfg;
    c.record_stride = c.steps();
    std::vector<Functional> fs;
    for (std::size_t n = 1; n <= basis.modes(); ++n)
    {
        fs.push_back(mode_u_functional(n));
    }
    std::vector<double> xs;
    for (auto const& [x, y] : points)
    {
        xs.push_back(x);
        xs.push_back(y);
    }
    for (double x : xs)
    {
        fs.push_back(point_value_functional(basis, x));
    }
    EnsembleResult const res = run_ensemble(model, c, fs);

    StationaryReport rep;
    rep.T = c.T;
    rep.n_paths = res.n_paths - res.stopped;
    std::size_t const last = res.times.size() - 1;
    bool all_within = true;
    bool precise = true;
    for (std::size_t n = 0; n < basis.modes(); ++n)
    {
        StationaryMode m;
        m.mode = n + 1;
        auto const& s = res.series[n];
        m.sample_variance = s.variance[last];
        m.variance_se = s.variance_se[last];
        m.target = s2[n] / (4.0 * model.alpha * basis.eta(n));
        m.within = std::abs(m.sample_variance - m.target) <= 3.0 * m.variance_se + 1e-12;
        all_within = all_within && m.within;
        if (m.target > 0.0 && !(m.variance_se <= 0.05 * m.target))
        {
            precise = false;
        }
        rep.modes.push_back(m);
    }
    for (std::size_t k = 0; k < points.size(); ++k)
    {
        StationaryPoint pt;
        pt.x = points[k].first;
        pt.y = points[k].second;
        auto const& a = res.values[basis.modes() + 2 * k];
        auto const& b = res.values[basis.modes() + 2 * k + 1];
        double ma = 0.0, mb = 0.0;
        std::size_t cnt = 0;
        for (std::size_t p = 0; p < a.size(); ++p)
        {
            if (!std::isnan(a[p][last]))
            {
                ma += a[p][last];
                mb += b[p][last];
                ++cnt;
            }
        }
        if (cnt >= 2)
        {
            ma /= static_cast<double>(cnt);
            mb /= static_cast<double>(cnt);
            std::vector<double> z;
            for (std::size_t p = 0; p < a.size(); ++p)
            {
                if (!std::isnan(a[p][last]))
                {
                    z.push_back((a[p][last] - ma) * (b[p][last] - mb));
                }
            }
            double const nz = static_cast<double>(z.size());
            double const mz = std::accumulate(z.begin(), z.end(), 0.0) / nz;
            double vz = 0.0;
            for (double q : z)
            {
                vz += (q - mz) * (q - mz);
            }
            vz /= nz - 1.0;
            pt.sample_cov = mz * nz / (nz - 1.0);
            pt.se = std::sqrt(vz / nz);
        }
        for (std::size_t n = 0; n < basis.modes(); ++n)
        {
            pt.target += s2[n] / (4.0 * model.alpha * basis.eta(n)) * basis.phi_at(n + 1, pt.x) *
                         basis.phi_at(n + 1, pt.y);
        }
        pt.within = std::abs(pt.sample_cov - pt.target) <= 3.0 * pt.se + 1e-12;
        all_within = all_within && pt.within;
        if (pt.target != 0.0 && !(pt.se <= 0.05 * std::abs(pt.target)))
        {
            precise = false;
        }
        rep.points.push_back(pt);
    }

    if (rep.n_paths < 100)
    {
        rep.verdict = Verdict::inconclusive;
        rep.reason = "fewer than 100 active paths";
    }
    else if (!precise)
    {
        rep.verdict = Verdict::inconclusive;
        rep.reason = "standard error above 5% of a target";
    }
    else
    {
        rep.verdict = all_within ? Verdict::pass : Verdict::fail;
        rep.reason = all_within ? "all statistics within 3 SE" : "a statistic lies beyond 3 SE";
    }
    return rep;
}

ConditionReportC model_conditions_c(ModelSpec const& model, std::optional<double> lambda)
{
    auto const& basis = model.basis;
    Example2Params p;
    p.eta1 = basis.eta(0);
    p.alpha = model.alpha;
    p.wave_speed_sq = basis.op().wave_speed_sq;
    p.lambda = lambda;
    auto const& cov = model.covariance;
    double forcing_sq = 0.0;
    if (auto const* d = std::get_if<Example2Drift>(&model.drift))
    {
        p.kappa = d->kappa;
    }
    else if (auto const* f = std::get_if<ForcedLinearDrift>(&model.drift))
    {
        p.kappa = 0.0;
        forcing_sq = std::inner_product(f->forcing.begin(), f->forcing.end(), f->forcing.begin(), 0.0);
    }
    else
    {
        throw std::invalid_argument("Conditions C are only evaluated for example2 and forced_linear drifts");
    }
    if (auto const* e = std::get_if<Example2Noise>(&model.noise))
    {
        p.sigma1 = e->sigma1;
        p.sigma2 = e->sigma2;
        p.r0 = r0(cov, basis, 0);
        p.trace_r1 = cov.trace(0);
        p.trace_r2 = cov.trace(1);
    }
    else if (auto const* a = std::get_if<AdditiveNoise>(&model.noise))
    {
        p.sigma1 = 0.0;
        p.sigma2 = a->amplitude;
        for (std::size_t c = 0; c < cov.channel_count(); ++c)
        {
            p.trace_r2 += cov.trace(c);
        }
    }
    else
    {
        throw std::invalid_argument("Conditions C are only evaluated for example2 and additive noise");
    }
    ConditionReportC r = example2_conditions(p);
    r.c1 = forcing_sq;
    return r;
}

CouplingReport coupled_contraction(ModelSpec const& model, State const& xi1, State const& xi2, double lambda,
                                   EnsembleConfig const& cfg)
{
    cfg.validate();
    model.validate();
    auto const& basis = model.basis;
    if (xi1.u.size() != basis.modes() || xi2.u.size() != basis.modes() || xi1.v.size() != basis.modes() ||
        xi2.v.size() != basis.modes())
    {
        throw std::invalid_argument("coupling: initial states do not match the basis");
    }
    CouplingReport rep;
    rep.lambda = lambda;
    rep.target_rate = 0.9 * lambda / 2.0;
    rep.conditions = model_conditions_c(model, lambda);
    if (!rep.conditions->pass)
    {
        throw ConditionFailure("Condition C3 fails at lambda = " + std::to_string(lambda) +
                               ": max(b1 + b2 l, k1 + k2 l) > l^2/2 or lambda > lambda0; contraction is not guaranteed");
    }

    std::vector<double> const times = cfg.record_times();
    std::size_t const nt = times.size();
    std::size_t const steps = cfg.steps();
    double const threshold = 0.5 * model.truncation;
    std::vector<std::vector<double>> diff(cfg.n_paths, std::vector<double>(nt, kNaN));
    std::vector<char> stopped(cfg.n_paths, 0);

    for_each_path(
        cfg.n_paths, [&] { return Stepper(model, cfg.scheme); },
        [&](Stepper& st, std::size_t p) {
            RngStream rng(cfg.master_seed, make_stream_id(StreamPurpose::path_noise, p));
            WienerIncrement dW = st.make_increment();
            State a = xi1, b = xi2;
            a.t = b.t = 0.0;
            diff[p][0] = pseudo_energy(difference(a, b), lambda, basis);
            for (std::size_t k = 1; k <= steps; ++k)
            {
                sample_increment_into(st.noise().covariance(), cfg.dt, rng, dW);
                try
                {
                    st.step(a, cfg.dt, dW);
                    st.step(b, cfg.dt, dW);
                }
                catch (PathFault const&)
                {
                    stopped[p] = 1;
                    return;
                }
                a.t = b.t = cfg.dt * static_cast<double>(k);
                if (h1_norm(a.u, basis) > threshold || h1_norm(b.u, basis) > threshold)
                {
                    stopped[p] = 1;
                    return;
                }
                if (k % cfg.record_stride == 0)
                {
                    diff[p][k / cfg.record_stride] = pseudo_energy(difference(a, b), lambda, basis);
                }
            }
        });

    std::size_t const n_stopped = static_cast<std::size_t>(std::count(stopped.begin(), stopped.end(), 1));
    rep.difference = summarize("pseudo_energy_difference", times, diff, n_stopped);
    auto const& m = rep.difference.mean;
    bool const identically_zero = std::all_of(m.begin(), m.end(), [](double x) { return x == 0.0; });
    if (identically_zero)
    {
        rep.fit.rate = std::numeric_limits<double>::infinity();
        rep.monotone = true;
        rep.verdict = Verdict::pass;
        return rep;
    }
    rep.fit = fit_decay(rep.difference);

    rep.monotone = true;
    for (std::size_t i = 1; i + 1 < nt; ++i)
    {
        double const slack = 3.0 * (rep.difference.se[i] + rep.difference.se[i + 1]);
        if (m[i + 1] > m[i] + slack)
        {
            rep.monotone = false;
        }
    }

    if (model.is_linear_additive())
    {
        State const d0 = difference(xi1, xi2);
        std::vector<double> det(nt);
        for (std::size_t i = 0; i < nt; ++i)
        {
            State d = d0;
            for (std::size_t n = 0; n < basis.modes(); ++n)
            {
                Mat2 const P = linear_mode_propagator(basis.eta(n), model.alpha, times[i]);
                d.u[n] = P.a11 * d0.u[n] + P.a12 * d0.v[n];
                d.v[n] = P.a21 * d0.u[n] + P.a22 * d0.v[n];
            }
            det[i] = pseudo_energy(d, lambda, basis);
        }
        rep.deterministic_fit = fit_decay(times, det, rep.fit.window_lo, rep.fit.window_hi);
    }
    rep.verdict = rep.fit.rate >= rep.target_rate ? Verdict::pass : Verdict::fail;
    return rep;
}

LipschitzReport lipschitz_convergence(ModelSpec const& model, LipschitzFunctionalSpec const& g, State const& xi1,
                                      State const& xi2, EnsembleConfig const& cfg, double early_time,
                                      double late_time)
{
    if (!(g.g_max > 0.0) || !std::isfinite(g.g_max))
    {
        throw std::invalid_argument("lipschitz_convergence: G must be bounded (finite positive g_max)");
    }
    if (g.kind == LipschitzFunctionalSpec::Kind::clipped_mode && (g.mode == 0 || g.mode > model.basis.modes()))
    {
        throw std::invalid_argument("lipschitz_convergence: mode out of range");
    }
    auto const& basis = model.basis;
    Functional G;
    if (g.kind == LipschitzFunctionalSpec::Kind::clipped_energy)
    {
        G = {"G", [&basis, gm = g.g_max](State const& s, Accumulators const&) {
                 return std::min(energy(s, basis), gm);
             }};
    }
    else
    {
        G = {"G", [mode = g.mode, gm = g.g_max](State const& s, Accumulators const&) {
                 return std::clamp(s.u[mode - 1], -gm, gm);
             }};
    }

    ModelSpec m1 = model, m2 = model;
    m1.g = xi1.u;
    m1.h = xi1.v;
    m2.g = xi2.u;
    m2.h = xi2.v;
    // Same seed and path indices: common random numbers make the paired
    // difference far less noisy than two independent means.
    EnsembleResult const r1 = run_ensemble(m1, cfg, {G});
    EnsembleResult const r2 = run_ensemble(m2, cfg, {G});

    LipschitzReport rep;
    rep.times = r1.times;
    std::size_t const nt = rep.times.size();
    std::vector<std::vector<double>> paired(cfg.n_paths, std::vector<double>(nt, kNaN));
    for (std::size_t p = 0; p < cfg.n_paths; ++p)
    {
        for (std::size_t i = 0; i < nt; ++i)
        {
            double const a = r1.values[0][p][i];
            double const b = r2.values[0][p][i];
            if (!std::isnan(a) && !std::isnan(b))
            {
                paired[p][i] = a - b;
            }
        }
    }
    SeriesWithError const d = summarize("paired_gap", rep.times, paired, std::max(r1.stopped, r2.stopped));
    rep.gap.resize(nt);
    rep.gap_se.resize(nt);
    for (std::size_t i = 0; i < nt; ++i)
    {
        rep.gap[i] = std::abs(d.mean[i]);
        rep.gap_se[i] = std::isnan(d.se[i]) ? 0.0 : d.se[i];
    }

    // Rate from the resolved part of the window: gap beyond 3 SE.
    double const T = rep.times.back();
    std::vector<double> ft, fv;
    for (std::size_t i = 0; i < nt; ++i)
    {
        if (rep.times[i] >= 0.2 * T - 1e-12 && rep.gap[i] > 3.0 * rep.gap_se[i] && rep.gap[i] > 0.0)
        {
            ft.push_back(rep.times[i]);
            fv.push_back(rep.gap[i]);
        }
    }
    if (ft.size() >= 2)
    {
        rep.fit = fit_decay(ft, fv, ft.front(), ft.back());
        if (model.is_linear_additive() && g.kind == LipschitzFunctionalSpec::Kind::clipped_energy)
        {
            State const d0 = difference(xi1, xi2);
            std::vector<double> det(nt);
            for (std::size_t i = 0; i < nt; ++i)
            {
                State dd = d0;
                for (std::size_t n = 0; n < basis.modes(); ++n)
                {
                    Mat2 const P = linear_mode_propagator(basis.eta(n), model.alpha, rep.times[i]);
                    dd.u[n] = P.a11 * d0.u[n] + P.a12 * d0.v[n];
                    dd.v[n] = P.a21 * d0.u[n] + P.a22 * d0.v[n];
                }
                det[i] = energy(dd, basis);
            }
            rep.deterministic_fit = fit_decay(rep.times, det, ft.front(), ft.back());
        }
    }

    auto nearest = [&](double t) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < nt; ++i)
        {
            if (std::abs(rep.times[i] - t) < std::abs(rep.times[best] - t))
            {
                best = i;
            }
        }
        return best;
    };
    std::size_t const ie = nearest(early_time), il = nearest(late_time);
    rep.early_time = rep.times[ie];
    rep.late_time = rep.times[il];
    double const ge = rep.gap[ie], gl = rep.gap[il];
    double const sd = 3.0 * std::hypot(rep.gap_se[ie], rep.gap_se[il]);
    bool const same_start = std::all_of(rep.gap.begin(), rep.gap.end(), [](double x) { return x == 0.0; });
    if (same_start)
    {
        rep.verdict = Verdict::pass;
        rep.reason = "identical initial states give a zero gap";
    }
    else if (ge - gl > sd)
    {
        rep.verdict = Verdict::pass;
        rep.reason = "late gap below early gap beyond 3 SE";
    }
    else if (gl - ge > sd)
    {
        rep.verdict = Verdict::fail;
        rep.reason = "late gap above early gap beyond 3 SE";
    }
    else
    {
        rep.verdict = Verdict::inconclusive;
        rep.reason = "early and late gaps not separated by 3 SE";
    }
    return rep;
}

BlockReport as_stability_blocks(ModelSpec const& model, double lambda, EnsembleConfig const& cfg)
{
    cfg.validate();
    model.validate();
    auto const& basis = model.basis;
    {
        Field const zero(basis.modes());
        Field const f0 = apply_drift(model.drift, zero, 0.0, basis);
        NoiseEvaluator ev(model.noise, model.covariance, basis);
        double const q0 = ev.trace(zero.span(), 0.0, 1.0);
        double const fmax = std::abs(*std::max_element(f0.coeffs.begin(), f0.coeffs.end(),
                                                       [](double a, double b) { return std::abs(a) < std::abs(b); }));
        if (fmax > 1e-12 || q0 > 1e-12)
        {
            throw std::invalid_argument("block report needs a null equilibrium: F(0) = 0 and Sigma(0) = 0");
        }
    }
    auto const blocks = static_cast<std::size_t>(std::floor(cfg.T + 1e-9));
    if (blocks < 2)
    {
        throw std::invalid_argument("block report needs T >= 2");
    }
    BlockReport rep;
    rep.blocks = blocks;
    rep.paths = cfg.n_paths;
    rep.lambda = lambda;
    rep.reference_rate = lambda / 8.0;

    auto jl = [&](State const& s) { return pseudo_energy(s, lambda, basis) + superenergy(model.drift, s.u, basis); };
    rep.ej0 = jl(initial_state(model));

    std::vector<std::vector<double>> sup(cfg.n_paths, std::vector<double>(blocks, kNaN));
    for_each_path(
        cfg.n_paths, [&] { return Stepper(model, cfg.scheme); },
        [&](Stepper& st, std::size_t p) {
            auto& row = sup[p];
            std::vector<double> acc(blocks, 0.0);
            auto observer = [&](State const& s) {
                double const j = jl(s);
                double const t = s.t;
                auto b = static_cast<std::size_t>(std::floor(t + 1e-9));
                if (b < blocks)
                {
                    acc[b] = std::max(acc[b], j);
                }
                if (b >= 1 && std::abs(t - static_cast<double>(b)) < 1e-9 && b - 1 < blocks)
                {
                    acc[b - 1] = std::max(acc[b - 1], j);
                }
            };
            Trajectory const tr = simulate_with(st, cfg.T, cfg.dt, cfg.master_seed, p, cfg.steps(), observer);
            // Blocks that reach past the stopping time are censored.
            double const tau = tr.stop.stopped ? tr.stop.tau : std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < blocks; ++b)
            {
                if (static_cast<double>(b + 1) < tau)
                {
                    row[b] = acc[b];
                }
            }
        });

    rep.mean_block_sup = mean_over_paths(sup, blocks);
    if (rep.ej0 == 0.0)
    {
        bool const all_zero = std::all_of(sup.begin(), sup.end(), [](auto const& r) {
            return std::all_of(r.begin(), r.end(), [](double x) { return std::isnan(x) || x == 0.0; });
        });
        rep.dominated_fraction = all_zero ? 1.0 : 0.0;
        rep.verdict = all_zero ? Verdict::pass : Verdict::fail;
        return rep;
    }
    for (std::size_t n = 0; n < blocks; ++n)
    {
        double const ref = rep.ej0 * std::exp(-static_cast<double>(n) * lambda / 4.0);
        if (!std::isnan(rep.mean_block_sup[n]))
        {
            rep.c0 = std::max(rep.c0, rep.mean_block_sup[n] / ref);
        }
    }
    std::size_t const onset = (blocks + 1) / 2;
    std::size_t dominated = 0, counted = 0;
    std::vector<double> rates;
    std::vector<double> idx(blocks);
    std::iota(idx.begin(), idx.end(), 0.0);
    for (auto const& row : sup)
    {
        bool ok = true;
        bool any = false;
        for (std::size_t n = onset; n < blocks; ++n)
        {
            if (std::isnan(row[n]))
            {
                continue;
            }
            any = true;
            double const env = rep.c0 * rep.ej0 * std::exp(-static_cast<double>(n) * lambda / 8.0);
            ok = ok && row[n] <= env;
        }
        if (any)
        {
            ++counted;
            dominated += ok ? 1 : 0;
        }
        std::vector<double> t, v;
        for (std::size_t n = 0; n < blocks; ++n)
        {
            if (!std::isnan(row[n]) && row[n] > 0.0)
            {
                t.push_back(idx[n]);
                v.push_back(row[n]);
            }
        }
        if (t.size() >= 2)
        {
            rates.push_back(fit_decay(t, v, t.front(), t.back()).rate);
        }
    }
    rep.dominated_fraction = counted > 0 ? static_cast<double>(dominated) / static_cast<double>(counted) : 0.0;
    rep.median_rate = rates.empty() ? 0.0 : quantile(rates, 0.5);
    rep.verdict = counted == 0 ? Verdict::inconclusive
                               : (rep.dominated_fraction >= 0.95 ? Verdict::pass : Verdict::fail);
    return rep;
}

BoundednessReport boundedness_report(SeriesWithError const& series, std::vector<std::vector<double>> const& per_path,
                                     double transient_fraction)
{
    BoundednessReport rep;
    rep.stopped = series.stopped;
    std::size_t const nt = series.times.size();
    if (nt == 0)
    {
        throw std::invalid_argument("boundedness_report: empty series");
    }
    rep.ej0 = series.mean[0];
    for (double m : series.mean)
    {
        if (!std::isnan(m))
        {
            rep.sup_mean = std::max(rep.sup_mean, m);
        }
    }
    double total = 0.0;
    std::size_t n = 0;
    for (auto const& row : per_path)
    {
        double s = 0.0;
        bool any = false;
        for (double x : row)
        {
            if (!std::isnan(x))
            {
                s = std::max(s, x);
                any = true;
            }
        }
        if (any)
        {
            total += s;
            ++n;
        }
    }
    rep.mean_path_sup = n > 0 ? total / static_cast<double>(n) : 0.0;
    rep.k1 = rep.ej0 > 0.0 ? rep.sup_mean / rep.ej0 : 0.0;

    double const T = series.times.back();
    double const t0 = transient_fraction * T;
    rep.non_increasing = true;
    double floor_value = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nt; ++i)
    {
        if (series.times[i] < t0 - 1e-12 || std::isnan(series.mean[i]))
        {
            continue;
        }
        double const se = std::isnan(series.se[i]) ? 0.0 : series.se[i];
        if (series.mean[i] - 3.0 * se > floor_value)
        {
            rep.non_increasing = false;
        }
        floor_value = std::min(floor_value, series.mean[i] + 3.0 * se);
    }
    bool const positive = std::all_of(series.mean.begin(), series.mean.end(), [](double m) { return m > 0.0; });
    if (positive)
    {
        rep.fit = fit_decay(series);
    }
    bool const finite = std::isfinite(rep.sup_mean) && std::isfinite(rep.mean_path_sup);
    rep.verdict = finite && rep.non_increasing && rep.stopped == 0 ? Verdict::pass : Verdict::fail;
    return rep;
}

IdentityReport identity_refinement(ModelSpec const& model, EnsembleConfig const& cfg, std::vector<double> const& dts,
                                   QvRule rule)
{
    if (dts.size() < 2)
    {
        throw std::invalid_argument("identity_refinement: need at least two step sizes");
    }
    IdentityReport rep;
    Functional const res = identity_residual_functional(model, rule);
    for (double dt : dts)
    {
        EnsembleConfig c = cfg;
        c.dt = dt;
        c.record_stride = 1;
        c.record_stride = c.steps();
        EnsembleResult const r = run_ensemble(model, c, {res});
        std::vector<std::vector<double>> absres(r.values[0].size());
        for (std::size_t p = 0; p < absres.size(); ++p)
        {
            absres[p] = {std::abs(r.values[0][p].back())};
        }
        SeriesWithError const s = summarize("abs_residual", {c.T}, absres, r.stopped);
        rep.rows.push_back({dt, s.mean[0], s.se[0]});
    }
    rep.ratios_ok = true;
    for (std::size_t i = 0; i + 1 < rep.rows.size(); ++i)
    {
        double const ratio = rep.rows[i].mean_abs / rep.rows[i + 1].mean_abs;
        rep.ratios.push_back(ratio);
        rep.ratios_ok = rep.ratios_ok && std::abs(ratio - 2.0) <= 0.6;
    }
    rep.verdict = rep.ratios_ok ? Verdict::pass : Verdict::fail;
    return rep;
}

SandwichReport sandwich_check(SpectralBasis const& basis, std::vector<double> const& lambdas, std::size_t n_states,
                              std::uint64_t seed)
{
    SandwichReport rep;
    rep.lambdas = lambdas;
    rep.states = n_states;
    double const eta1 = basis.eta(0);
    std::vector<EquivalenceConstants> consts;
    for (double l : lambdas)
    {
        consts.push_back(equivalence_constants(l, eta1));
    }
    RngStream rng(seed, make_stream_id(StreamPurpose::diagnostic, 0));
    State s;
    s.u = Field(basis.modes());
    s.v = Field(basis.modes());
    for (std::size_t k = 0; k < n_states; ++k)
    {
        // Log-uniform scales in [1e-2, 1e2] so u- or v-dominated states occur.
        double const su = std::pow(10.0, 4.0 * rng.uniform() - 2.0);
        double const sv = std::pow(10.0, 4.0 * rng.uniform() - 2.0);
        for (std::size_t n = 0; n < basis.modes(); ++n)
        {
            s.u[n] = su * rng.normal() / std::sqrt(basis.eta(n));
            s.v[n] = sv * rng.normal();
        }
        double const e = energy(s, basis);
        for (std::size_t i = 0; i < lambdas.size(); ++i)
        {
            double const el = pseudo_energy(s, lambdas[i], basis);
            double const ex = pseudo_energy_expanded(s, lambdas[i], basis);
            double const tol = 1e-12 * e;
            if (consts[i].lower * e > el + tol || el > consts[i].upper * e + tol)
            {
                ++rep.violations;
            }
            rep.max_expansion_error = std::max(rep.max_expansion_error, std::abs(el - ex) / std::max(1.0, e));
        }
    }
    rep.pass = rep.violations == 0 && rep.max_expansion_error <= 1e-12;
    return rep;
}

}  // namespace swave
