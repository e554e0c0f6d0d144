#include "swave/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace swave {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Collects written files for the manifest.
class Output
{
  public:
    explicit Output(OutputSpec const& spec) : spec_(spec), dir_(spec.directory) {}

    void write(std::string const& name, std::string const& content)
    {
        fs::create_directories(dir_);
        std::ofstream f(dir_ / name, std::ios::binary);
        if (!f)
        {
            throw std::runtime_error("cannot write " + (dir_ / name).string());
        }
        f << content;
        files_.push_back(name);
    }

    void csv(std::string const& name, std::vector<std::string> const& header,
             std::vector<std::vector<double>> const& rows)
    {
        if (spec_.wants("csv"))
        {
            write(name, csv_table(header, rows));
        }
    }

    void json_file(std::string const& name, json const& j)
    {
        if (spec_.wants("json"))
        {
            write(name, j.dump(2) + "\n");
        }
    }

    std::vector<std::string> const& files() const { return files_; }

  private:
    OutputSpec const& spec_;
    fs::path dir_;
    std::vector<std::string> files_;
};

// JSON has no inf or nan; keep them readable as strings.
json num(double x)
{
    if (std::isfinite(x))
    {
        return x;
    }
    if (std::isnan(x))
    {
        return "nan";
    }
    return x > 0 ? "inf" : "-inf";
}

json nums(std::vector<double> const& v)
{
    json a = json::array();
    for (double x : v)
    {
        a.push_back(num(x));
    }
    return a;
}

std::string csv_field(std::string const& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos)
    {
        return s;
    }
    std::string q = "\"";
    for (char c : s)
    {
        q += c;
        if (c == '"')
        {
            q += '"';
        }
    }
    return q + "\"";
}

double trace_q_additive(ModelSpec const& m)
{
    double const amp = std::get<AdditiveNoise>(m.noise).amplitude;
    double q = 0.0;
    for (std::size_t c = 0; c < m.covariance.channel_count(); ++c)
    {
        q += m.covariance.trace(c);
    }
    return amp * amp * q;
}

double forcing_norm_sq(ModelSpec const& m)
{
    auto const* f = std::get_if<ForcedLinearDrift>(&m.drift);
    if (!f)
    {
        return 0.0;
    }
    double s = 0.0;
    for (double x : f->forcing)
    {
        s += x * x;
    }
    return s;
}

std::vector<double> mode_noise_sq(ModelSpec const& m)
{
    double const amp = std::get<AdditiveNoise>(m.noise).amplitude;
    std::vector<double> s2(m.basis.modes(), 0.0);
    for (auto const& ch : m.covariance.channels)
    {
        for (std::size_t n = 0; n < ch.size() && n < s2.size(); ++n)
        {
            s2[n] += amp * amp * ch[n] * ch[n];
        }
    }
    return s2;
}

void require_linear_additive(ModelSpec const& m, std::string const& what)
{
    if (!m.is_linear_additive())
    {
        throw ConfigError("model.drift", what + " needs a linear drift with additive noise");
    }
}

double default_lambda(RunConfig const& cfg)
{
    return cfg.analysis.lambda.value_or(lambda0(cfg.model.alpha, cfg.model.basis.eta(0)));
}

Functional named_functional(std::string const& name, RunConfig const& cfg)
{
    auto const& m = cfg.model;
    if (name == "energy")
    {
        return energy_functional(m.basis);
    }
    if (name == "pseudo_energy")
    {
        return pseudo_energy_functional(m.basis, default_lambda(cfg));
    }
    if (name == "superenergy")
    {
        return superenergy_functional(m, 0.0);
    }
    if (name == "residual")
    {
        Functional f = identity_residual_functional(m, cfg.analysis.qv_rule);
        f.name = "residual";
        return f;
    }
    if (name.size() > 1 && (name[0] == 'u' || name[0] == 'v') &&
        name.find_first_not_of("0123456789", 1) == std::string::npos)
    {
        std::size_t const mode = std::stoul(name.substr(1));
        if (mode >= 1 && mode <= m.basis.modes())
        {
            return name[0] == 'u' ? mode_u_functional(mode) : mode_v_functional(mode);
        }
    }
    throw ConfigError("analysis.functionals",
                      "unknown functional '" + name + "' (energy, pseudo_energy, superenergy, residual, uN, vN)");
}

json fit_json(DecayFit const& f)
{
    return {{"rate", num(f.rate)},         {"intercept", num(f.intercept)},          {"window", nums({f.window_lo, f.window_hi})},
            {"points", f.points},          {"residual_norm", num(f.residual_norm)}};
}

json interval_json(LambdaInterval const& i)
{
    if (i.empty)
    {
        return {{"empty", true}};
    }
    return {{"empty", false}, {"lo", num(i.lo)}, {"hi", num(i.hi)}, {"lo_open", i.lo_open}};
}

json report_b_json(ConditionReportB const& r)
{
    return {{"family", "example1"},
            {"beta", nums({r.beta1, r.beta2, r.beta3})},
            {"gamma", nums({r.gamma1, r.gamma2, r.gamma3})},
            {"delta1", num(r.delta1)},
            {"lambda", num(r.lambda)},
            {"strict", r.strict},
            {"first", num(r.first)},
            {"second", num(r.second)},
            {"first_ok", r.first_ok},
            {"second_ok", r.second_ok},
            {"pass", r.pass},
            {"theta", r.theta},
            {"rho", r.rho},
            {"theta_integrable", r.theta_integrable},
            {"rho_integrable", r.rho_integrable},
            {"admissible", interval_json(r.admissible)}};
}

json report_c_json(ConditionReportC const& r)
{
    json j = {{"family", "example2"},
              {"b1", num(r.b1)},
              {"c1", num(r.c1)},
              {"b2", num(r.b2)},
              {"c2", num(r.c2)},
              {"k1", num(r.k1)},
              {"k2", num(r.k2)},
              {"b1_direct", num(r.b1_direct)},
              {"lambda0", num(r.lambda0)},
              {"b_ok", r.b_ok},
              {"k_ok", r.k_ok},
              {"pass", r.pass},
              {"admissible", interval_json(r.admissible)},
              {"note", r.note}};
    j["lambda"] = r.lambda ? num(*r.lambda) : json(nullptr);
    return j;
}

Example1Params example1_params(RunConfig const& cfg)
{
    auto const& m = cfg.model;
    auto const& d = std::get<Example1Drift>(m.drift);
    Example1Params p;
    p.kappa = d.kappa;
    p.n = d.n;
    p.m = d.m;
    p.beta0 = d.beta0;
    p.beta_decay = d.beta_decay;
    double const top = d.beta0 != 0.0 ? d.m : d.n;
    if (auto const* e = std::get_if<Example1Noise>(&m.noise))
    {
        p.zeta0 = e->zeta0;
        p.zeta_decay = e->zeta_decay;
        p.delta = e->delta;
        p.k = e->power;
    }
    else if (auto const* l = std::get_if<LinearStateNoise>(&m.noise))
    {
        // Sigma = zeta0 u is the power-1 member; delta is free inside the
        // admissible range, take its midpoint.
        p.zeta0 = l->zeta0;
        p.k = 1.0;
        if (!(top > 1.0))
        {
            throw ConfigError("model.noise.kind", "linear_state noise needs n > 1 (or m > 1) for Conditions B");
        }
        p.delta = 0.25 * (1.0 - 1.0 / top);
    }
    else if (std::holds_alternative<AdditiveNoise>(m.noise))
    {
        p.zeta0 = 0.0;
        p.k = 0.5 * top * (1.0 - 2.0 * p.delta);
    }
    else
    {
        throw ConfigError("model.noise.kind", "example2 noise is not covered by Conditions B");
    }
    p.r0 = m.covariance.channel_count() > 0 ? r0(m.covariance, m.basis, 0) : 0.0;
    p.eps = cfg.analysis.eps;
    p.eps1 = cfg.analysis.eps1;
    p.eps2 = cfg.analysis.eps2;
    double const l0 = lambda0(m.alpha, m.basis.eta(0));
    p.lambda = cfg.analysis.lambda.value_or(l0);
    p.lambda_max = cfg.analysis.lambda_max.value_or(l0);
    return p;
}

json conditions_json(RunConfig const& cfg, bool& pass)
{
    auto const& m = cfg.model;
    if (std::holds_alternative<Example1Drift>(m.drift))
    {
        Example1Params const p = example1_params(cfg);
        ConditionReportB const r = example1_conditions(p);
        pass = r.pass;
        json j = report_b_json(r);
        j["kappa_threshold"] = num(example1_kappa_threshold(p));
        j["r0"] = num(p.r0);
        return j;
    }
    if (std::holds_alternative<Example2Drift>(m.drift))
    {
        ConditionReportC const r = model_conditions_c(m, cfg.analysis.lambda);
        pass = r.pass;
        return report_c_json(r);
    }
    throw ConfigError("model.drift.kind", "check-conditions supports example1 and example2 drifts");
}

struct VerifyResult
{
    Verdict verdict = Verdict::inconclusive;
    json evidence;
};

VerifyResult verify_energy_identity(RunConfig const& cfg, Output& out)
{
    auto const& m = cfg.model;
    if (m.covariance.is_zero())
    {
        Trajectory const tr = simulate(m, cfg.ensemble.T, cfg.ensemble.dt, cfg.ensemble.scheme,
                                       cfg.ensemble.master_seed, {0, cfg.ensemble.record_stride, nullptr});
        std::vector<double> const res = energy_identity_residual(tr, m, cfg.analysis.qv_rule);
        double worst = 0.0;
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < res.size(); ++i)
        {
            worst = std::max(worst, std::abs(res[i]));
            rows.push_back({tr.states[i].t, res[i]});
        }
        out.csv("energy_identity.csv", {"time", "residual"}, rows);
        double const tol = 1e-8;
        return {worst < tol ? Verdict::pass : Verdict::fail,
                {{"deterministic", true}, {"max_abs_residual", num(worst)}, {"tolerance", tol},
                 {"scheme", scheme_name(cfg.ensemble.scheme)}}};
    }
    if (cfg.ensemble.scheme == Scheme::exponential && cfg.analysis.qv_rule == QvRule::realized)
    {
        // Kick-then-flow books every term of the step, so the balance holds
        // path by path up to rounding; a dt sweep would only measure rounding.
        EnsembleResult const res = run_ensemble(
            m, cfg.ensemble, {identity_residual_functional(m, QvRule::realized), energy_functional(m.basis)});
        double worst = 0.0, scale = 1.0;
        for (std::size_t p = 0; p < res.n_paths; ++p)
        {
            for (std::size_t i = 0; i < res.times.size(); ++i)
            {
                double const r = res.values[0][p][i];
                if (!std::isnan(r))
                {
                    worst = std::max(worst, std::abs(r));
                    scale = std::max(scale, res.values[1][p][i]);
                }
            }
        }
        auto const& s = res.series[0];
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < s.times.size(); ++i)
        {
            rows.push_back({s.times[i], s.mean[i], s.se[i]});
        }
        out.csv("energy_identity.csv", {"time", "mean_residual", "se_residual"}, rows);
        double const tol = 1e-8 * scale;
        return {worst < tol ? Verdict::pass : Verdict::fail,
                {{"deterministic", false}, {"exact_balance", true}, {"max_abs_residual", num(worst)},
                 {"tolerance", tol}, {"scheme", "exponential"}, {"qv_rule", "realized"}, {"stopped", res.stopped}}};
    }
    std::vector<double> dts = cfg.analysis.dts;
    if (dts.empty())
    {
        dts = {1e-2, 5e-3, 2.5e-3};
    }
    IdentityReport const r = identity_refinement(m, cfg.ensemble, dts, cfg.analysis.qv_rule);
    json rows = json::array();
    std::vector<std::vector<double>> csv;
    for (auto const& row : r.rows)
    {
        rows.push_back({{"dt", row.dt}, {"mean_abs_residual", num(row.mean_abs)}, {"se", num(row.se)}});
        csv.push_back({row.dt, row.mean_abs, row.se});
    }
    out.csv("energy_identity.csv", {"dt", "mean_abs_residual", "se"}, csv);
    return {r.verdict,
            {{"deterministic", false}, {"rows", rows}, {"ratios", nums(r.ratios)}, {"ratio_band", nums({1.4, 2.6})},
             {"qv_rule", cfg.analysis.qv_rule == QvRule::realized ? "realized" : "compensator"}}};
}

VerifyResult verify_envelope_kind(RunConfig const& cfg, Output& out)
{
    auto const& m = cfg.model;
    require_linear_additive(m, "verify envelope");
    double const l0 = lambda0(m.alpha, m.basis.eta(0));
    double const lambda = default_lambda(cfg);
    if (lambda > l0 * (1.0 + 1e-12))
    {
        throw ConfigError("analysis.lambda", "must not exceed lambda0 = " + std::to_string(l0));
    }
    double const alpha1 = cfg.analysis.alpha1.value_or(0.9 * lambda);
    if (!(alpha1 < lambda))
    {
        throw ConfigError("analysis.alpha1", "must lie in (0, lambda)");
    }
    EnsembleResult const res = run_ensemble(m, cfg.ensemble, {pseudo_energy_functional(m.basis, lambda)});
    auto const& s = res.series[0];
    double const e0 = pseudo_energy(initial_state(m), lambda, m.basis);
    double const f2 = forcing_norm_sq(m), q = trace_q_additive(m);
    std::vector<double> env;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < s.times.size(); ++i)
    {
        env.push_back(exp_envelope_const(s.times[i], e0, {lambda, alpha1}, f2, q));
        rows.push_back({s.times[i], s.mean[i], s.se[i], env.back()});
    }
    out.csv("envelope.csv", {"time", "mean_pseudo_energy", "se_pseudo_energy", "envelope"}, rows);
    EnvelopeReport const r = verify_envelope(s, env);
    return {r.pass ? Verdict::pass : Verdict::fail,
            {{"lambda", lambda},
             {"alpha1", alpha1},
             {"forcing_norm_sq", f2},
             {"trace_q", q},
             {"violations", r.violations},
             {"violation_times", nums(r.violation_times)},
             {"max_excess_se", num(r.max_excess_se)},
             {"stopped", res.stopped}}};
}

VerifyResult verify_lemma33(RunConfig const& cfg, Output&)
{
    double const eta1 = cfg.model.basis.eta(0);
    std::vector<double> lambdas = cfg.analysis.lambdas;
    if (lambdas.empty())
    {
        lambdas = {0.1, 0.25, lambda_for_mu_fraction(0.5, eta1), lambda_for_mu_fraction(0.9, eta1)};
    }
    SandwichReport const r = sandwich_check(cfg.model.basis, lambdas, cfg.analysis.states, cfg.ensemble.master_seed);
    json consts = json::array();
    for (double l : lambdas)
    {
        auto const c = equivalence_constants(l, eta1);
        consts.push_back({{"lambda", l}, {"mu1", c.mu1}, {"lower", c.lower}, {"upper", c.upper}});
    }
    return {r.pass ? Verdict::pass : Verdict::fail,
            {{"states", r.states},
             {"violations", r.violations},
             {"max_expansion_error", num(r.max_expansion_error)},
             {"constants", consts}}};
}

VerifyResult verify_stationary(RunConfig const& cfg, Output& out)
{
    auto const& m = cfg.model;
    require_linear_additive(m, "verify stationary");
    auto points = cfg.analysis.points;
    if (points.empty())
    {
        double const mid = 0.5 * m.basis.length();
        points = {{mid, mid}};
    }
    StationaryReport const r = stationary_check(m, cfg.ensemble, points);
    json modes = json::array();
    std::vector<std::vector<double>> rows;
    for (auto const& md : r.modes)
    {
        modes.push_back({{"mode", md.mode},
                         {"sample_variance", num(md.sample_variance)},
                         {"variance_se", num(md.variance_se)},
                         {"target", num(md.target)},
                         {"within_3se", md.within}});
        rows.push_back({static_cast<double>(md.mode), md.sample_variance, md.variance_se, md.target});
    }
    out.csv("stationary_modes.csv", {"mode", "sample_variance", "variance_se", "target"}, rows);
    json pts = json::array();
    for (auto const& p : r.points)
    {
        pts.push_back({{"x", p.x},
                       {"y", p.y},
                       {"sample_cov", num(p.sample_cov)},
                       {"se", num(p.se)},
                       {"target", num(p.target)},
                       {"within_3se", p.within}});
    }
    return {r.verdict, {{"T", r.T}, {"active_paths", r.n_paths}, {"modes", modes}, {"points", pts}, {"reason", r.reason}}};
}

State second_start(RunConfig const& cfg)
{
    std::size_t const n = cfg.model.basis.modes();
    if (cfg.analysis.xi2_u.size() > n || cfg.analysis.xi2_v.size() > n)
    {
        throw ConfigError("analysis.xi2_u", "more coefficients than model.modes");
    }
    State s;
    s.u = Field(n);
    s.v = Field(n);
    std::copy(cfg.analysis.xi2_u.begin(), cfg.analysis.xi2_u.end(), s.u.coeffs.begin());
    std::copy(cfg.analysis.xi2_v.begin(), cfg.analysis.xi2_v.end(), s.v.coeffs.begin());
    return s;
}

VerifyResult verify_coupling(RunConfig const& cfg, Output& out)
{
    if (!cfg.analysis.lambda)
    {
        throw ConfigError("analysis.lambda", "required for verify coupling");
    }
    CouplingReport r;
    try
    {
        r = coupled_contraction(cfg.model, initial_state(cfg.model), second_start(cfg), *cfg.analysis.lambda,
                                cfg.ensemble);
    }
    catch (std::invalid_argument const& e)
    {
        throw ConfigError("model", e.what());
    }
    auto const& s = r.difference;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < s.times.size(); ++i)
    {
        rows.push_back({s.times[i], s.mean[i], s.se[i]});
    }
    out.csv("coupling.csv", {"time", "mean_pseudo_energy_difference", "se"}, rows);
    json ev = {{"lambda", r.lambda},
               {"target_rate", r.target_rate},
               {"fit", fit_json(r.fit)},
               {"monotone", r.monotone},
               {"stopped", s.stopped},
               {"conditions", report_c_json(*r.conditions)}};
    if (r.deterministic_fit)
    {
        ev["deterministic_fit"] = fit_json(*r.deterministic_fit);
    }
    return {r.verdict, ev};
}

VerifyResult verify_lipschitz(RunConfig const& cfg, Output& out)
{
    LipschitzFunctionalSpec g;
    g.g_max = cfg.analysis.g_max;
    LipschitzReport const r = lipschitz_convergence(cfg.model, g, initial_state(cfg.model), second_start(cfg),
                                                    cfg.ensemble, cfg.analysis.early, cfg.analysis.late);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < r.times.size(); ++i)
    {
        rows.push_back({r.times[i], r.gap[i], r.gap_se[i]});
    }
    out.csv("lipschitz.csv", {"time", "gap", "se"}, rows);
    json ev = {{"g_max", g.g_max},
               {"early_time", r.early_time},
               {"late_time", r.late_time},
               {"fit", fit_json(r.fit)},
               {"reason", r.reason}};
    if (r.deterministic_fit)
    {
        ev["deterministic_fit"] = fit_json(*r.deterministic_fit);
    }
    return {r.verdict, ev};
}

VerifyResult verify_stability(RunConfig const& cfg, Output& out)
{
    auto const& m = cfg.model;
    double const lambda = default_lambda(cfg);
    EnsembleResult const res = run_ensemble(m, cfg.ensemble, {superenergy_functional(m, 0.0)});
    auto const& s = res.series[0];
    double const T = s.times.back();
    auto const window = cfg.analysis.fit_window.value_or(std::make_pair(0.2 * T, T));
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < s.times.size(); ++i)
    {
        rows.push_back({s.times[i], s.mean[i], s.se[i]});
    }
    out.csv("stability_mean.csv", {"time", "mean_superenergy", "se_superenergy"}, rows);
    BootstrapInterval const ci = bootstrap_decay(res.values[0], s.times, window.first, window.second,
                                                 cfg.analysis.resamples, cfg.ensemble.master_seed);
    BlockReport const b = as_stability_blocks(m, lambda, cfg.ensemble);
    Verdict v = Verdict::inconclusive;
    if (ci.lo > 0.0 && b.verdict == Verdict::pass)
    {
        v = Verdict::pass;
    }
    else if (ci.hi <= 0.0 || b.verdict == Verdict::fail)
    {
        v = Verdict::fail;
    }
    return {v,
            {{"mean_square",
              {{"estimate", num(ci.estimate)}, {"ci", nums({ci.lo, ci.hi})}, {"level", ci.level},
               {"resamples", ci.resamples}, {"window", nums({window.first, window.second})}}},
             {"blocks",
              {{"lambda", lambda},
               {"blocks", b.blocks},
               {"c0", num(b.c0)},
               {"ej0", num(b.ej0)},
               {"dominated_fraction", num(b.dominated_fraction)},
               {"median_rate", num(b.median_rate)},
               {"reference_rate", num(b.reference_rate)},
               {"verdict", verdict_name(b.verdict)}}},
             {"stopped", res.stopped}}};
}

VerifyResult verify_boundedness(RunConfig const& cfg, Output& out)
{
    auto const& m = cfg.model;
    EnsembleResult const res = run_ensemble(m, cfg.ensemble, {superenergy_functional(m, 0.0)});
    auto const& s = res.series[0];
    BoundednessReport const r = boundedness_report(s, res.values[0]);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < s.times.size(); ++i)
    {
        rows.push_back({s.times[i], s.mean[i], s.se[i]});
    }
    out.csv("boundedness.csv", {"time", "mean_superenergy", "se_superenergy"}, rows);
    json ev = {{"sup_mean", num(r.sup_mean)}, {"mean_path_sup", num(r.mean_path_sup)},
               {"ej0", num(r.ej0)},           {"k1", num(r.k1)},
               {"fit", fit_json(r.fit)},      {"non_increasing", r.non_increasing},
               {"stopped", r.stopped}};
    if (std::holds_alternative<Example1Drift>(m.drift))
    {
        bool pass = false;
        ev["conditions"] = conditions_json(cfg, pass);
    }
    return {r.verdict, ev};
}

VerifyResult verify_appendix_moment(RunConfig const& cfg, Output& out)
{
    auto const& m = cfg.model;
    if (m.covariance.channel_count() == 0)
    {
        throw ConfigError("model.noise.channels", "appendix-moment needs a covariance");
    }
    double const amp = cfg.analysis.sigma;
    SigmaSchedule const sigma = [amp](double, double) { return amp; };
    bool ok = true;
    json reports = json::array();
    std::vector<std::vector<double>> rows;
    for (int p : cfg.analysis.powers)
    {
        MomentDiagnosticConfig c;
        c.p = p;
        c.paths = cfg.ensemble.n_paths;
        c.horizon = cfg.analysis.horizon;
        if (!cfg.analysis.dts.empty())
        {
            c.dts = cfg.analysis.dts;
        }
        c.seed = cfg.ensemble.master_seed;
        MomentDiagnosticReport r;
        try
        {
            r = martingale_moment_diagnostic(sigma, m.covariance, m.basis, c);
        }
        catch (std::invalid_argument const& e)
        {
            throw ConfigError("analysis.powers", e.what());
        }
        ok = ok && r.ratio_bounded && r.isometry_ok;
        json jr = json::array();
        for (auto const& row : r.rows)
        {
            jr.push_back({{"dt", row.dt},
                          {"sup_moment", num(row.sup_moment)},
                          {"sup_moment_se", num(row.sup_moment_se)},
                          {"terminal_moment", num(row.terminal_moment)},
                          {"terminal_moment_se", num(row.terminal_moment_se)},
                          {"sigma_moment", num(row.sigma_moment)},
                          {"ratio", num(row.ratio)},
                          {"isometry_target", num(row.isometry_target)}});
            rows.push_back({static_cast<double>(p), row.dt, row.sup_moment, row.sup_moment_se, row.terminal_moment,
                            row.sigma_moment, row.ratio});
        }
        reports.push_back({{"p", p},
                           {"rows", jr},
                           {"ratio_spread", num(r.ratio_spread)},
                           {"ratio_bounded", r.ratio_bounded},
                           {"isometry_ok", r.isometry_ok}});
    }
    out.csv("appendix_moment.csv", {"p", "dt", "sup_moment", "sup_moment_se", "terminal_moment", "sigma_moment", "ratio"},
            rows);
    return {ok ? Verdict::pass : Verdict::fail, {{"sigma", amp}, {"reports", reports}}};
}

int cmd_simulate(RunConfig const& cfg, Output& out, std::ostream& os, json& summary)
{
    std::vector<Functional> fs;
    for (auto const& name : cfg.analysis.functionals)
    {
        fs.push_back(named_functional(name, cfg));
    }
    EnsembleResult const res = run_ensemble(cfg.model, cfg.ensemble, fs);
    std::vector<std::string> header{"time"};
    for (auto const& s : res.series)
    {
        header.push_back("mean_" + s.name);
        header.push_back("se_" + s.name);
    }
    header.push_back("n_active");
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < res.times.size(); ++i)
    {
        std::vector<double> r{res.times[i]};
        for (auto const& s : res.series)
        {
            r.push_back(s.mean[i]);
            r.push_back(s.se[i]);
        }
        r.push_back(res.series.empty() ? static_cast<double>(res.n_paths - res.stopped)
                                       : static_cast<double>(res.series[0].n_active[i]));
        rows.push_back(std::move(r));
    }
    out.csv("simulate.csv", header, rows);
    if (cfg.analysis.per_path)
    {
        std::vector<std::string> h{"time", "path"};
        for (auto const& s : res.series)
        {
            h.push_back(s.name);
        }
        std::vector<std::vector<double>> pr;
        for (std::size_t p = 0; p < res.n_paths; ++p)
        {
            for (std::size_t i = 0; i < res.times.size(); ++i)
            {
                std::vector<double> r{res.times[i], static_cast<double>(p)};
                for (std::size_t f = 0; f < fs.size(); ++f)
                {
                    r.push_back(res.values[f][p][i]);
                }
                pr.push_back(std::move(r));
            }
        }
        out.csv("simulate_paths.csv", h, pr);
    }
    summary = {{"paths", res.n_paths}, {"stopped", res.stopped}, {"faults", res.faults},
               {"ramp_entered", res.ramp_entered}};
    os << "simulate: " << res.n_paths << " paths, " << res.stopped << " stopped, " << res.times.size()
       << " records\n";
    return exit_pass;
}

int cmd_oracle_linear(RunConfig const& cfg, Output& out, std::ostream& os)
{
    auto const& m = cfg.model;
    require_linear_additive(m, "oracle-linear");
    auto const& basis = m.basis;
    std::size_t const N = basis.modes();
    std::vector<double> const s2 = mode_noise_sq(m);
    auto const* lin = std::get_if<ForcedLinearDrift>(&m.drift);
    State const x0 = initial_state(m);
    std::vector<double> const times = cfg.ensemble.record_times();
    std::vector<std::vector<double>> mean(N, std::vector<double>(times.size())), var = mean;
    for (std::size_t n = 0; n < N; ++n)
    {
        double const eta = basis.eta(n);
        double const f = lin && n < lin->forcing.size() ? lin->forcing[n] : 0.0;
        if (eta > m.alpha * m.alpha && f == 0.0)
        {
            for (std::size_t i = 0; i < times.size(); ++i)
            {
                MomentPair const mp =
                    linear_moment_oracle_eta(eta, times[i], x0.u[n], std::sqrt(s2[n]), m.alpha, x0.v[n]);
                mean[n][i] = mp.mean;
                var[n][i] = mp.variance;
            }
        }
        else
        {
            auto const mm = mode_moments(eta, m.alpha, s2[n], f, x0.u[n], x0.v[n],
                                         cfg.ensemble.dt * static_cast<double>(cfg.ensemble.record_stride),
                                         times.size() - 1, MomentRecursion::exact);
            for (std::size_t i = 0; i < times.size(); ++i)
            {
                mean[n][i] = mm[i].mean[0];
                var[n][i] = mm[i].cov[0];
            }
        }
    }
    std::vector<std::string> header{"time"};
    for (std::size_t n = 1; n <= N; ++n)
    {
        header.push_back("mean_u" + std::to_string(n));
        header.push_back("var_u" + std::to_string(n));
        header.push_back("stationary_u" + std::to_string(n));
    }
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < times.size(); ++i)
    {
        std::vector<double> r{times[i]};
        for (std::size_t n = 0; n < N; ++n)
        {
            r.push_back(mean[n][i]);
            r.push_back(var[n][i]);
            r.push_back(s2[n] / (4.0 * m.alpha * basis.eta(n)));
        }
        rows.push_back(std::move(r));
    }
    out.csv("oracle_linear.csv", header, rows);
    os << "oracle-linear: " << N << " modes, " << times.size() << " times\n";
    return exit_pass;
}

json manifest(std::string const& command, std::string const& kind, RunConfig const& cfg, double wall,
              std::vector<std::string> const& files, json const& extra)
{
    json j = {{"tool", "swave"},
              {"version", kToolVersion},
              {"command", command},
              {"seed", cfg.ensemble.master_seed},
              {"wall_time_s", wall},
              {"outputs", files},
              {"config_toml", resolved_toml(cfg)}};
    if (!kind.empty())
    {
        j["kind"] = kind;
    }
    if (!extra.is_null())
    {
        j["summary"] = extra;
    }
    return j;
}

}  // namespace

int exit_code(Verdict v)
{
    switch (v)
    {
    case Verdict::pass:
        return exit_pass;
    case Verdict::fail:
        return exit_fail;
    case Verdict::inconclusive:
        return exit_inconclusive;
    }
    return exit_internal;
}

std::vector<std::string> verify_kinds()
{
    return {"energy-identity", "envelope", "lemma33", "stationary", "coupling", "lipschitz",
            "stability", "boundedness", "appendix-moment"};
}

std::string csv_table(std::vector<std::string> const& header, std::vector<std::vector<double>> const& rows)
{
    std::string s;
    for (std::size_t i = 0; i < header.size(); ++i)
    {
        s += (i ? "," : "") + csv_field(header[i]);
    }
    s += "\r\n";
    char buf[40];
    for (auto const& r : rows)
    {
        for (std::size_t i = 0; i < r.size(); ++i)
        {
            if (std::isnan(r[i]))
            {
                std::snprintf(buf, sizeof buf, "nan");
            }
            else
            {
                std::snprintf(buf, sizeof buf, "%.17g", r[i]);
            }
            s += (i ? "," : "");
            s += buf;
        }
        s += "\r\n";
    }
    return s;
}

int run_command(std::string const& command, std::string const& kind, RunConfig const& cfg, std::ostream& os)
{
    auto const start = std::chrono::steady_clock::now();
    Output out(cfg.output);
    int code = exit_internal;
    json summary;
    if (command == "simulate")
    {
        code = cmd_simulate(cfg, out, os, summary);
    }
    else if (command == "oracle-linear")
    {
        code = cmd_oracle_linear(cfg, out, os);
    }
    else if (command == "check-conditions")
    {
        bool pass = false;
        json const report = conditions_json(cfg, pass);
        out.json_file("conditions.json", report);
        os << report.dump(2) << "\n";
        code = pass ? exit_pass : exit_fail;
        summary = {{"pass", pass}};
    }
    else if (command == "verify")
    {
        VerifyResult r;
        if (kind == "energy-identity")
        {
            r = verify_energy_identity(cfg, out);
        }
        else if (kind == "envelope")
        {
            r = verify_envelope_kind(cfg, out);
        }
        else if (kind == "lemma33")
        {
            r = verify_lemma33(cfg, out);
        }
        else if (kind == "stationary")
        {
            r = verify_stationary(cfg, out);
        }
        else if (kind == "coupling")
        {
            r = verify_coupling(cfg, out);
        }
        else if (kind == "lipschitz")
        {
            r = verify_lipschitz(cfg, out);
        }
        else if (kind == "stability")
        {
            r = verify_stability(cfg, out);
        }
        else if (kind == "boundedness")
        {
            r = verify_boundedness(cfg, out);
        }
        else if (kind == "appendix-moment")
        {
            r = verify_appendix_moment(cfg, out);
        }
        else
        {
            throw ConfigError("kind", "unknown verify kind '" + kind + "'");
        }
        json const verdict = {{"kind", kind},
                              {"verdict", verdict_name(r.verdict)},
                              {"pass", r.verdict == Verdict::pass},
                              {"evidence", r.evidence},
                              {"manifest_ref", "manifest.json"}};
        out.json_file("verdict_" + kind + ".json", verdict);
        os << verdict.dump(2) << "\n";
        code = exit_code(r.verdict);
        summary = {{"verdict", verdict_name(r.verdict)}};
    }
    else
    {
        throw ConfigError("command", "unknown command '" + command + "'");
    }
    double const wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::vector<std::string> files = out.files();
    files.push_back("manifest.json");
    // The manifest is always written, whatever the formats selection.
    fs::create_directories(cfg.output.directory);
    std::ofstream(fs::path(cfg.output.directory) / "manifest.json", std::ios::binary)
        << manifest(command, kind, cfg, wall, files, summary).dump(2) << "\n";
    return code;
}

int run_cli(CliOptions const& opts, std::ostream& out, std::ostream& err)
{
    try
    {
        RunConfig cfg = load_config(opts.config_path);
        if (opts.out_dir)
        {
            cfg.output.directory = *opts.out_dir;
        }
        if (opts.seed)
        {
            cfg.ensemble.master_seed = *opts.seed;
        }
        if (opts.paths)
        {
            cfg.ensemble.n_paths = *opts.paths;
        }
        if (opts.command == "verify")
        {
            auto const kinds = verify_kinds();
            if (std::find(kinds.begin(), kinds.end(), opts.kind) == kinds.end())
            {
                throw ConfigError("kind", "unknown verify kind '" + opts.kind + "'");
            }
        }
        validate_config(cfg);
        return run_command(opts.command, opts.kind, cfg, out);
    }
    catch (ConfigError const& e)
    {
        err << "validation error: " << e.what() << "\n";
        return exit_validation;
    }
    catch (ConditionFailure const& e)
    {
        err << "condition error: " << e.what() << "\n";
        return exit_validation;
    }
    catch (std::invalid_argument const& e)
    {
        err << "validation error: " << e.what() << "\n";
        return exit_validation;
    }
    catch (std::exception const& e)
    {
        err << "internal error: " << e.what() << "\n";
        return exit_internal;
    }
}

}  // namespace swave
