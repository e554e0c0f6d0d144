#include "swave/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

namespace swave {
namespace {

// Wraps one TOML table, records which keys were read and rejects the rest.
class Section
{
  public:
    Section(toml::table const* table, std::string path) : table_(table), path_(std::move(path)) {}

    bool present() const { return table_ != nullptr; }
    bool has(std::string const& key) const { return table_ && table_->contains(key); }
    std::string field(std::string const& key) const { return path_.empty() ? key : path_ + "." + key; }

    toml::node const* node(std::string const& key)
    {
        used_.insert(key);
        return table_ ? table_->get(key) : nullptr;
    }

    std::optional<double> number(std::string const& key)
    {
        auto const* n = node(key);
        if (!n)
        {
            return std::nullopt;
        }
        if (auto v = n->value_exact<double>())
        {
            return *v;
        }
        if (auto v = n->value_exact<std::int64_t>())
        {
            return static_cast<double>(*v);
        }
        throw ConfigError(field(key), "expected a number");
    }

    double number_or(std::string const& key, double fallback) { return number(key).value_or(fallback); }

    std::optional<std::int64_t> integer(std::string const& key)
    {
        auto const* n = node(key);
        if (!n)
        {
            return std::nullopt;
        }
        if (auto v = n->value_exact<std::int64_t>())
        {
            return *v;
        }
        throw ConfigError(field(key), "expected an integer");
    }

    std::size_t count_or(std::string const& key, std::size_t fallback)
    {
        auto v = integer(key);
        if (!v)
        {
            return fallback;
        }
        if (*v < 0)
        {
            throw ConfigError(field(key), "must be non-negative");
        }
        return static_cast<std::size_t>(*v);
    }

    std::optional<std::string> string(std::string const& key)
    {
        auto const* n = node(key);
        if (!n)
        {
            return std::nullopt;
        }
        if (auto v = n->value_exact<std::string>())
        {
            return *v;
        }
        throw ConfigError(field(key), "expected a string");
    }

    std::optional<bool> boolean(std::string const& key)
    {
        auto const* n = node(key);
        if (!n)
        {
            return std::nullopt;
        }
        if (auto v = n->value_exact<bool>())
        {
            return *v;
        }
        throw ConfigError(field(key), "expected a boolean");
    }

    std::optional<std::vector<double>> numbers(std::string const& key)
    {
        auto const* n = node(key);
        if (!n)
        {
            return std::nullopt;
        }
        return to_numbers(n, field(key));
    }

    std::optional<std::vector<std::vector<double>>> matrix(std::string const& key)
    {
        auto const* n = node(key);
        if (!n)
        {
            return std::nullopt;
        }
        auto const* arr = n->as_array();
        if (!arr)
        {
            throw ConfigError(field(key), "expected an array of arrays");
        }
        std::vector<std::vector<double>> out;
        for (std::size_t i = 0; i < arr->size(); ++i)
        {
            out.push_back(to_numbers(arr->get(i), field(key) + "[" + std::to_string(i) + "]"));
        }
        return out;
    }

    std::optional<std::vector<std::string>> strings(std::string const& key)
    {
        auto const* n = node(key);
        if (!n)
        {
            return std::nullopt;
        }
        auto const* arr = n->as_array();
        if (!arr)
        {
            throw ConfigError(field(key), "expected an array of strings");
        }
        std::vector<std::string> out;
        for (auto const& e : *arr)
        {
            auto v = e.value_exact<std::string>();
            if (!v)
            {
                throw ConfigError(field(key), "expected an array of strings");
            }
            out.push_back(*v);
        }
        return out;
    }

    Section sub(std::string const& key)
    {
        auto const* n = node(key);
        if (n && !n->is_table())
        {
            throw ConfigError(field(key), "expected a table");
        }
        return Section(n ? n->as_table() : nullptr, field(key));
    }

    /// Rejects keys never read, and keys read but not meaningful here.
    void finish(std::set<std::string> const& not_applicable = {}, std::string const& why = "") const
    {
        if (!table_)
        {
            return;
        }
        for (auto const& [k, v] : *table_)
        {
            std::string const key(k.str());
            if (!used_.count(key))
            {
                throw ConfigError(field(key), "unknown key");
            }
            if (not_applicable.count(key))
            {
                throw ConfigError(field(key), "not used " + why);
            }
        }
    }

  private:
    static std::vector<double> to_numbers(toml::node const* n, std::string const& f)
    {
        auto const* arr = n ? n->as_array() : nullptr;
        if (!arr)
        {
            throw ConfigError(f, "expected an array of numbers");
        }
        std::vector<double> out;
        for (auto const& e : *arr)
        {
            if (auto d = e.value_exact<double>())
            {
                out.push_back(*d);
            }
            else if (auto i = e.value_exact<std::int64_t>())
            {
                out.push_back(static_cast<double>(*i));
            }
            else
            {
                throw ConfigError(f, "expected an array of numbers");
            }
        }
        return out;
    }

    toml::table const* table_;
    std::string path_;
    std::set<std::string> used_;
};

std::set<std::string> without(std::set<std::string> all, std::set<std::string> const& keep)
{
    for (auto const& k : keep)
    {
        all.erase(k);
    }
    return all;
}

void parse_drift(Section s, ModelSpec& m)
{
    std::string const kind = s.string("kind").value_or("linear");
    auto forcing = s.numbers("forcing");
    auto kappa = s.number("kappa");
    auto n = s.integer("n");
    auto mm = s.integer("m");
    auto beta0 = s.number("beta0");
    auto beta_decay = s.number("beta_decay");
    auto coeffs = s.numbers("coefficients");
    std::set<std::string> const all{"forcing", "kappa", "n", "m", "beta0", "beta_decay", "coefficients"};
    std::string const why = "by drift kind " + kind;
    if (kind == "linear")
    {
        m.drift = ForcedLinearDrift{forcing.value_or(std::vector<double>{})};
        s.finish(without(all, {"forcing"}), why);
    }
    else if (kind == "example1")
    {
        Example1Drift d;
        d.kappa = kappa.value_or(d.kappa);
        d.n = static_cast<int>(n.value_or(d.n));
        d.m = static_cast<int>(mm.value_or(d.m));
        d.beta0 = beta0.value_or(d.beta0);
        d.beta_decay = beta_decay.value_or(d.beta_decay);
        m.drift = d;
        s.finish(without(all, {"kappa", "n", "m", "beta0", "beta_decay"}), why);
    }
    else if (kind == "example2")
    {
        Example2Drift d;
        d.kappa = kappa.value_or(d.kappa);
        m.drift = d;
        s.finish(without(all, {"kappa"}), why);
    }
    else if (kind == "custom")
    {
        if (!coeffs)
        {
            throw ConfigError(s.field("coefficients"), "required for drift kind custom");
        }
        m.drift = CustomPolynomialDrift{*coeffs};
        s.finish(without(all, {"coefficients"}), why);
    }
    else
    {
        throw ConfigError(s.field("kind"), "unknown drift kind '" + kind + "' (linear, example1, example2, custom)");
    }
}

void parse_noise(Section s, ModelSpec& m)
{
    std::string const kind = s.string("kind").value_or("additive");
    auto channels = s.matrix("channels");
    auto sigma = s.numbers("sigma");
    auto amplitude = s.number("amplitude");
    auto zeta0 = s.number("zeta0");
    auto delta = s.number("delta");
    auto power = s.number("power");
    auto zeta_decay = s.number("zeta_decay");
    auto sigma1 = s.number("sigma1");
    auto sigma2 = s.number("sigma2");
    if (channels && sigma)
    {
        throw ConfigError(s.field("sigma"), "give either sigma or channels, not both");
    }
    if (channels)
    {
        m.covariance.channels = *channels;
    }
    else if (sigma)
    {
        m.covariance.channels = {*sigma};
    }
    std::set<std::string> const all{"amplitude", "zeta0", "delta", "power", "zeta_decay", "sigma1", "sigma2"};
    std::string const why = "by noise kind " + kind;
    if (kind == "additive")
    {
        AdditiveNoise a;
        a.amplitude = amplitude.value_or(a.amplitude);
        m.noise = a;
        s.finish(without(all, {"amplitude"}), why);
    }
    else if (kind == "example1")
    {
        Example1Noise e;
        e.zeta0 = zeta0.value_or(e.zeta0);
        e.delta = delta.value_or(e.delta);
        e.power = power.value_or(e.power);
        e.zeta_decay = zeta_decay.value_or(e.zeta_decay);
        m.noise = e;
        s.finish(without(all, {"zeta0", "delta", "power", "zeta_decay"}), why);
    }
    else if (kind == "example2")
    {
        Example2Noise e;
        e.sigma1 = sigma1.value_or(e.sigma1);
        e.sigma2 = sigma2.value_or(e.sigma2);
        m.noise = e;
        s.finish(without(all, {"sigma1", "sigma2"}), why);
    }
    else if (kind == "linear_state")
    {
        LinearStateNoise e;
        e.zeta0 = zeta0.value_or(e.zeta0);
        m.noise = e;
        s.finish(without(all, {"zeta0"}), why);
    }
    else
    {
        throw ConfigError(s.field("kind"),
                          "unknown noise kind '" + kind + "' (additive, example1, example2, linear_state)");
    }
}

std::pair<double, double> as_pair(std::vector<double> const& v, std::string const& field)
{
    if (v.size() != 2)
    {
        throw ConfigError(field, "expected two numbers");
    }
    return {v[0], v[1]};
}

}  // namespace

bool OutputSpec::wants(std::string const& fmt) const
{
    return std::find(formats.begin(), formats.end(), fmt) != formats.end();
}

RunConfig parse_config(std::string const& text)
{
    toml::table root;
    try
    {
        root = toml::parse(text);
    }
    catch (toml::parse_error const& e)
    {
        std::ostringstream msg;
        msg << e.description() << " at line " << e.source().begin.line;
        throw ConfigError("config", msg.str());
    }
    Section top(&root, "");
    Section model = top.sub("model");
    if (!model.present())
    {
        throw ConfigError("model", "missing section");
    }
    auto const modes = model.integer("modes");
    if (!modes || *modes < 1)
    {
        throw ConfigError("model.modes", "required positive integer");
    }
    DomainSpec domain;
    domain.length = model.number_or("length", domain.length);
    domain.grid_points = model.count_or("grid_points", 0);
    OperatorSpec op;
    op.wave_speed_sq = model.number_or("wave_speed_sq", op.wave_speed_sq);
    op.mass = model.number_or("mass", op.mass);
    std::optional<SpectralBasis> basis;
    try
    {
        basis.emplace(build_basis(domain, op, static_cast<std::size_t>(*modes)));
    }
    catch (std::invalid_argument const& e)
    {
        throw ConfigError("model", e.what());
    }
    RunConfig cfg{ModelSpec{std::move(*basis), 0.5, ForcedLinearDrift{}, {}, AdditiveNoise{}, std::numeric_limits<double>::infinity(), {}, {}}, {}, {}, {}};
    cfg.model.alpha = model.number_or("alpha", cfg.model.alpha);
    cfg.model.truncation = model.number_or("truncation", cfg.model.truncation);
    parse_drift(model.sub("drift"), cfg.model);
    parse_noise(model.sub("noise"), cfg.model);
    {
        Section init = model.sub("init");
        cfg.model.g = Field(init.numbers("u").value_or(std::vector<double>{}));
        cfg.model.h = Field(init.numbers("v").value_or(std::vector<double>{}));
        init.finish();
    }
    model.finish();

    Section ens = top.sub("ensemble");
    auto& e = cfg.ensemble;
    e.n_paths = ens.count_or("paths", e.n_paths);
    if (auto seed = ens.integer("seed"))
    {
        if (*seed < 0)
        {
            throw ConfigError("ensemble.seed", "must be non-negative");
        }
        e.master_seed = static_cast<std::uint64_t>(*seed);
    }
    e.dt = ens.number_or("dt", e.dt);
    e.T = ens.number_or("T", e.T);
    e.record_stride = ens.count_or("stride", e.record_stride);
    if (auto s = ens.string("scheme"))
    {
        try
        {
            e.scheme = parse_scheme(*s);
        }
        catch (std::invalid_argument const& err)
        {
            throw ConfigError("ensemble.scheme", err.what());
        }
    }
    ens.finish();

    Section an = top.sub("analysis");
    auto& a = cfg.analysis;
    a.lambda = an.number("lambda");
    a.alpha1 = an.number("alpha1");
    a.functionals = an.strings("functionals").value_or(a.functionals);
    if (auto w = an.numbers("fit_window"))
    {
        a.fit_window = as_pair(*w, "analysis.fit_window");
    }
    if (auto q = an.string("qv_rule"))
    {
        if (*q == "realized")
        {
            a.qv_rule = QvRule::realized;
        }
        else if (*q == "compensator")
        {
            a.qv_rule = QvRule::compensator;
        }
        else
        {
            throw ConfigError("analysis.qv_rule", "expected realized or compensator");
        }
    }
    a.per_path = an.boolean("per_path").value_or(a.per_path);
    a.dts = an.numbers("dts").value_or(a.dts);
    if (auto pts = an.matrix("points"))
    {
        for (std::size_t i = 0; i < pts->size(); ++i)
        {
            a.points.push_back(as_pair((*pts)[i], "analysis.points[" + std::to_string(i) + "]"));
        }
    }
    a.lambdas = an.numbers("lambdas").value_or(a.lambdas);
    a.states = an.count_or("states", a.states);
    if (auto p = an.numbers("powers"))
    {
        a.powers.clear();
        for (double x : *p)
        {
            a.powers.push_back(static_cast<int>(x));
            if (static_cast<double>(a.powers.back()) != x)
            {
                throw ConfigError("analysis.powers", "expected integers");
            }
        }
    }
    a.sigma = an.number_or("sigma", a.sigma);
    a.horizon = an.number_or("horizon", a.horizon);
    a.xi2_u = an.numbers("xi2_u").value_or(a.xi2_u);
    a.xi2_v = an.numbers("xi2_v").value_or(a.xi2_v);
    a.g_max = an.number_or("g_max", a.g_max);
    a.early = an.number_or("early", a.early);
    a.late = an.number_or("late", a.late);
    a.resamples = an.count_or("resamples", a.resamples);
    a.eps = an.number_or("eps", a.eps);
    a.eps1 = an.number_or("eps1", a.eps1);
    a.eps2 = an.number_or("eps2", a.eps2);
    a.lambda_max = an.number("lambda_max");
    an.finish();

    Section out = top.sub("output");
    cfg.output.directory = out.string("directory").value_or(cfg.output.directory);
    cfg.output.formats = out.strings("formats").value_or(cfg.output.formats);
    out.finish();

    top.finish();
    return cfg;
}

RunConfig load_config(std::string const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw ConfigError("config", "cannot read " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void validate_config(RunConfig const& cfg)
{
    try
    {
        cfg.ensemble.validate();
    }
    catch (std::invalid_argument const& e)
    {
        std::string const msg = e.what();
        auto const colon = msg.find(' ');
        throw ConfigError(msg.substr(0, colon), msg.substr(colon + 1));
    }
    try
    {
        cfg.model.validate();
    }
    catch (std::invalid_argument const& e)
    {
        std::string const msg = e.what();
        if (msg.rfind("model.", 0) == 0)
        {
            auto const sp = msg.find(' ');
            throw ConfigError(msg.substr(0, sp), msg.substr(sp + 1));
        }
        throw ConfigError("model", msg);
    }
    auto const& a = cfg.analysis;
    if (a.lambda && !(*a.lambda > 0.0))
    {
        throw ConfigError("analysis.lambda", "must be positive");
    }
    if (a.alpha1 && !(*a.alpha1 > 0.0))
    {
        throw ConfigError("analysis.alpha1", "must be positive");
    }
    if (a.fit_window && !(a.fit_window->first < a.fit_window->second))
    {
        throw ConfigError("analysis.fit_window", "needs lo < hi");
    }
    for (double dt : a.dts)
    {
        if (!(dt > 0.0))
        {
            throw ConfigError("analysis.dts", "step sizes must be positive");
        }
    }
    for (auto const& f : cfg.output.formats)
    {
        if (f != "csv" && f != "json")
        {
            throw ConfigError("output.formats", "unknown format '" + f + "' (csv, json)");
        }
    }
    if (cfg.output.directory.empty())
    {
        throw ConfigError("output.directory", "must not be empty");
    }
}

std::string resolved_toml(RunConfig const& cfg)
{
    auto numbers = [](std::vector<double> const& v) {
        toml::array arr;
        for (double x : v)
        {
            arr.push_back(x);
        }
        return arr;
    };
    auto const& m = cfg.model;
    toml::table model{
        {"modes", static_cast<std::int64_t>(m.basis.modes())},
        {"length", m.basis.length()},
        {"grid_points", static_cast<std::int64_t>(m.basis.grid_size())},
        {"wave_speed_sq", m.basis.op().wave_speed_sq},
        {"mass", m.basis.op().mass},
        {"alpha", m.alpha},
    };
    if (std::isfinite(m.truncation))
    {
        model.insert("truncation", m.truncation);
    }
    toml::table drift;
    std::visit(
        [&](auto const& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, ForcedLinearDrift>)
            {
                drift.insert("kind", "linear");
                drift.insert("forcing", numbers(d.forcing));
            }
            else if constexpr (std::is_same_v<T, Example1Drift>)
            {
                drift.insert("kind", "example1");
                drift.insert("kappa", d.kappa);
                drift.insert("n", static_cast<std::int64_t>(d.n));
                drift.insert("m", static_cast<std::int64_t>(d.m));
                drift.insert("beta0", d.beta0);
                drift.insert("beta_decay", d.beta_decay);
            }
            else if constexpr (std::is_same_v<T, Example2Drift>)
            {
                drift.insert("kind", "example2");
                drift.insert("kappa", d.kappa);
            }
            else
            {
                drift.insert("kind", "custom");
                drift.insert("coefficients", numbers(d.coefficients));
            }
        },
        m.drift);
    model.insert("drift", drift);

    toml::table noise;
    std::visit(
        [&](auto const& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, AdditiveNoise>)
            {
                noise.insert("kind", "additive");
                noise.insert("amplitude", n.amplitude);
            }
            else if constexpr (std::is_same_v<T, Example1Noise>)
            {
                noise.insert("kind", "example1");
                noise.insert("zeta0", n.zeta0);
                noise.insert("delta", n.delta);
                noise.insert("power", n.power);
                noise.insert("zeta_decay", n.zeta_decay);
            }
            else if constexpr (std::is_same_v<T, Example2Noise>)
            {
                noise.insert("kind", "example2");
                noise.insert("sigma1", n.sigma1);
                noise.insert("sigma2", n.sigma2);
            }
            else
            {
                noise.insert("kind", "linear_state");
                noise.insert("zeta0", n.zeta0);
            }
        },
        m.noise);
    toml::array channels;
    for (auto const& ch : m.covariance.channels)
    {
        channels.push_back(numbers(ch));
    }
    noise.insert("channels", channels);
    model.insert("noise", noise);
    model.insert("init", toml::table{{"u", numbers(m.g.coeffs)}, {"v", numbers(m.h.coeffs)}});

    auto const& e = cfg.ensemble;
    toml::table ensemble{
        {"paths", static_cast<std::int64_t>(e.n_paths)},
        {"seed", static_cast<std::int64_t>(e.master_seed)},
        {"dt", e.dt},
        {"T", e.T},
        {"stride", static_cast<std::int64_t>(e.record_stride)},
        {"scheme", scheme_name(e.scheme)},
    };

    auto const& a = cfg.analysis;
    toml::table analysis;
    if (a.lambda)
    {
        analysis.insert("lambda", *a.lambda);
    }
    if (a.alpha1)
    {
        analysis.insert("alpha1", *a.alpha1);
    }
    toml::array fs;
    for (auto const& f : a.functionals)
    {
        fs.push_back(f);
    }
    analysis.insert("functionals", fs);
    if (a.fit_window)
    {
        analysis.insert("fit_window", toml::array{a.fit_window->first, a.fit_window->second});
    }
    analysis.insert("qv_rule", a.qv_rule == QvRule::realized ? "realized" : "compensator");
    analysis.insert("per_path", a.per_path);
    analysis.insert("dts", numbers(a.dts));
    toml::array pts;
    for (auto const& [x, y] : a.points)
    {
        pts.push_back(toml::array{x, y});
    }
    analysis.insert("points", pts);
    analysis.insert("lambdas", numbers(a.lambdas));
    analysis.insert("states", static_cast<std::int64_t>(a.states));
    toml::array powers;
    for (int p : a.powers)
    {
        powers.push_back(static_cast<std::int64_t>(p));
    }
    analysis.insert("powers", powers);
    analysis.insert("sigma", a.sigma);
    analysis.insert("horizon", a.horizon);
    analysis.insert("xi2_u", numbers(a.xi2_u));
    analysis.insert("xi2_v", numbers(a.xi2_v));
    analysis.insert("g_max", a.g_max);
    analysis.insert("early", a.early);
    analysis.insert("late", a.late);
    analysis.insert("resamples", static_cast<std::int64_t>(a.resamples));
    analysis.insert("eps", a.eps);
    analysis.insert("eps1", a.eps1);
    analysis.insert("eps2", a.eps2);
    if (a.lambda_max)
    {
        analysis.insert("lambda_max", *a.lambda_max);
    }

    toml::array formats;
    for (auto const& f : cfg.output.formats)
    {
        formats.push_back(f);
    }
    toml::table output{{"directory", cfg.output.directory}, {"formats", formats}};

    toml::table root{{"model", model}, {"ensemble", ensemble}, {"analysis", analysis}, {"output", output}};
    std::ostringstream ss;
    ss << root;
    return ss.str();
}

}  // namespace swave
