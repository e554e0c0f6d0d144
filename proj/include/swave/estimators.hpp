#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "swave/dynamics.hpp"
#include "swave/energy.hpp"

namespace swave {

enum class Verdict
{
    pass,
    fail,
    inconclusive,
};

std::string verdict_name(Verdict v);

/// Raised when a requested experiment is not covered by its guarantee
/// (e.g. coupling with Conditions C failing).
class ConditionFailure : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

struct EnsembleConfig
{
    std::size_t n_paths = 1000;
    std::uint64_t master_seed = 1;
    double dt = 1e-3;
    double T = 1.0;
    std::size_t record_stride = 1;
    Scheme scheme = Scheme::exponential;

    std::size_t steps() const;
    /// Throws std::invalid_argument with the ensemble.* field name.
    void validate() const;
    std::vector<double> record_times() const;
};

/// Worker count: SWAVE_THREADS if set, else the hardware concurrency,
/// capped by the amount of work. Never affects results.
std::size_t worker_count(std::size_t work_items);

struct Functional
{
    std::string name;
    std::function<double(State const&, Accumulators const&)> fn;
};

Functional energy_functional(SpectralBasis const& basis);
Functional pseudo_energy_functional(SpectralBasis const& basis, double lambda);
/// J^lambda = e^lambda + Phi; lambda = 0 gives J = e + Phi.
Functional superenergy_functional(ModelSpec const& model, double lambda);
/// 1-based mode coefficient of u or v.
Functional mode_u_functional(std::size_t mode);
Functional mode_v_functional(std::size_t mode);
/// u(x) evaluated from the coefficients.
Functional point_value_functional(SpectralBasis const& basis, double x);
Functional identity_residual_functional(ModelSpec const& model, QvRule rule);

struct SeriesWithError
{
    std::string name;
    std::vector<double> times;
    std::vector<double> mean;
    std::vector<double> se;            ///< sample std / sqrt(n_active)
    std::vector<double> variance;      ///< sample variance (n - 1)
    std::vector<double> variance_se;   ///< from the sample fourth central moment
    std::vector<std::size_t> n_active; ///< paths not yet stopped
    std::size_t n_paths = 0;
    std::size_t stopped = 0;
};

SeriesWithError summarize(std::string name, std::vector<double> const& times,
                          std::vector<std::vector<double>> const& per_path, std::size_t stopped);

struct EnsembleResult
{
    std::vector<SeriesWithError> series;
    /// values[f][path][time]; NaN once the path is censored.
    std::vector<std::vector<std::vector<double>>> values;
    std::vector<double> times;
    std::vector<double> tau;  ///< NaN for paths that did not stop
    std::size_t n_paths = 0;
    std::size_t stopped = 0;
    std::size_t faults = 0;
    bool ramp_entered = false;
    bool all_stopped = false;

    SeriesWithError const& get(std::string const& name) const;
    std::size_t index(std::string const& name) const;
};

/// Runs cfg.n_paths independent paths of `model` in parallel. Aggregation
/// is in path order, so results are bit-identical for any worker count.
EnsembleResult run_ensemble(ModelSpec const& model, EnsembleConfig const& cfg,
                            std::vector<Functional> const& functionals);

struct EnvelopeReport
{
    std::size_t violations = 0;
    std::vector<double> violation_times;
    double max_excess_se = 0.0;  ///< max of (mean - envelope) / se over times
    bool pass = false;
};

/// Counts times where mean - 3 SE exceeds the envelope.
EnvelopeReport verify_envelope(SeriesWithError const& series, std::vector<double> const& envelope);

struct DecayFit
{
    double rate = 0.0;
    double intercept = 0.0;
    double window_lo = 0.0;
    double window_hi = 0.0;
    double residual_norm = 0.0;
    std::size_t points = 0;
};

/// Least squares of log(value) against t over [lo, hi]; rate = -slope.
DecayFit fit_decay(std::vector<double> const& times, std::vector<double> const& values, double lo, double hi);
/// Default window [0.2 T, T] of the series.
DecayFit fit_decay(SeriesWithError const& series, std::optional<std::pair<double, double>> window = std::nullopt);

struct BootstrapInterval
{
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double level = 0.95;
    std::size_t resamples = 0;
};

/// Percentile bootstrap over paths of the decay rate of the mean series.
BootstrapInterval bootstrap_decay(std::vector<std::vector<double>> const& per_path, std::vector<double> const& times,
                                  double lo, double hi, std::size_t resamples, std::uint64_t seed,
                                  double level = 0.95);

struct StationaryMode
{
    std::size_t mode = 0;
    double sample_variance = 0.0;
    double variance_se = 0.0;
    double target = 0.0;  ///< sigma^2 / (4 alpha eta_n)
    bool within = false;
};

struct StationaryPoint
{
    double x = 0.0, y = 0.0;
    double sample_cov = 0.0;
    double se = 0.0;
    double target = 0.0;
    bool within = false;
};

struct StationaryReport
{
    Verdict verdict = Verdict::inconclusive;
    std::vector<StationaryMode> modes;
    std::vector<StationaryPoint> points;
    double T = 0.0;
    std::size_t n_paths = 0;
    std::string reason;
};

/// Variances and two-point covariances at t = T against their limits.
StationaryReport stationary_check(ModelSpec const& model, EnsembleConfig const& cfg,
                                  std::vector<std::pair<double, double>> const& points);

struct CouplingReport
{
    SeriesWithError difference;  ///< e^lambda(u1 - u2, v1 - v2)
    DecayFit fit;
    double lambda = 0.0;
    double target_rate = 0.0;  ///< 0.9 lambda / 2
    std::optional<ConditionReportC> conditions;
    /// Fit over the same window of the noise-free difference (linear additive models).
    std::optional<DecayFit> deterministic_fit;
    bool monotone = false;  ///< non-increasing after the first record up to 3 SE
    Verdict verdict = Verdict::inconclusive;
};

/// Two copies started at xi1 and xi2 driven by the same increments.
/// Throws ConditionFailure when Conditions C fail for the model.
CouplingReport coupled_contraction(ModelSpec const& model, State const& xi1, State const& xi2, double lambda,
                                   EnsembleConfig const& cfg);

/// Conditions C for a model whose drift/noise families are covered.
ConditionReportC model_conditions_c(ModelSpec const& model, std::optional<double> lambda);

struct LipschitzFunctionalSpec
{
    enum class Kind
    {
        clipped_energy,
        clipped_mode,
    } kind = Kind::clipped_energy;
    double g_max = 10.0;
    std::size_t mode = 1;
};

struct LipschitzReport
{
    std::vector<double> times;
    std::vector<double> gap;     ///< |E G(xi) - E G(xi')| from paired differences
    std::vector<double> gap_se;
    DecayFit fit;
    std::optional<DecayFit> deterministic_fit;
    double early_time = 0.0, late_time = 0.0;
    Verdict verdict = Verdict::inconclusive;
    std::string reason;
};

LipschitzReport lipschitz_convergence(ModelSpec const& model, LipschitzFunctionalSpec const& g, State const& xi1,
                                      State const& xi2, EnsembleConfig const& cfg, double early_time,
                                      double late_time);

struct BlockReport
{
    std::size_t blocks = 0;
    std::size_t paths = 0;
    double c0 = 0.0;
    double ej0 = 0.0;
    double lambda = 0.0;
    double dominated_fraction = 0.0;
    double median_rate = 0.0;    ///< per-path fitted rate of log s_n
    double reference_rate = 0.0; ///< lambda / 8
    std::vector<double> mean_block_sup;
    Verdict verdict = Verdict::inconclusive;
};

/// Per-path block suprema s_n = sup_{[n, n+1]} J^lambda and their domination
/// by the geometric envelope C0 E J0 exp(-n lambda / 8).
BlockReport as_stability_blocks(ModelSpec const& model, double lambda, EnsembleConfig const& cfg);

struct BoundednessReport
{
    double sup_mean = 0.0;      ///< sup_t E (e + Phi)
    double mean_path_sup = 0.0; ///< E sup_t (e + Phi) over recorded times
    double ej0 = 0.0;
    double k1 = 0.0;            ///< sup_mean / E J0
    DecayFit fit;
    bool non_increasing = false;
    std::size_t stopped = 0;
    Verdict verdict = Verdict::inconclusive;
};

BoundednessReport boundedness_report(SeriesWithError const& series, std::vector<std::vector<double>> const& per_path,
                                     double transient_fraction = 0.2);

struct IdentityRow
{
    double dt = 0.0;
    double mean_abs = 0.0;
    double se = 0.0;
};

struct IdentityReport
{
    std::vector<IdentityRow> rows;
    std::vector<double> ratios;  ///< mean_abs[i] / mean_abs[i + 1]
    bool ratios_ok = false;      ///< every ratio within 2 +- 0.6
    Verdict verdict = Verdict::inconclusive;
};

/// E |residual(T)| of the energy identity across a dt sweep.
IdentityReport identity_refinement(ModelSpec const& model, EnsembleConfig const& cfg, std::vector<double> const& dts,
                                   QvRule rule = QvRule::realized);

struct SandwichReport
{
    std::size_t states = 0;
    std::size_t violations = 0;
    double max_expansion_error = 0.0;
    std::vector<double> lambdas;
    bool pass = false;
};

/// Random states (Gaussian coefficients with a spread of scales) checked
/// against the equivalence sandwich and the expansion identity.
SandwichReport sandwich_check(SpectralBasis const& basis, std::vector<double> const& lambdas, std::size_t n_states,
                              std::uint64_t seed);

}  // namespace swave
