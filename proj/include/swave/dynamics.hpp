#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "swave/noise.hpp"
#include "swave/spectral.hpp"

namespace swave {

/// Time-independent forcing f given by its coefficients (zero padded).
struct ForcedLinearDrift
{
    std::vector<double> forcing;
};

/// f(u) = -kappa u^{2n-1} + beta(t) u^m with beta(t) = beta0 exp(-beta_decay t).
struct Example1Drift
{
    double kappa = 1.0;
    int n = 2;
    int m = 0;
    double beta0 = 0.0;
    double beta_decay = 0.0;
};

/// f(u) = -kappa u atan(1 + u^2).
struct Example2Drift
{
    double kappa = 0.1;
};

/// f(u) = sum_j a_j u^j.
struct CustomPolynomialDrift
{
    std::vector<double> coefficients;
};

using DriftSpec = std::variant<ForcedLinearDrift, Example1Drift, Example2Drift, CustomPolynomialDrift>;

std::string drift_kind_name(DriftSpec const& drift);
/// Polynomial degree of the drift, or nullopt for non-polynomial drifts.
std::optional<std::size_t> drift_degree(DriftSpec const& drift);

enum class Scheme
{
    euler_maruyama,
    exponential,
};

std::string scheme_name(Scheme s);
Scheme parse_scheme(std::string const& name);

struct ModelSpec
{
    SpectralBasis basis;
    double alpha = 0.5;
    DriftSpec drift = ForcedLinearDrift{};
    CovarianceSpec covariance;
    NoiseCoefficientSpec noise = AdditiveNoise{};
    /// H1-norm truncation level; infinity disables the cutoff.
    double truncation = std::numeric_limits<double>::infinity();
    Field g;  ///< initial displacement
    Field h;  ///< initial velocity

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    bool is_linear_additive() const;
};

struct State
{
    Field u;
    Field v;
    double t = 0.0;
};

State initial_state(ModelSpec const& model);

/// Running integrals for the energy identity. The ds-integrals use the
/// left point except under the exponential scheme, where `dissipation`
/// integrates the linear flow of each step exactly and `forcing` and
/// `martingale` include the drift kick of the step.
struct Accumulators
{
    double dissipation = 0.0;          ///< int ||v||^2 ds
    double forcing = 0.0;              ///< int (v, F) ds
    double martingale = 0.0;           ///< int (v, dM)
    double trace_q = 0.0;              ///< int Tr Q ds
    double quadratic_variation = 0.0;  ///< sum ||dM||^2
};

struct StopReport
{
    bool stopped = false;
    double tau = std::numeric_limits<double>::quiet_NaN();
    bool fault = false;
    bool ramp_entered = false;
    std::string reason;
};

struct Trajectory
{
    std::vector<State> states;
    std::vector<Accumulators> accumulators;  ///< aligned with states
    StopReport stop;
    Scheme scheme = Scheme::exponential;
    double dt = 0.0;
};

/// exp(dt [[0, 1], [-eta, -2 alpha]]) stored row-major.
struct Mat2
{
    double a11 = 1.0, a12 = 0.0, a21 = 0.0, a22 = 1.0;

    double det() const { return a11 * a22 - a12 * a21; }
};

Mat2 linear_mode_propagator(double eta, double alpha, double dt);

/// Pseudospectral drift F_t(u) without the linear part Au.
Field apply_drift(DriftSpec const& drift, Field const& u, double t, SpectralBasis const& basis);

/// C1 cutoff: 1 on [0, N/2], 0 on [N, inf), smoothstep in between.
double smooth_cutoff(double s, double n_trunc);
/// S_N u = eta_N(||u||_1) u.
Field truncate_state(Field const& u, SpectralBasis const& basis, double n_trunc);
/// F^N(u) = eta_N(||u||_1) F(S_N u).
Field truncated_drift(DriftSpec const& drift, Field const& u, double t, SpectralBasis const& basis,
                      double n_trunc);

/// Advances single paths of one model. Holds per-path scratch, so use one
/// instance per worker.
class Stepper
{
  public:
    Stepper(ModelSpec const& model, Scheme scheme);

    ModelSpec const& model() const { return *model_; }
    Scheme scheme() const { return scheme_; }
    NoiseEvaluator& noise() { return noise_; }

    /// One step with a caller-supplied increment (lets two states share the
    /// same noise). Throws PathFault on non-finite output.
    void step(State& s, double dt, WienerIncrement const& dW, Accumulators* acc = nullptr);

    WienerIncrement make_increment() const;

    /// True once a step evaluated the cutoff strictly below one.
    bool ramp_entered() const { return ramp_entered_; }
    void reset_flags() { ramp_entered_ = false; }

  private:
    struct ModeCache
    {
        Mat2 prop;
        double i11 = 0.0, i12 = 0.0, i22 = 0.0;  // int_0^dt Phi_2a Phi_2b ds
    };

    void prepare(double dt);
    void drift_into(std::span<double const> u, double t, std::span<double> out);

    ModelSpec const* model_;
    Scheme scheme_;
    NoiseEvaluator noise_;
    double cached_dt_ = -1.0;
    std::vector<ModeCache> modes_;
    std::vector<double> grid_u_;
    std::vector<double> grid_f_;
    std::vector<double> drift_;
    std::vector<double> dm_;
    std::vector<double> su_;
    bool ramp_entered_ = false;
};

struct SimulateOptions
{
    std::uint64_t path_index = 0;
    std::size_t record_stride = 1;
    /// Called with every state, including the initial one.
    std::function<void(State const&)> observer;
};

/// One path from the model's initial data. Stops when ||u||_1 exceeds
/// truncation / 2 or when the state stops being finite.
Trajectory simulate(ModelSpec const& model, double T, double dt, Scheme scheme, std::uint64_t seed,
                    SimulateOptions const& opts = {});

Trajectory simulate_with(Stepper& stepper, double T, double dt, std::uint64_t seed, std::uint64_t path_index,
                         std::size_t record_stride, std::function<void(State const&)> const& observer);

/// Exact mean and variance of one underdamped mode of the linear additive
/// equation with Gaussian-free initial data (h, v0). The variance integral
/// is evaluated by adaptive Gauss-Kronrod quadrature.
struct MomentPair
{
    double mean = 0.0;
    double variance = 0.0;
};

MomentPair linear_moment_oracle_eta(double eta, double t, double h, double sigma, double alpha, double v0 = 0.0);
/// Mode n on (0, pi) with eta = (n c)^2.
MomentPair linear_moment_oracle(std::size_t mode, double t, double h, double sigma, double alpha, double c,
                                double v0 = 0.0);
double stationary_variance(double eta, double sigma, double alpha);

/// First and second moments of (u_n, v_n) for one mode of the linear
/// additive system, propagated on a uniform time grid.
struct ModeMoments
{
    double t = 0.0;
    std::array<double, 2> mean{};
    std::array<double, 4> cov{};  ///< row-major 2x2
};

enum class MomentRecursion
{
    exact,           ///< exact transition: Phi P Phi^T + int Phi G Phi^T ds
    euler_maruyama,  ///< law of the Euler-Maruyama chain
    exponential,     ///< law of the exponential scheme chain
};

/// `sigma_sq` is the diffusion rate of the mode (amplitude^2 sigma_n^2),
/// `forcing` a constant coefficient of f for the mode.
std::vector<ModeMoments> mode_moments(double eta, double alpha, double sigma_sq, double forcing, double u0,
                                      double v0, double dt, std::size_t steps, MomentRecursion method);

}  // namespace swave
