#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "swave/rng.hpp"
#include "swave/spectral.hpp"

namespace swave {

/// Raised when a single path produces non-finite values. The ensemble
/// machinery treats it as a stopped path instead of aborting the run.
class PathFault : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Wiener field spectrum: W_c(x, t) = sum_n sigma_{c,n} b_{c,n}(t) phi_n(x),
/// one amplitude vector per independent channel c.
struct CovarianceSpec
{
    std::vector<std::vector<double>> channels;

    std::size_t channel_count() const { return channels.size(); }
    /// sum_n sigma_{c,n}^2, i.e. the trace of the channel covariance.
    double trace(std::size_t channel) const;
    bool is_zero() const;

    static CovarianceSpec single(std::vector<double> amplitudes);
};

/// sigma(x) constant amplitude applied to every channel.
struct AdditiveNoise
{
    double amplitude = 1.0;
};

/// zeta(t) (1 + |Du|^2)^delta u^k with zeta(t) = zeta0 exp(-zeta_decay t).
struct Example1Noise
{
    double zeta0 = 0.0;
    double delta = 0.25;
    double power = 1.0;
    double zeta_decay = 0.0;
};

/// Two channels: sigma1 (1 + |Du|^2)^{1/2} and sigma2.
struct Example2Noise
{
    double sigma1 = 0.0;
    double sigma2 = 0.0;
};

/// sigma(u) = zeta0 u.
struct LinearStateNoise
{
    double zeta0 = 0.0;
};

using NoiseCoefficientSpec = std::variant<AdditiveNoise, Example1Noise, Example2Noise, LinearStateNoise>;

std::size_t required_channels(NoiseCoefficientSpec const& spec);
std::string noise_kind_name(NoiseCoefficientSpec const& spec);

/// Per-channel spectral increments over one step.
struct WienerIncrement
{
    std::vector<Field> channels;
};

WienerIncrement sample_increment(CovarianceSpec const& cov, double dt, RngStream& rng);
/// Allocation-free variant used in the time stepper; `out` must be shaped.
void sample_increment_into(CovarianceSpec const& cov, double dt, RngStream& rng, WienerIncrement& out);

/// r_c(x, x) = sum_n sigma_{c,n}^2 phi_n(x)^2.
double r_diag(CovarianceSpec const& cov, SpectralBasis const& basis, std::size_t channel, double x);

/// Maximum of r_c(x, x): a grid search (the collocation grid refined by
/// `refine` sub-intervals per cell, plus the midpoint) polished by Brent's
/// method on the best cell. A lower bound of the supremum in principle.
double r0(CovarianceSpec const& cov, SpectralBasis const& basis, std::size_t channel = 0, std::size_t refine = 8);

/// Sigma_t(u) on the grid, one GridFunction per channel.
std::vector<GridFunction> apply_sigma(NoiseCoefficientSpec const& spec, Field const& u, double t,
                                      SpectralBasis const& basis);

/// Tr Q_t(u) = sum_c int r_c(x, x) Sigma_c(u)(x)^2 dx by grid quadrature.
double trace_Q(NoiseCoefficientSpec const& spec, CovarianceSpec const& cov, Field const& u, double t,
               SpectralBasis const& basis);

/// Projection of sum_c Sigma_c(u)(x_j) dW_c(x_j) onto the basis.
Field multiplicative_increment(NoiseCoefficientSpec const& spec, CovarianceSpec const& cov, Field const& u,
                               WienerIncrement const& dW, SpectralBasis const& basis, double t = 0.0);

/// Evaluates noise terms without per-call allocation; one instance per path.
class NoiseEvaluator
{
  public:
    NoiseEvaluator(NoiseCoefficientSpec spec, CovarianceSpec cov, SpectralBasis const& basis);

    NoiseCoefficientSpec const& spec() const { return spec_; }
    CovarianceSpec const& covariance() const { return cov_; }

    /// True when Sigma does not depend on u (the increment is then exactly
    /// amplitude * dW in coefficient space).
    bool state_independent() const;

    /// Fills per-channel grid values of Sigma_t(u) scaled by `scale`
    /// (the truncation cutoff); u is given by its coefficients.
    void sigma_on_grid(std::span<double const> u, double t, double scale);

    void increment(std::span<double const> u, double t, double scale, WienerIncrement const& dW,
                   std::span<double> out);
    double trace(std::span<double const> u, double t, double scale);

    /// Variants that reuse the grid values of the last sigma_on_grid call.
    void increment_from_grid(WienerIncrement const& dW, std::span<double> out);
    double trace_from_grid() const;

    std::vector<std::vector<double>> const& sigma_grid() const { return sigma_; }
    std::span<double const> r_diag_grid(std::size_t channel) const { return r_diag_[channel]; }

  private:
    NoiseCoefficientSpec spec_;
    CovarianceSpec cov_;
    SpectralBasis const* basis_;
    std::vector<std::vector<double>> r_diag_;
    std::vector<std::vector<double>> sigma_;
    std::vector<double> u_grid_;
    std::vector<double> du_grid_;
    std::vector<double> w_grid_;
    std::vector<double> product_;
};

/// Deterministic integrand sigma(x, t) for the stochastic integral diagnostic.
using SigmaSchedule = std::function<double(double x, double t)>;

struct MomentDiagnosticConfig
{
    int p = 2;
    std::size_t paths = 1000;
    double horizon = 1.0;
    std::vector<double> dts{1e-2, 5e-3, 2.5e-3};
    std::uint64_t seed = 1;
};

struct MomentDiagnosticRow
{
    double dt = 0.0;
    double sup_moment = 0.0;       ///< E sup_t ||M_t||^p
    double sup_moment_se = 0.0;
    double terminal_moment = 0.0;  ///< E ||M_T||^p
    double terminal_moment_se = 0.0;
    double sigma_moment = 0.0;     ///< int_0^T ||sigma_t||^p dt
    double ratio = 0.0;            ///< sup_moment / sigma_moment
    double isometry_target = 0.0;  ///< int_0^T Tr_N Q_t dt (p = 2 only)
};

struct MomentDiagnosticReport
{
    int p = 2;
    std::vector<MomentDiagnosticRow> rows;
    double ratio_spread = 0.0;  ///< max ratio / min ratio across the sweep
    bool ratio_bounded = false; ///< spread <= 2
    bool isometry_ok = true;    ///< p = 2: E||M_T||^2 within 3 SE of target
};

/// Stochastic integral M_t = int_0^t sigma(x, s) W(x, ds) for a deterministic
/// integrand, sampled on a dt sweep. Checks the Ito isometry and that the
/// ratio E sup ||M||^p / int ||sigma||^p stays bounded as dt shrinks.
MomentDiagnosticReport martingale_moment_diagnostic(SigmaSchedule const& sigma, CovarianceSpec const& cov,
                                                    SpectralBasis const& basis,
                                                    MomentDiagnosticConfig const& cfg);

}  // namespace swave
