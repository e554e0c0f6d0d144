#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "swave/dynamics.hpp"
#include "swave/spectral.hpp"

namespace swave {

double energy(Field const& u, Field const& v, SpectralBasis const& basis);
double energy(State const& s, SpectralBasis const& basis);

/// ||Bu||^2 + ||v + lambda u||^2.
double pseudo_energy(State const& s, double lambda, SpectralBasis const& basis);
/// e + 2 lambda (u, v) + lambda^2 ||u||^2, the same quantity expanded.
double pseudo_energy_expanded(State const& s, double lambda, SpectralBasis const& basis);

double lambda0(double alpha, double eta1);

struct EquivalenceConstants
{
    double mu1 = 0.0;
    double lower = 1.0;
    double upper = 1.0;  ///< also K(lambda)
};

/// Sandwich constants relating e and e^lambda; requires 0 <= lambda < mu1.
EquivalenceConstants equivalence_constants(double lambda, double eta1);
/// The lambda with lambda = f mu1(lambda), i.e. f 2 sqrt(eta1) / sqrt(1 - f^2); 0 <= f < 1.
double lambda_for_mu_fraction(double f, double eta1);

struct EnergyParams
{
    double lambda = 0.0;
    double alpha1 = 0.0;
};

using Schedule = std::function<double(double)>;

/// e^lambda(phi0) e^{-alpha1 t} + int_0^t e^{-alpha1 (t-s)} ((2/alpha1) ||f_s||^2 + Tr Q_s) ds.
/// Requires 0 < alpha1 < lambda. The integral is adaptive Gauss-Kronrod.
double exp_envelope(double t, double e_lambda_0, EnergyParams const& p, Schedule const& f_norm_sq,
                    Schedule const& trace_q);
/// Closed form for constant schedules.
double exp_envelope_const(double t, double e_lambda_0, EnergyParams const& p, double f_norm_sq, double trace_q);
/// The same envelope for e itself: K(lambda) { e(phi0) e^{-alpha1 t} + int ... }.
double exp_envelope_energy(double t, double e_0, EnergyParams const& p, double eta1, double f_norm_sq,
                           double trace_q);

enum class QvRule
{
    realized,     ///< sum of ||dM||^2 over the steps
    compensator,  ///< left-point int Tr Q ds
};

/// e(phi_t) minus the right side of the energy identity at each recorded
/// state of the trajectory.
std::vector<double> energy_identity_residual(Trajectory const& traj, ModelSpec const& model,
                                             QvRule rule = QvRule::realized);

/// Phi(u) = 2 int P(u) dx where P' = -f, so that F = -Phi'/2. Zero for the
/// linear family. Throws PathFault on overflow.
double superenergy(DriftSpec const& drift, Field const& u, SpectralBasis const& basis);

struct SuperEnergy
{
    double phi = 0.0;
    double j = 0.0;  ///< e + Phi
};

SuperEnergy phi_superenergy(State const& s, Example1Drift const& drift, SpectralBasis const& basis);

struct LambdaInterval
{
    bool empty = true;
    double lo = 0.0;
    double hi = 0.0;
    bool lo_open = false;  ///< lo is the excluded end point 0
};

/// Scan of (0, lambda_max] on `points` equally spaced values, refined by
/// bisection at the boundaries of the passing set.
LambdaInterval admissible_interval(std::function<bool(double)> const& pass, double lambda_max,
                                   std::size_t points = 1000);

/// Coefficients of Conditions B and the two inequalities at lambda.
struct ConditionReportB
{
    double beta1 = 0.0, beta2 = 0.0, beta3 = 0.0;
    double gamma1 = 0.0, gamma2 = 0.0, gamma3 = 0.0;
    double delta1 = 0.0;
    double lambda = 0.0;
    bool strict = false;
    double first = 0.0;   ///< (beta1 - 1/2) lambda^2 - beta3 lambda - beta2, must be >= 0
    double second = 0.0;  ///< (gamma1 - 1/2) lambda^2 + gamma3 lambda + gamma2, must be <= 0
    bool first_ok = false;
    bool second_ok = false;
    bool pass = false;
    std::string theta;  ///< shape of theta(t)
    std::string rho;    ///< shape of rho(t)
    bool theta_integrable = true;
    bool rho_integrable = true;
    LambdaInterval admissible;
};

ConditionReportB conditions_b(double beta1, double beta2, double beta3, double gamma1, double gamma2, double gamma3,
                              double delta1, double lambda, bool strict, double lambda_max);

struct Example1Params
{
    double kappa = 1.0;
    int n = 2;
    int m = 0;
    double delta = 0.25;
    double k = 0.5;
    double beta0 = 0.0;
    double beta_decay = 0.0;
    double zeta0 = 0.0;
    double zeta_decay = 0.0;
    double r0 = 0.0;
    double eps = 0.01;
    double eps1 = 0.01;  ///< epsilon'
    double eps2 = 0.01;  ///< epsilon''
    double lambda = 0.25;
    double lambda_max = 0.5;
};

ConditionReportB example1_conditions(Example1Params const& p);
/// Smallest kappa for which the first inequality holds strictly at lambda
/// (tends to 1/4 as the epsilons vanish).
double example1_kappa_threshold(Example1Params const& p);

struct ConditionReportC
{
    double b1 = 0.0, c1 = 0.0, b2 = 0.0, c2 = 0.0, k1 = 0.0, k2 = 0.0;
    /// (kappa pi / 2)^2 / eta1, the bound |atan| <= pi/2 gives directly.
    double b1_direct = 0.0;
    std::optional<double> lambda;
    double lambda0 = 0.0;
    bool b_ok = false;
    bool k_ok = false;
    bool pass = false;
    LambdaInterval admissible;
    std::string note;
};

/// Conditions C test: max(b1 + b2 l, k1 + k2 l) <= l^2 / 2.
bool conditions_c_hold(double b1, double b2, double k1, double k2, double lambda);

struct Example2Params
{
    double kappa = 0.1;
    double sigma1 = 0.0;
    double sigma2 = 0.0;
    double r0 = 0.0;
    double eta1 = 2.0;
    double alpha = 1.0;
    double wave_speed_sq = 1.0;
    double trace_r1 = 0.0;
    double trace_r2 = 0.0;
    std::optional<double> lambda;
};

ConditionReportC example2_conditions(Example2Params const& p);

}  // namespace swave
