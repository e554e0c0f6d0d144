#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <boost/numeric/odeint.hpp>

#include "helpers.hpp"
#include "swave/dynamics.hpp"
#include "swave/energy.hpp"

using namespace swave;
using swave::test::basis;
using swave::test::linear_model;

namespace {

// Dense RK oracle for x'' + 2 alpha x' + eta x = 0.
std::array<double, 2> ode_oracle(double eta, double alpha, double t, std::array<double, 2> x0)
{
    using namespace boost::numeric::odeint;
    auto rhs = [&](std::array<double, 2> const& x, std::array<double, 2>& dx, double) {
        dx[0] = x[1];
        dx[1] = -eta * x[0] - 2.0 * alpha * x[1];
    };
    auto stepper = make_controlled(1e-14, 1e-14, runge_kutta_dopri5<std::array<double, 2>>());
    integrate_adaptive(stepper, rhs, x0, 0.0, t, 1e-4);
    return x0;
}

}  // namespace

TEST(Propagator, UndampedRotation)
{
    for (double t : {0.3, 1.0, 4.0})
    {
        Mat2 const p = linear_mode_propagator(1.0, 0.0, t);
        EXPECT_NEAR(p.a11, std::cos(t), 1e-14);
        EXPECT_NEAR(p.a12, std::sin(t), 1e-14);
        EXPECT_NEAR(p.a21, -std::sin(t), 1e-14);
        EXPECT_NEAR(p.a22, std::cos(t), 1e-14);
    }
}

TEST(Propagator, ZeroStepIsIdentity)
{
    Mat2 const p = linear_mode_propagator(3.0, 0.7, 0.0);
    EXPECT_EQ(p.a11, 1.0);
    EXPECT_EQ(p.a12, 0.0);
    EXPECT_EQ(p.a21, 0.0);
    EXPECT_EQ(p.a22, 1.0);
}

TEST(Propagator, DampedExampleAgainstOde)
{
    Mat2 const p = linear_mode_propagator(1.0, 0.5, 2.0);
    double const w = std::sqrt(0.75);
    EXPECT_NEAR(p.a11, std::exp(-1.0) * (std::cos(w * 2.0) + 0.5 / w * std::sin(w * 2.0)), 1e-14);
    EXPECT_NEAR(p.a11, 0.150574, 1e-6);
    auto const x = ode_oracle(1.0, 0.5, 2.0, {1.0, 0.0});
    EXPECT_NEAR(p.a11, x[0], 1e-9);
    EXPECT_NEAR(p.a21, x[1], 1e-9);
}

TEST(Propagator, AllBranchesMatchOde)
{
    // underdamped, critical, overdamped, and the series branch near critical
    for (auto [eta, alpha] : std::vector<std::pair<double, double>>{{4.0, 0.5}, {1.0, 1.0}, {1.0, 3.0}, {1.0, 1.0001}})
    {
        for (double dt : {0.01, 0.5, 3.0})
        {
            Mat2 const p = linear_mode_propagator(eta, alpha, dt);
            auto const c1 = ode_oracle(eta, alpha, dt, {1.0, 0.0});
            auto const c2 = ode_oracle(eta, alpha, dt, {0.0, 1.0});
            EXPECT_NEAR(p.a11, c1[0], 1e-9);
            EXPECT_NEAR(p.a21, c1[1], 1e-9);
            EXPECT_NEAR(p.a12, c2[0], 1e-9);
            EXPECT_NEAR(p.a22, c2[1], 1e-9);
            EXPECT_NEAR(p.det(), std::exp(-2.0 * alpha * dt), 1e-12);
        }
    }
}

TEST(Drift, Example2AtZero)
{
    auto const b = basis(4);
    Field const f = apply_drift(Example2Drift{0.1}, Field(4), 0.0, b);
    for (double c : f.coeffs)
    {
        EXPECT_EQ(c, 0.0);
    }
}

TEST(Drift, IdentityPolynomial)
{
    auto const b = basis(4);
    Field const f = apply_drift(CustomPolynomialDrift{{0.0, 1.0}}, Field::unit(4, 1), 0.0, b);
    for (std::size_t n = 0; n < 4; ++n)
    {
        EXPECT_NEAR(f[n], n == 0 ? 1.0 : 0.0, 1e-10);
    }
}

TEST(Drift, Example1CubicAgainstQuadrature)
{
    auto const b = basis(4);
    Field const f = apply_drift(Example1Drift{1.0, 2, 0, 0.0, 0.0}, Field::unit(4, 1), 0.0, b);
    double const pi = std::numbers::pi;
    EXPECT_NEAR(f[0], -std::pow(2.0 / pi, 2) * 3.0 * pi / 8.0, 1e-12);
    EXPECT_NEAR(f[0], -0.477465, 1e-6);
    // sin^3 x = (3 sin x - sin 3x) / 4 feeds mode 3 only.
    EXPECT_NEAR(f[1], 0.0, 1e-12);
    EXPECT_NEAR(f[2], std::pow(2.0 / pi, 1.5) / 4.0 * std::sqrt(pi / 2.0), 1e-12);
}

TEST(Drift, ForcedLinearIsConstant)
{
    auto const b = basis(3);
    Field const f = apply_drift(ForcedLinearDrift{{0.5, -1.0}}, Field::unit(3, 2), 1.0, b);
    EXPECT_EQ(f[0], 0.5);
    EXPECT_EQ(f[1], -1.0);
    EXPECT_EQ(f[2], 0.0);
}

TEST(Cutoff, EndPointsAndRamp)
{
    double const N = 8.0;
    EXPECT_EQ(smooth_cutoff(0.0, N), 1.0);
    EXPECT_EQ(smooth_cutoff(N / 2, N), 1.0);
    EXPECT_EQ(smooth_cutoff(N, N), 0.0);
    EXPECT_EQ(smooth_cutoff(2 * N, N), 0.0);
    double const mid = smooth_cutoff(0.75 * N, N);
    EXPECT_GT(mid, 0.0);
    EXPECT_LT(mid, 1.0);
}

TEST(Cutoff, MonotoneAndC1)
{
    double const N = 3.0;
    double prev = 1.0;
    for (int i = 0; i <= 1000; ++i)
    {
        double const s = N / 2 + (N / 2) * i / 1000.0;
        double const k = smooth_cutoff(s, N);
        EXPECT_LE(k, prev + 1e-15);
        prev = k;
    }
    double const h = 1e-6;
    for (double s : {N / 2, N})
    {
        double const left = (smooth_cutoff(s, N) - smooth_cutoff(s - h, N)) / h;
        double const right = (smooth_cutoff(s + h, N) - smooth_cutoff(s, N)) / h;
        EXPECT_NEAR(left, right, 1e-5);
    }
}

TEST(Cutoff, TruncatedDriftEqualsDriftBelowHalf)
{
    auto const b = basis(5);
    RngStream rng(12, 0);
    DriftSpec const d = Example1Drift{1.0, 2, 0, 0.0, 0.0};
    for (int k = 0; k < 20; ++k)
    {
        Field const u = swave::test::random_field(5, rng, 0.1);
        double const n_trunc = 2.0 * std::sqrt(h1_norm_sq(u, b)) + 0.1;
        Field const a = apply_drift(d, u, 0.0, b);
        Field const t = truncated_drift(d, u, 0.0, b, n_trunc);
        EXPECT_EQ(a.coeffs, t.coeffs);
    }
}

TEST(Step, ExponentialMatchesPropagatorWithoutNoise)
{
    ModelSpec m = linear_model(3, 0.4, {}, {1.0, -0.5, 0.2}, {0.0, 0.3, 0.0});
    Stepper st(m, Scheme::exponential);
    State s = initial_state(m);
    WienerIncrement dW = st.make_increment();
    State const s0 = s;
    for (int k = 0; k < 7; ++k)
    {
        st.step(s, 0.3, dW);
    }
    for (std::size_t n = 0; n < 3; ++n)
    {
        Mat2 const p = linear_mode_propagator(m.basis.eta(n), m.alpha, 2.1);
        EXPECT_NEAR(s.u[n], p.a11 * s0.u[n] + p.a12 * s0.v[n], 1e-12);
        EXPECT_NEAR(s.v[n], p.a21 * s0.u[n] + p.a22 * s0.v[n], 1e-12);
    }
}

TEST(Step, EulerMaruyamaArithmetic)
{
    ModelSpec m = linear_model(2, 0.5, {}, {1.0}, {});
    Stepper st(m, Scheme::euler_maruyama);
    State s = initial_state(m);
    st.step(s, 0.01, st.make_increment());
    EXPECT_DOUBLE_EQ(s.u[0], 1.0);
    EXPECT_DOUBLE_EQ(s.v[0], -0.01);
    EXPECT_EQ(s.u[1], 0.0);
    EXPECT_EQ(s.v[1], 0.0);
}

TEST(Step, DtIndependenceOfExactScheme)
{
    ModelSpec m = linear_model(4, 0.3, {}, {0.5, 0.1, -0.2, 0.05}, {0.2});
    auto const a = simulate(m, 3.0, 0.1, Scheme::exponential, 1, {0, 10, nullptr});
    auto const b = simulate(m, 3.0, 0.01, Scheme::exponential, 1, {0, 100, nullptr});
    ASSERT_EQ(a.states.size(), b.states.size());
    for (std::size_t i = 0; i < a.states.size(); ++i)
    {
        for (std::size_t n = 0; n < 4; ++n)
        {
            EXPECT_NEAR(a.states[i].u[n], b.states[i].u[n], 1e-10);
            EXPECT_NEAR(a.states[i].v[n], b.states[i].v[n], 1e-10);
        }
    }
}

TEST(Step, DeterministicEnergyNonIncreasing)
{
    ModelSpec m = linear_model(6, 0.2, {}, {1.0, 0.5, 0.0, 0.3}, {0.0, -1.0});
    auto const tr = simulate(m, 10.0, 0.01, Scheme::exponential, 1, {0, 5, nullptr});
    double prev = energy(tr.states[0], m.basis);
    for (auto const& s : tr.states)
    {
        double const e = energy(s, m.basis);
        EXPECT_LE(e, prev * (1.0 + 1e-13));
        prev = e;
    }
}

TEST(Simulate, ZeroModelStaysZero)
{
    ModelSpec m = linear_model(3, 0.5, {0.0, 0.0, 0.0});
    auto const tr = simulate(m, 1.0, 0.01, Scheme::exponential, 3);
    EXPECT_FALSE(tr.stop.stopped);
    for (auto const& s : tr.states)
    {
        for (std::size_t n = 0; n < 3; ++n)
        {
            EXPECT_EQ(s.u[n], 0.0);
            EXPECT_EQ(s.v[n], 0.0);
        }
    }
}

TEST(Simulate, ExplosiveCubicStops)
{
    ModelSpec m{basis(8)};
    m.alpha = 0.5;
    m.drift = CustomPolynomialDrift{{0.0, 0.0, 0.0, 1.0}};
    m.covariance = CovarianceSpec::single({0.1});
    m.truncation = 40.0;
    m.g = Field(std::vector<double>{3.0});
    auto const tr = simulate(m, 5.0, 1e-3, Scheme::exponential, 1);
    EXPECT_TRUE(tr.stop.stopped);
    EXPECT_LT(tr.stop.tau, 5.0);
    EXPECT_GT(std::sqrt(h1_norm_sq(tr.states.back().u, m.basis)), 20.0);
}

TEST(Simulate, IdenticalSeedsBitIdentical)
{
    ModelSpec m{basis(4)};
    m.alpha = 0.5;
    m.drift = Example2Drift{0.1};
    m.noise = Example2Noise{0.3, 1.0};
    m.covariance.channels = {{1.0, 0.5}, {0.2, 0.2, 0.2}};
    m.g = Field(std::vector<double>{0.5, 0.1});
    auto const a = simulate(m, 1.0, 1e-3, Scheme::exponential, 77, {3, 50, nullptr});
    auto const b = simulate(m, 1.0, 1e-3, Scheme::exponential, 77, {3, 50, nullptr});
    ASSERT_EQ(a.states.size(), b.states.size());
    for (std::size_t i = 0; i < a.states.size(); ++i)
    {
        EXPECT_EQ(a.states[i].u.coeffs, b.states[i].u.coeffs);
        EXPECT_EQ(a.states[i].v.coeffs, b.states[i].v.coeffs);
        EXPECT_EQ(a.accumulators[i].martingale, b.accumulators[i].martingale);
    }
    auto const c = simulate(m, 1.0, 1e-3, Scheme::exponential, 78, {3, 50, nullptr});
    EXPECT_NE(a.states.back().u.coeffs, c.states.back().u.coeffs);
}

TEST(Simulate, TruncationNeutralBelowHalf)
{
    ModelSpec m{basis(4)};
    m.alpha = 0.5;
    m.drift = Example1Drift{1.0, 2, 0, 0.0, 0.0};
    m.noise = LinearStateNoise{0.2};
    m.covariance = CovarianceSpec::single({1.0, 0.5});
    m.g = Field(std::vector<double>{0.5});
    ModelSpec t = m;
    t.truncation = 50.0;
    auto const a = simulate(m, 2.0, 1e-3, Scheme::exponential, 5, {0, 10, nullptr});
    auto const b = simulate(t, 2.0, 1e-3, Scheme::exponential, 5, {0, 10, nullptr});
    ASSERT_FALSE(b.stop.stopped);
    ASSERT_FALSE(b.stop.ramp_entered);
    for (std::size_t i = 0; i < a.states.size(); ++i)
    {
        EXPECT_EQ(a.states[i].u.coeffs, b.states[i].u.coeffs);
        EXPECT_EQ(a.states[i].v.coeffs, b.states[i].v.coeffs);
    }
}

TEST(Simulate, InitialStateBeyondThreshold)
{
    ModelSpec m = linear_model(2, 0.5, {0.0}, {3.0});
    m.truncation = 4.0;  // > ||g||_1 = 3 but 3 > 4 / 2
    auto const tr = simulate(m, 1.0, 0.1, Scheme::exponential, 1);
    EXPECT_TRUE(tr.stop.stopped);
    EXPECT_EQ(tr.stop.tau, 0.0);
}

TEST(Model, ValidationErrors)
{
    ModelSpec m = linear_model(4, 0.5, {1.0});
    m.alpha = 0.0;
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m.alpha = 0.5;
    m.g = Field(std::vector<double>{2.0});
    m.truncation = 1.0;
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m.truncation = std::numeric_limits<double>::infinity();
    m.drift = CustomPolynomialDrift{std::vector<double>(12, 1.0)};  // degree 11 > 7
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m.drift = Example1Drift{1.0, 2, 0, 0.0, 0.0};
    m.noise = Example1Noise{1.0, 0.25, 1.5, 0.0};  // k must be < n (1 - 2 delta) = 1
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m.noise = Example1Noise{1.0, 0.25, 0.5, 0.0};
    EXPECT_NO_THROW(m.validate());
    m.drift = Example1Drift{1.0, 3, 2, 0.5, 0.0};
    m.noise = Example1Noise{1.0, 0.25, 0.9, 0.0};  // k < m (1 - 2 delta) = 1
    EXPECT_NO_THROW(m.validate());
    m.drift = Example1Drift{-1.0, 2, 0, 0.0, 0.0};
    EXPECT_THROW(m.validate(), std::invalid_argument);
    m.drift = ForcedLinearDrift{};
    m.noise = Example2Noise{0.1, 0.1};  // needs two channels
    EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(Oracle, InitialTime)
{
    auto const r = linear_moment_oracle(1, 0.0, 0.7, 1.0, 0.5, 1.0);
    EXPECT_EQ(r.mean, 0.7);
    EXPECT_EQ(r.variance, 0.0);
}

TEST(Oracle, MeanAgreesWithPropagator)
{
    // Released from rest the mean is the propagator's (1,1) entry.
    auto const r = linear_moment_oracle(1, 2.0, 1.0, 1.0, 0.5, 1.0, 0.0);
    EXPECT_NEAR(r.mean, linear_mode_propagator(1.0, 0.5, 2.0).a11, 1e-14);
    EXPECT_NEAR(r.mean, 0.150574, 1e-6);
}

TEST(Oracle, PureCosineMeanForm)
{
    // h e^{-at} cos(wt) is the mean for v0 = -alpha h.
    auto const r = linear_moment_oracle(1, 2.0, 1.0, 1.0, 0.5, 1.0, -0.5);
    EXPECT_NEAR(r.mean, std::exp(-1.0) * std::cos(std::sqrt(0.75) * 2.0), 1e-14);
    EXPECT_NEAR(r.mean, -0.0591, 5e-5);
}

TEST(Oracle, VarianceLimit)
{
    auto const r = linear_moment_oracle(1, 60.0, 0.0, 1.0, 0.5, 1.0);
    EXPECT_NEAR(r.variance, 0.5, 1e-10);
    EXPECT_NEAR(stationary_variance(1.0, 1.0, 0.5), 0.5, 1e-15);
    // c = 2, n = 3, sigma = 0.4: (1 / 4 alpha) (sigma / nc)^2
    auto const q = linear_moment_oracle(3, 80.0, 0.0, 0.4, 0.5, 2.0);
    EXPECT_NEAR(q.variance, 0.5 * std::pow(0.4 / 6.0, 2), 1e-12);
}

TEST(Oracle, RejectsOverdamped)
{
    EXPECT_THROW(linear_moment_oracle(1, 1.0, 1.0, 1.0, 1.5, 1.0), std::invalid_argument);
    EXPECT_THROW(linear_moment_oracle(1, 1.0, 1.0, 1.0, 1.0, 1.0), std::invalid_argument);
}

TEST(Oracle, LyapunovRecursionMatchesQuadrature)
{
    for (double alpha : {0.1, 0.5, 0.9})
    {
        auto const mm = mode_moments(1.0, alpha, 1.0, 0.0, 1.0, 0.3, 0.05, 400, MomentRecursion::exact);
        for (std::size_t i = 0; i < mm.size(); i += 37)
        {
            auto const r = linear_moment_oracle_eta(1.0, mm[i].t, 1.0, 1.0, alpha, 0.3);
            EXPECT_NEAR(mm[i].mean[0], r.mean, 1e-8);
            EXPECT_NEAR(mm[i].cov[0], r.variance, 1e-8);
        }
    }
}

TEST(Oracle, RecursionStationaryAllRegimes)
{
    // Var u -> sigma^2 / (4 alpha eta) also for overdamped modes.
    for (auto [eta, alpha] : std::vector<std::pair<double, double>>{{1.0, 0.5}, {1.0, 2.0}, {4.0, 2.0}})
    {
        auto const mm = mode_moments(eta, alpha, 2.0, 0.0, 0.0, 0.0, 0.5, 400, MomentRecursion::exact);
        EXPECT_NEAR(mm.back().cov[0], 2.0 / (4.0 * alpha * eta), 1e-9);
        EXPECT_NEAR(mm.back().cov[3], 2.0 / (4.0 * alpha), 1e-9);
    }
}

TEST(Oracle, ForcedMeanShift)
{
    // Steady mean u = f / eta.
    auto const mm = mode_moments(2.0, 0.5, 0.0, 1.0, 0.0, 0.0, 0.1, 2000, MomentRecursion::exact);
    EXPECT_NEAR(mm.back().mean[0], 0.5, 1e-10);
    EXPECT_NEAR(mm.back().mean[1], 0.0, 1e-10);
}

TEST(Weak, EulerMaruyamaApproachesExactLaw)
{
    // E e(phi_T) for one noisy mode from the exact law of each chain.
    auto energy_at_T = [](MomentRecursion r, double dt) {
        auto const steps = static_cast<std::size_t>(std::llround(1.0 / dt));
        auto const m = mode_moments(1.0, 0.5, 1.0, 0.0, 1.0, 0.0, dt, steps, r).back();
        return (m.mean[0] * m.mean[0] + m.cov[0]) + (m.mean[1] * m.mean[1] + m.cov[3]);
    };
    double const exact = energy_at_T(MomentRecursion::exact, 1e-3);
    double prev = 1e300;
    for (double dt : {0.1, 0.05, 0.025, 0.0125})
    {
        double const err = std::abs(energy_at_T(MomentRecursion::euler_maruyama, dt) - exact);
        EXPECT_LT(err, prev);
        prev = err;
    }
    EXPECT_LT(prev, 0.02);
}

TEST(Weak, SimulatedEulerMaruyamaMatchesItsLaw)
{
    ModelSpec m = linear_model(1, 0.5, {1.0}, {1.0});
    double const dt = 0.05;
    auto const law = mode_moments(1.0, 0.5, 1.0, 0.0, 1.0, 0.0, dt, 20, MomentRecursion::euler_maruyama).back();
    auto const lawx = mode_moments(1.0, 0.5, 1.0, 0.0, 1.0, 0.0, dt, 20, MomentRecursion::exponential).back();
    for (auto [scheme, target] : {std::pair{Scheme::euler_maruyama, law}, std::pair{Scheme::exponential, lawx}})
    {
        int const paths = 20000;
        double s = 0.0, s2 = 0.0;
        for (int p = 0; p < paths; ++p)
        {
            auto const tr = simulate(m, 1.0, dt, scheme, 9, {static_cast<std::uint64_t>(p), 20, nullptr});
            double const u = tr.states.back().u[0];
            s += u;
            s2 += u * u;
        }
        double const mean = s / paths;
        double const var = s2 / paths - mean * mean;
        EXPECT_NEAR(mean, target.mean[0], 3.0 * std::sqrt(var / paths));
        EXPECT_NEAR(var, target.cov[0], 3.0 * var * std::sqrt(2.0 / paths));
    }
}
