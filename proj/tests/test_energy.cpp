#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "swave/energy.hpp"

using namespace swave;
using swave::test::basis;

TEST(Energy, Examples)
{
    auto const b = basis(4);
    State s{Field(4), Field(4), 0.0};
    EXPECT_EQ(energy(s, b), 0.0);
    s.u = Field::unit(4, 1);
    EXPECT_DOUBLE_EQ(energy(s, b), 1.0);
}

TEST(Energy, EqualsNormSum)
{
    auto const b = basis(6, 1.5, 0.3);
    RngStream rng(3, 0);
    for (int k = 0; k < 50; ++k)
    {
        State const s = swave::test::random_state(6, rng);
        double const e = energy(s, b);
        EXPECT_NEAR(e, h1_norm_sq(s.u, b) + l2_norm_sq(s.v), 1e-12 * e);
        double direct = 0.0;
        for (std::size_t n = 0; n < 6; ++n)
        {
            double const eta = 1.5 * std::pow(n + 1.0, 2) + 0.3;
            direct += eta * s.u[n] * s.u[n] + s.v[n] * s.v[n];
        }
        EXPECT_NEAR(e, direct, 1e-12 * e);
    }
}

TEST(PseudoEnergy, Examples)
{
    auto const b = basis(3);
    RngStream rng(4, 0);
    State s = swave::test::random_state(3, rng);
    EXPECT_DOUBLE_EQ(pseudo_energy(s, 0.0, b), energy(s, b));
    s.u = Field(3);
    for (double l : {0.1, 0.7, 3.0})
    {
        EXPECT_DOUBLE_EQ(pseudo_energy(s, l, b), l2_norm_sq(s.v));
    }
}

TEST(PseudoEnergy, ExpansionIdentityProperty)
{
    auto const b = basis(8);
    RngStream rng(5, 0);
    for (int k = 0; k < 200; ++k)
    {
        State const s = swave::test::random_state(8, rng, std::exp(2.0 * rng.normal()));
        double const l = 2.0 * rng.uniform();
        double const d = pseudo_energy(s, l, b);
        double const x = pseudo_energy_expanded(s, l, b);
        EXPECT_NEAR(d, x, 1e-12 * std::max(1.0, energy(s, b)));
    }
}

TEST(Lambda0, Examples)
{
    EXPECT_DOUBLE_EQ(lambda0(0.5, 1.0), 0.25);
    EXPECT_DOUBLE_EQ(lambda0(1.0, 2.0), 0.5);
    EXPECT_DOUBLE_EQ(lambda0(1e6, 1.0), 1.0 / 4e6);
    EXPECT_THROW(lambda0(0.0, 1.0), std::invalid_argument);
}

TEST(Equivalence, Example)
{
    auto const c = equivalence_constants(0.25, 1.0);
    EXPECT_NEAR(c.mu1, std::sqrt(4.0625), 1e-15);
    EXPECT_NEAR(c.mu1, 2.015564, 1e-6);
    EXPECT_NEAR(c.lower, 1.765564 / 2.265564, 1e-6);
    EXPECT_NEAR(c.lower, 0.77931, 1e-5);
    EXPECT_NEAR(c.upper, 1.28320, 5e-6);
    EXPECT_NEAR(c.lower * c.upper, 1.0, 1e-15);
    auto const z = equivalence_constants(1e-12, 1.0);
    EXPECT_NEAR(z.lower, 1.0, 1e-11);
    EXPECT_NEAR(z.upper, 1.0, 1e-11);
    // mu1 > lambda for every lambda >= 0, so only the domain is checked.
    EXPECT_THROW(equivalence_constants(-0.1, 1.0), std::invalid_argument);
    EXPECT_THROW(equivalence_constants(0.1, 0.0), std::invalid_argument);
}

TEST(Equivalence, MuFractionFixedPoint)
{
    for (double f : {0.0, 0.5, 0.9})
    {
        double const l = lambda_for_mu_fraction(f, 2.0);
        EXPECT_NEAR(l, f * std::sqrt(4.0 * 2.0 + l * l), 1e-12);
    }
    EXPECT_THROW(lambda_for_mu_fraction(1.0, 1.0), std::invalid_argument);
}

TEST(Equivalence, SandwichProperty)
{
    auto const b = basis(5, 1.0, 0.5);
    double const eta1 = b.eta(0);
    RngStream rng(6, 0);
    int violations = 0;
    for (int k = 0; k < 10000; ++k)
    {
        State const s = swave::test::random_state(5, rng);
        double const l = 0.95 * std::sqrt(4.0 * eta1) * rng.uniform();
        auto const c = equivalence_constants(l, eta1);
        double const e = energy(s, b);
        double const el = pseudo_energy(s, l, b);
        violations += (el < c.lower * e * (1.0 - 1e-12)) || (el > c.upper * e * (1.0 + 1e-12));
    }
    EXPECT_EQ(violations, 0);
}

TEST(Equivalence, BoundAttainedInLimit)
{
    // single mode, u_1 = 1, v = -mu/2 u: e^l / e = (mu - l) / (mu + l) up to rounding
    double const eta = 1.0, l = 0.25;
    auto const c = equivalence_constants(l, eta);
    auto const b = basis(1);
    double const v = -(c.mu1 + l) / 2.0;
    State const s{Field(std::vector<double>{1.0}), Field(std::vector<double>{v}), 0.0};
    EXPECT_NEAR(pseudo_energy(s, l, b) / energy(s, b), c.lower, 1e-12);
}

TEST(Envelope, Examples)
{
    EnergyParams const p{0.25, 0.2};
    EXPECT_DOUBLE_EQ(exp_envelope(0.0, 3.0, p, nullptr, nullptr), 3.0);
    EXPECT_NEAR(exp_envelope(4.0, 3.0, p, nullptr, nullptr), 3.0 * std::exp(-0.8), 1e-14);
    auto const q = [](double) { return 0.7; };
    EXPECT_NEAR(exp_envelope(400.0, 3.0, p, nullptr, q), 0.7 / 0.2, 1e-9);
    // quadrature vs closed form with forcing
    auto const f = [](double) { return 0.3; };
    EXPECT_NEAR(exp_envelope(7.0, 2.0, p, f, q), exp_envelope_const(7.0, 2.0, p, 0.3, 0.7), 1e-10);
    EXPECT_THROW(exp_envelope(1.0, 1.0, EnergyParams{0.25, 0.3}, nullptr, nullptr), std::invalid_argument);
    EXPECT_THROW(exp_envelope(1.0, 1.0, EnergyParams{0.25, 0.0}, nullptr, nullptr), std::invalid_argument);
}

TEST(Envelope, MonotoneInInputs)
{
    EnergyParams const p{0.25, 0.2};
    for (double t : {0.5, 3.0, 20.0})
    {
        EXPECT_LT(exp_envelope_const(t, 1.0, p, 0.1, 0.1), exp_envelope_const(t, 2.0, p, 0.1, 0.1));
        EXPECT_LT(exp_envelope_const(t, 1.0, p, 0.1, 0.1), exp_envelope_const(t, 1.0, p, 0.2, 0.1));
        EXPECT_LT(exp_envelope_const(t, 1.0, p, 0.1, 0.1), exp_envelope_const(t, 1.0, p, 0.1, 0.2));
    }
    double const k = equivalence_constants(0.25, 1.0).upper;
    EXPECT_NEAR(exp_envelope_energy(2.0, 1.0, p, 1.0, 0.0, 0.0), k * std::exp(-0.4), 1e-14);
}

TEST(Envelope, HomogeneousDecayDominatesDeterministicFlow)
{
    // alpha = 0.5, eta1 = 1: lambda0 = 0.25, alpha1 = 0.99 lambda0
    ModelSpec m = swave::test::linear_model(4, 0.5, {}, {1.0, 0.3, -0.2}, {0.0, 0.5});
    double const l = lambda0(0.5, 1.0);
    EnergyParams const p{l, 0.99 * l};
    auto const tr = simulate(m, 30.0, 0.01, Scheme::exponential, 1, {0, 10, nullptr});
    double const el0 = pseudo_energy(tr.states.front(), l, m.basis);
    for (auto const& s : tr.states)
    {
        EXPECT_LE(pseudo_energy(s, l, m.basis), exp_envelope_const(s.t, el0, p, 0.0, 0.0) * (1.0 + 1e-12));
    }
}

TEST(Residual, ZeroTrajectory)
{
    ModelSpec m = swave::test::linear_model(3, 0.5, {0.0});
    auto const tr = simulate(m, 1.0, 0.01, Scheme::exponential, 1);
    for (double r : energy_identity_residual(tr, m))
    {
        EXPECT_EQ(r, 0.0);
    }
}

TEST(Residual, DeterministicLinearIsExact)
{
    ModelSpec m = swave::test::linear_model(6, 0.4, {}, {1.0, -0.5, 0.25}, {0.3, 0.0, 0.1});
    m.drift = ForcedLinearDrift{{0.2, 0.1}};
    auto const tr = simulate(m, 10.0, 0.01, Scheme::exponential, 1, {0, 10, nullptr});
    for (double r : energy_identity_residual(tr, m))
    {
        EXPECT_LT(std::abs(r), 1e-8);
    }
}

TEST(Residual, MissingAccumulators)
{
    ModelSpec m = swave::test::linear_model(2, 0.5, {});
    Trajectory tr;
    tr.states.push_back(initial_state(m));
    EXPECT_THROW(energy_identity_residual(tr, m), std::invalid_argument);
}

TEST(SuperEnergy, Examples)
{
    auto const b = basis(4);
    State s{Field(4), Field(std::vector<double>{0.5, 0.0, 1.0, 0.0}), 0.0};
    auto const z = phi_superenergy(s, Example1Drift{1.0, 2, 0, 0.0, 0.0}, b);
    EXPECT_EQ(z.phi, 0.0);
    EXPECT_DOUBLE_EQ(z.j, 1.25);

    s.u = Field::unit(4, 1);
    s.v = Field(4);
    EXPECT_NEAR(phi_superenergy(s, Example1Drift{2.0, 1, 0, 0.0, 0.0}, b).phi, 2.0, 1e-12);
    double const pi = std::numbers::pi;
    auto const q = phi_superenergy(s, Example1Drift{1.0, 2, 0, 0.0, 0.0}, b);
    EXPECT_NEAR(q.phi, 0.5 * std::pow(2.0 / pi, 2) * 3.0 * pi / 8.0, 1e-12);
    EXPECT_NEAR(q.phi, 0.238732, 1e-6);
    EXPECT_NEAR(q.j, 1.0 + q.phi, 1e-15);
}

TEST(SuperEnergy, DriftIsMinusHalfGradient)
{
    // F = -Phi'/2 checked by a central difference along each mode.
    auto const b = basis(4);
    DriftSpec const d = Example1Drift{1.0, 2, 0, 0.0, 0.0};
    RngStream rng(8, 0);
    Field const u = swave::test::random_field(4, rng, 0.5);
    Field const f = apply_drift(d, u, 0.0, b);
    double const h = 1e-5;
    for (std::size_t n = 0; n < 4; ++n)
    {
        Field up = u, dn = u;
        up[n] += h;
        dn[n] -= h;
        double const grad = (superenergy(d, up, b) - superenergy(d, dn, b)) / (2.0 * h);
        EXPECT_NEAR(f[n], -0.5 * grad, 1e-8);
    }
}

TEST(SuperEnergy, LinearFamilyIsZero)
{
    auto const b = basis(3);
    EXPECT_EQ(superenergy(ForcedLinearDrift{{1.0}}, Field::unit(3, 1), b), 0.0);
}

TEST(Example1Conditions, PassingExample)
{
    Example1Params p;
    p.kappa = 1.0;
    p.n = 2;
    p.r0 = 1.0;
    p.zeta0 = 1.0;
    p.lambda = 0.25;
    auto const r = example1_conditions(p);
    EXPECT_DOUBLE_EQ(r.beta1, 2.0);
    EXPECT_NEAR(r.beta2, 0.005, 1e-15);
    EXPECT_NEAR(r.beta3, 0.005, 1e-15);
    EXPECT_NEAR(r.gamma3, 0.01, 1e-15);
    EXPECT_EQ(r.gamma1, 0.0);
    EXPECT_EQ(r.gamma2, 0.0);
    EXPECT_EQ(r.delta1, 0.0);
    // 2 kappa l^2 - beta3 l - beta2 = 0.11875 against l^2/2 = 0.03125
    EXPECT_NEAR(r.first, 0.11875 - 0.03125, 1e-9);
    EXPECT_NEAR(r.second, 0.0025 - 0.03125, 1e-9);
    EXPECT_TRUE(r.first_ok);
    EXPECT_TRUE(r.second_ok);
    EXPECT_TRUE(r.pass);
}

TEST(Example1Conditions, NoNoise)
{
    Example1Params p;
    p.zeta0 = 0.0;
    p.r0 = 1.0;
    auto const r = example1_conditions(p);
    EXPECT_EQ(r.beta3, 0.0);
    EXPECT_EQ(r.gamma3, 0.0);
}

TEST(Example1Conditions, QuarterThreshold)
{
    Example1Params p;
    p.r0 = 1.0;
    p.zeta0 = 1.0;
    double prev = 1e300;
    for (double e : {1e-2, 1e-4, 1e-6, 1e-9})
    {
        p.eps = p.eps1 = p.eps2 = e;
        double const k = example1_kappa_threshold(p);
        EXPECT_GT(k, 0.25);
        EXPECT_LT(k, prev);
        prev = k;
    }
    EXPECT_NEAR(prev, 0.25, 1e-7);

    // kappa = 1/4 with vanishing epsilons: equality, so the strict test fails.
    p.eps = p.eps1 = p.eps2 = 0.0;
    p.kappa = 0.25;
    auto const r = example1_conditions(p);
    EXPECT_NEAR(r.first, 0.0, 1e-15);
    EXPECT_FALSE(r.first_ok);
    p.kappa = 0.2501;
    EXPECT_TRUE(example1_conditions(p).first_ok);
}

TEST(Example1Conditions, DomainViolations)
{
    Example1Params p;
    p.k = 1.0;  // k < n (1 - 2 delta) = 1 fails
    EXPECT_THROW(example1_conditions(p), std::invalid_argument);
    p.k = 0.5;
    p.delta = 0.5;
    EXPECT_THROW(example1_conditions(p), std::invalid_argument);
}

TEST(Example2Conditions, Scenario)
{
    Example2Params p;
    p.kappa = 0.1;
    p.eta1 = 2.0;
    p.alpha = 1.0;
    auto const r = example2_conditions(p);
    double const pi = std::numbers::pi;
    double const k1 = 0.01 / 2.0 * std::pow(1.0 + pi / 2.0, 2);
    EXPECT_NEAR(r.k1, k1, 1e-12);
    EXPECT_NEAR(r.k1, 0.033045, 1e-6);
    EXPECT_NEAR(r.b1, std::pow(0.1 * pi / 4.0, 2), 1e-12);
    EXPECT_NEAR(r.b1, 0.0061685, 1e-7);
    EXPECT_EQ(r.c1, 0.0);
    EXPECT_DOUBLE_EQ(r.lambda0, 0.5);
    EXPECT_TRUE(r.pass);
    ASSERT_FALSE(r.admissible.empty);
    EXPECT_NEAR(r.admissible.lo, std::sqrt(2.0 * k1), 1e-9);
    EXPECT_NEAR(r.admissible.lo, 0.25708, 5e-6);
    EXPECT_NEAR(r.admissible.hi, 0.5, 1e-9);
}

TEST(Example2Conditions, NoDrift)
{
    Example2Params p;
    p.kappa = 0.0;
    p.sigma1 = 0.5;
    p.r0 = 1.0;
    p.lambda = 0.5;  // sigma1^2 r0 = 0.25 <= 0.5 / 2
    auto r = example2_conditions(p);
    EXPECT_EQ(r.b1, 0.0);
    EXPECT_EQ(r.k1, 0.0);
    EXPECT_TRUE(r.pass);
    p.lambda = 0.4;
    EXPECT_FALSE(example2_conditions(p).pass);
}

TEST(Example2Conditions, NoiseFreeDriftFree)
{
    Example2Params p;
    p.kappa = 0.0;
    for (double l : {1e-6, 0.1, 0.5})
    {
        p.lambda = l;
        EXPECT_TRUE(example2_conditions(p).pass);
    }
    p.lambda.reset();
    auto const r = example2_conditions(p);
    EXPECT_NEAR(r.admissible.hi, 0.5, 1e-12);
    EXPECT_TRUE(r.admissible.lo_open);
}

TEST(Example2Conditions, HugeKappaFails)
{
    Example2Params p;
    p.kappa = 1e6;
    auto const r = example2_conditions(p);
    EXPECT_FALSE(r.pass);
    EXPECT_TRUE(r.admissible.empty);
}

TEST(Example2Conditions, MaxIsStricterThanMin)
{
    // b passes and k fails at this lambda: C3 must fail.
    EXPECT_FALSE(conditions_c_hold(0.0, 0.0, 1.0, 0.0, 1.0));
    EXPECT_TRUE(conditions_c_hold(0.5, 0.0, 0.5, 0.0, 1.0));
}

TEST(Residual, ExponentialSchemeBalanceIsExactWithRealizedQv)
{
    // Kick-then-flow conserves the discrete balance path by path.
    ModelSpec m = swave::test::linear_model(4, 0.5, {1.0, 0.5}, {1.0});
    m.drift = ForcedLinearDrift{{0.3}};
    auto const tr = simulate(m, 5.0, 0.01, Scheme::exponential, 2, {0, 10, nullptr});
    for (double r : energy_identity_residual(tr, m, QvRule::realized))
    {
        EXPECT_LT(std::abs(r), 1e-10);
    }
}
