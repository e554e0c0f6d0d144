#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "swave/spectral.hpp"

using namespace swave;
using swave::test::basis;

TEST(Basis, DirichletEigenvalues)
{
    auto const b = basis(4);
    std::vector<double> const want{1, 4, 9, 16};
    for (std::size_t n = 0; n < 4; ++n)
    {
        EXPECT_DOUBLE_EQ(b.eta(n), want[n]);
    }
}

TEST(Basis, MassShift)
{
    auto const b = basis(3, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(b.eta(0), 2.0);
    EXPECT_DOUBLE_EQ(b.eta(1), 5.0);
    EXPECT_DOUBLE_EQ(b.eta(2), 10.0);
}

TEST(Basis, WaveSpeedScaling)
{
    auto const b = basis(2, 4.0);
    EXPECT_DOUBLE_EQ(b.eta(0), 4.0);
    EXPECT_DOUBLE_EQ(b.eta(1), 16.0);
}

TEST(Basis, GeneralLength)
{
    auto const b = build_basis(DomainSpec{2.0, 0}, OperatorSpec{1.0, 0.0}, 3);
    for (std::size_t n = 1; n <= 3; ++n)
    {
        double const k = n * std::numbers::pi / 2.0;
        EXPECT_NEAR(b.eta(n - 1), k * k, 1e-12);
    }
}

TEST(Basis, Rejections)
{
    EXPECT_THROW(build_basis(DomainSpec{}, OperatorSpec{0.0, 0.0}, 2), std::invalid_argument);
    EXPECT_THROW(build_basis(DomainSpec{}, OperatorSpec{1.0, -1.0}, 2), std::invalid_argument);
    EXPECT_THROW(build_basis(DomainSpec{std::numbers::pi, 5}, OperatorSpec{}, 3), std::invalid_argument);
    EXPECT_THROW(build_basis(DomainSpec{-1.0, 0}, OperatorSpec{}, 3), std::invalid_argument);
    EXPECT_THROW(build_basis(DomainSpec{}, OperatorSpec{}, 0), std::invalid_argument);
}

TEST(Basis, DefaultGridIsFourN)
{
    EXPECT_EQ(basis(5).grid_size(), 20u);
}

TEST(Basis, DiscreteOrthonormality)
{
    for (std::size_t grid : {0u, 13u, 17u})
    {
        auto const b = basis(6, 1.0, 0.0, grid);
        std::vector<double> prod(b.grid_size());
        for (std::size_t n = 0; n < 6; ++n)
        {
            for (std::size_t m = 0; m < 6; ++m)
            {
                auto const pn = b.phi_row(n), pm = b.phi_row(m);
                for (std::size_t j = 0; j < prod.size(); ++j)
                {
                    prod[j] = pn[j] * pm[j];
                }
                EXPECT_NEAR(b.integrate(prod), n == m ? 1.0 : 0.0, 1e-10) << "grid " << grid;
            }
        }
    }
}

TEST(Transform, UnitModeRoundTrip)
{
    auto const b = basis(6);
    Field const e2 = Field::unit(6, 2);
    Field const back = project(evaluate(e2, b), b);
    for (std::size_t n = 0; n < 6; ++n)
    {
        EXPECT_NEAR(back[n], n == 1 ? 1.0 : 0.0, 1e-10);
    }
}

TEST(Transform, ZeroGrid)
{
    auto const b = basis(4);
    GridFunction z;
    z.values.assign(b.grid_size(), 0.0);
    Field const f = project(z, b);
    for (double c : f.coeffs)
    {
        EXPECT_EQ(c, 0.0);
    }
}

TEST(Transform, ParsevalRandom)
{
    auto const b = basis(8);
    RngStream rng(5, 0);
    for (int trial = 0; trial < 20; ++trial)
    {
        Field const u = swave::test::random_field(8, rng);
        GridFunction const g = evaluate(u, b);
        std::vector<double> sq(g.values.size());
        for (std::size_t j = 0; j < sq.size(); ++j)
        {
            sq[j] = g.values[j] * g.values[j];
        }
        EXPECT_NEAR(b.integrate(sq), l2_norm_sq(u), 1e-8);
        Field const back = project(g, b);
        for (std::size_t n = 0; n < 8; ++n)
        {
            EXPECT_NEAR(back[n], u[n], 1e-10);
        }
    }
}

TEST(Transform, SizeMismatch)
{
    auto const b = basis(4);
    GridFunction g;
    g.values.assign(3, 0.0);
    EXPECT_THROW(project(g, b), std::invalid_argument);
    EXPECT_THROW(evaluate(Field(5), b), std::invalid_argument);
}

TEST(Norms, UnitModes)
{
    auto const b = basis(4);
    auto const r1 = norms_and_gradient(Field::unit(4, 1), b);
    EXPECT_NEAR(r1.l2, 1.0, 1e-14);
    EXPECT_NEAR(r1.h1, 1.0, 1e-14);
    auto const r2 = norms_and_gradient(Field::unit(4, 2), b);
    EXPECT_NEAR(r2.h1, 2.0, 1e-14);
}

TEST(Norms, GradientQuadrature)
{
    auto const b = basis(4);
    auto const r = norms_and_gradient(Field::unit(4, 1), b);
    std::vector<double> sq(r.gradient.values.size());
    for (std::size_t j = 0; j < sq.size(); ++j)
    {
        double const x = b.grid()[j];
        EXPECT_NEAR(r.gradient.values[j], std::sqrt(2.0 / std::numbers::pi) * std::cos(x), 1e-13);
        sq[j] = r.gradient.values[j] * r.gradient.values[j];
    }
    // cos^2 does not vanish at the walls; the interior rule leaves out h/2 at each end.
    double const h = std::numbers::pi / static_cast<double>(b.grid_size() + 1);
    EXPECT_NEAR(b.integrate(sq) + h * 2.0 / std::numbers::pi, 1.0, 1e-10);
}

TEST(Norms, NonFiniteRejected)
{
    auto const b = basis(2);
    Field u(2);
    u[0] = std::nan("");
    EXPECT_THROW(norms_and_gradient(u, b), std::domain_error);
}

TEST(Norms, PoincareAnchor)
{
    auto const b = basis(6, 2.0, 0.5);
    RngStream rng(11, 0);
    for (int trial = 0; trial < 200; ++trial)
    {
        Field const u = swave::test::random_field(6, rng);
        EXPECT_LE(b.eta(0) * l2_norm_sq(u), h1_norm_sq(u, b) * (1.0 + 1e-14));
    }
}

TEST(Basis, MaxExactDegree)
{
    // (d + 1) N < 2 (M + 1) with M = 4N.
    EXPECT_EQ(basis(4).max_exact_degree(), 7u);
}
