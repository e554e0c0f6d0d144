#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "swave/dynamics.hpp"
#include "swave/estimators.hpp"

namespace swave::test {

inline SpectralBasis basis(std::size_t n, double c2 = 1.0, double b0 = 0.0, std::size_t grid = 0)
{
    return build_basis(DomainSpec{std::numbers::pi, grid}, OperatorSpec{c2, b0}, n);
}

// Linear drift, additive noise with the given single-channel spectrum.
inline ModelSpec linear_model(std::size_t n, double alpha, std::vector<double> sigma, std::vector<double> g = {},
                              std::vector<double> h = {}, double b0 = 0.0)
{
    ModelSpec m{basis(n, 1.0, b0)};
    m.alpha = alpha;
    if (!sigma.empty())
    {
        m.covariance = CovarianceSpec::single(std::move(sigma));
    }
    m.g = Field(std::move(g));
    m.h = Field(std::move(h));
    return m;
}

inline Field random_field(std::size_t n, RngStream& rng, double scale = 1.0)
{
    Field f(n);
    for (auto& c : f.coeffs)
    {
        c = scale * rng.normal();
    }
    return f;
}

inline State random_state(std::size_t n, RngStream& rng, double scale = 1.0)
{
    State s;
    s.u = random_field(n, rng, scale);
    s.v = random_field(n, rng, scale);
    return s;
}

}  // namespace swave::test
