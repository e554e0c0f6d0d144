#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "swave/rng.hpp"

using namespace swave;

TEST(Philox, KnownAnswerZero)
{
    auto const out = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerOnes)
{
    auto const f = 0xffffffffu;
    auto const out = Philox4x32::generate({f, f, f, f}, {f, f});
    EXPECT_EQ(out[0], 0x408f276du);
    EXPECT_EQ(out[1], 0x41c83b0eu);
    EXPECT_EQ(out[2], 0xa20bc7c6u);
    EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi)
{
    auto const out =
        Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out[0], 0xd16cfe09u);
    EXPECT_EQ(out[1], 0x94fdccebu);
    EXPECT_EQ(out[2], 0x5001e420u);
    EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(RngStream, Deterministic)
{
    RngStream a(42, make_stream_id(StreamPurpose::path_noise, 7));
    RngStream b(42, make_stream_id(StreamPurpose::path_noise, 7));
    for (int i = 0; i < 100; ++i)
    {
        EXPECT_EQ(a.normal(), b.normal());
    }
}

TEST(RngStream, StreamsDiffer)
{
    std::set<double> first;
    for (std::uint64_t p = 0; p < 50; ++p)
    {
        first.insert(RngStream(1, make_stream_id(StreamPurpose::path_noise, p)).uniform());
    }
    first.insert(RngStream(1, make_stream_id(StreamPurpose::bootstrap, 0)).uniform());
    first.insert(RngStream(2, make_stream_id(StreamPurpose::path_noise, 0)).uniform());
    EXPECT_EQ(first.size(), 52u);
}

TEST(RngStream, PurposesDoNotCollide)
{
    EXPECT_NE(make_stream_id(StreamPurpose::path_noise, 5), make_stream_id(StreamPurpose::bootstrap, 5));
    EXPECT_NE(make_stream_id(StreamPurpose::diagnostic, 0), make_stream_id(StreamPurpose::path_noise, 0));
}

TEST(RngStream, UniformOpenInterval)
{
    RngStream r(3, 0);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    int const n = 200000;
    for (int i = 0; i < n; ++i)
    {
        double const u = r.uniform();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        sum += u;
    }
    EXPECT_GT(lo, 0.0);
    EXPECT_LT(hi, 1.0);
    // mean 1/2, sd of the mean sqrt(1/12/n)
    EXPECT_NEAR(sum / n, 0.5, 3.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(RngStream, NormalMoments)
{
    RngStream r(9, 1);
    int const n = 200000;
    double s1 = 0.0, s2 = 0.0, s4 = 0.0;
    for (int i = 0; i < n; ++i)
    {
        double const z = r.normal();
        s1 += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    EXPECT_NEAR(s1 / n, 0.0, 3.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 1.0, 3.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(s4 / n, 3.0, 3.0 * std::sqrt(96.0 / n));
}
