#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "dk/rng.hpp"
#include "dk/statistics.hpp"

using namespace dk;

// Known-answer vectors of the Random123 reference distribution (Philox4x32-10).
TEST(Philox, KnownAnswerZero) {
  const PhiloxCounter out = philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerOnes) {
  const PhiloxCounter out = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                       {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out, (PhiloxCounter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
  const PhiloxCounter out = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                       {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out, (PhiloxCounter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(NoiseStream, SameAddressSameValue) {
  const NoiseStream a(42, 7), b(42, 7);
  for (std::uint64_t step = 0; step < 50; ++step) {
    const auto pa = a.gaussian_pair(3, step, 1);
    const auto pb = b.gaussian_pair(3, step, 1);
    EXPECT_EQ(pa.first, pb.first);
    EXPECT_EQ(pa.second, pb.second);
  }
}

TEST(NoiseStream, AddressesAreIndependent) {
  const NoiseStream base(42, 7);
  const double x = base.gaussian_pair(0, 0, 0).first;
  EXPECT_NE(x, NoiseStream(43, 7).gaussian_pair(0, 0, 0).first);
  EXPECT_NE(x, NoiseStream(42, 8).gaussian_pair(0, 0, 0).first);
  EXPECT_NE(x, NoiseStream(42, 7, StreamPurpose::LDiffusion).gaussian_pair(0, 0, 0).first);
  EXPECT_NE(x, base.gaussian_pair(1, 0, 0).first);
  EXPECT_NE(x, base.gaussian_pair(0, 1, 0).first);
  EXPECT_NE(x, base.gaussian_pair(0, 0, 1).first);
}

TEST(NoiseStream, GaussiansMatchPairs) {
  const NoiseStream s(5, 1);
  double out[5];
  s.gaussians(2, 9, out, 5);
  const auto p0 = s.gaussian_pair(2, 9, 0);
  const auto p1 = s.gaussian_pair(2, 9, 1);
  const auto p2 = s.gaussian_pair(2, 9, 2);
  EXPECT_EQ(out[0], p0.first);
  EXPECT_EQ(out[1], p0.second);
  EXPECT_EQ(out[2], p1.first);
  EXPECT_EQ(out[3], p1.second);
  EXPECT_EQ(out[4], p2.first);
}

TEST(NoiseStream, UniformInUnitInterval) {
  const NoiseStream s(11, 0);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = s.uniform(0, i, 0);
    EXPECT_GT(u, 0.0);
    EXPECT_LE(u, 1.0);
  }
  EXPECT_EQ(uniform_open_closed(0xffffffffu, 0xffffffffu), 1.0);
  EXPECT_GT(uniform_open_closed(0, 0), 0.0);
}

TEST(NoiseStream, GaussianMoments) {
  const NoiseStream s(2024, 3);
  StreamingMoments m1, m2, m4;
  for (std::uint64_t i = 0; i < 200000; ++i) {
    const auto [a, b] = s.gaussian_pair(0, i, 0);
    for (double x : {a, b}) {
      m1.push(x);
      m2.push(x * x);
      m4.push(x * x * x * x);
    }
  }
  EXPECT_LE(std::abs(m1.mean()), 3.0 * m1.estimate().std_error);
  EXPECT_LE(std::abs(m2.mean() - 1.0), 3.0 * m2.estimate().std_error);
  EXPECT_LE(std::abs(m4.mean() - 3.0), 3.0 * m4.estimate().std_error);
}

TEST(Splitmix, DistinctOutputs) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(splitmix64(i));
  EXPECT_EQ(seen.size(), 1000u);
}
