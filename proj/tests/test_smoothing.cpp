#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cavstab/carfollowing.hpp"
#include "cavstab/smoothing.hpp"

using namespace cavstab;

namespace {

// Straight transcription of the filter with 1-based sample indices.
std::vector<double> reference_sema(const std::vector<double>& x, double T, double dt) {
  const double delta = T / dt;
  const long n = static_cast<long>(x.size());
  std::vector<double> out(x.size());
  for (long k = 1; k <= n; ++k) {
    const long d = std::min({static_cast<long>(std::floor(3.0 * delta)), k - 1, n - k});
    double num = 0.0;
    double z = 0.0;
    for (long j = k - d; j <= k + d; ++j) {
      const double w = std::exp(-std::abs(static_cast<double>(k - j)) / delta);
      num += x[static_cast<std::size_t>(j - 1)] * w;
      z += w;
    }
    out[static_cast<std::size_t>(k - 1)] = num / z;
  }
  return out;
}

double variance(const std::vector<double>& x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size());
}

}  // namespace

TEST(SemaSmooth, ConstantSeriesIsFixed) {
  const std::vector<double> x(5, 5.0);
  for (double T : {0.1, 0.5, 4.0}) {
    for (double y : sema_smooth(x, T, 0.1)) EXPECT_NEAR(y, 5.0, 1e-12);
  }
}

TEST(SemaSmooth, LinearRampIsFixed) {
  std::vector<double> x(200);
  std::iota(x.begin(), x.end(), 0.0);
  const auto y = sema_smooth(x, 1.0, 0.1);
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(y[k], x[k], 1e-12);
}

TEST(SemaSmooth, SpikeValue) {
  const std::vector<double> x{0, 0, 1, 0, 0};
  const auto y = sema_smooth(x, 0.1, 0.1);
  const double expected = 1.0 / (1.0 + 2.0 * std::exp(-1.0) + 2.0 * std::exp(-2.0));
  EXPECT_NEAR(y[2], expected, 1e-15);
  EXPECT_NEAR(y[2], 0.49840, 1e-5);
  EXPECT_EQ(y.front(), 0.0);
  EXPECT_EQ(y.back(), 0.0);
  // index 1 (0-based) has half-window 1
  EXPECT_NEAR(y[1], std::exp(-1.0) / (1.0 + 2.0 * std::exp(-1.0)), 1e-15);
}

TEST(SemaSmooth, MatchesReferenceOnRandomSeries) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 3.0);
  std::uniform_int_distribution<int> len(1, 300);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(static_cast<std::size_t>(len(rng)));
    for (auto& v : x) v = g(rng);
    for (double T : {0.05, 0.37, 1.0, 4.0}) {
      const auto a = sema_smooth(x, T, 0.1);
      const auto b = reference_sema(x, T, 0.1);
      for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
    }
  }
}

TEST(SemaSmooth, EndpointsPassThrough) {
  const std::vector<double> x{3.0, -1.0, 8.0, 2.0, 7.5};
  const auto y = sema_smooth(x, 4.0, 0.1);
  EXPECT_EQ(y.front(), 3.0);
  EXPECT_EQ(y.back(), 7.5);
}

TEST(SemaSmooth, KernelWeightsNormalize) {
  for (double T : {0.1, 0.5, 1.0, 4.0, 0.73}) {
    const auto w = sema_kernel(T, 0.1);
    const double delta = T / 0.1;
    ASSERT_EQ(w.size(), static_cast<std::size_t>(std::floor(3.0 * delta)) + 1);
    double z = 0.0;
    for (std::size_t d = 0; d < w.size(); ++d) {
      EXPECT_GT(w[d], 0.0);
      EXPECT_NEAR(w[d], std::exp(-static_cast<double>(d) / delta), 1e-15);
      z += d == 0 ? w[d] : 2.0 * w[d];
    }
    double total = w[0] / z;
    for (std::size_t d = 1; d < w.size(); ++d) total += 2.0 * w[d] / z;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SemaSmooth, StaysWithinWindowRange) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  const double T = 1.0;
  const auto radius = static_cast<std::size_t>(std::floor(3.0 * T / 0.1));
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(100);
    for (auto& v : x) v = u(rng);
    const auto y = sema_smooth(x, T, 0.1);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const std::size_t d = std::min({radius, k, x.size() - 1 - k});
      const auto [lo, hi] = std::minmax_element(x.begin() + static_cast<long>(k - d), x.begin() + static_cast<long>(k + d + 1));
      EXPECT_GE(y[k], *lo - 1e-12);
      EXPECT_LE(y[k], *hi + 1e-12);
    }
  }
}

// Fixed endpoints make the filter a non-symmetric averaging operator, so a
// second pass can raise the variance of an already smoothed series. Measured
// against the raw noise the twice-smoothed series is always calmer.
TEST(SemaSmooth, TwiceSmoothedNoiseHasLowerVariance) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(400);
    for (auto& v : x) v = g(rng);
    for (double T : {0.5, 1.0, 4.0}) {
      const auto twice = sema_smooth(sema_smooth(x, T, 0.1), T, 0.1);
      EXPECT_LE(variance(twice), variance(x));
    }
  }
}

TEST(SemaSmooth, EmptySeriesThrows) {
  EXPECT_THROW(sema_smooth(std::vector<double>{}, 1.0, 0.1), EmptySeries);
  EXPECT_EQ(sema_smooth(std::vector<double>{4.0}, 1.0, 0.1), std::vector<double>{4.0});
}

TEST(Differentiate, LinearPositionsGiveConstantSpeed) {
  const auto v = differentiate(std::vector<double>{0, 1, 2, 3}, 0.1);
  for (double x : v) EXPECT_NEAR(x, 10.0, 1e-12);
}

TEST(Differentiate, ConstantPositionsGiveZero) {
  for (double x : differentiate(std::vector<double>(10, 7.0), 0.1)) EXPECT_EQ(x, 0.0);
}

TEST(Differentiate, CentralDifferenceExactForQuadratics) {
  const double dt = 0.1;
  const double a = 2.0;
  std::vector<double> x(50);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double t = static_cast<double>(k) * dt;
    x[k] = 0.5 * a * t * t;
  }
  const auto v = differentiate(x, dt);
  for (std::size_t k = 1; k + 1 < x.size(); ++k) EXPECT_NEAR(v[k], a * static_cast<double>(k) * dt, 1e-10);
}

TEST(Differentiate, NeedsTwoSamples) {
  EXPECT_THROW(differentiate(std::vector<double>{1.0}, 0.1), SeriesTooShort);
}

TEST(SmoothTrajectory, ConstantVelocityIsFixedPoint) {
  const auto tr = sample_profile(ConstantSpeed{13.0}, 300, 0.1, 5.0);
  const auto s = smooth_trajectory(tr);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    EXPECT_NEAR(s.positions[k], tr.positions[k], 1e-9);
    EXPECT_NEAR(s.velocities[k], 13.0, 1e-9);
    EXPECT_NEAR(s.accelerations[k], 0.0, 1e-8);
  }
}

TEST(SmoothTrajectory, ReplacesRecordedKinematics) {
  auto tr = sample_profile(ConstantSpeed{10.0}, 100, 0.1, 0.0);
  for (auto& v : tr.velocities) v = 99.0;
  for (auto& a : tr.accelerations) a = 42.0;
  const auto s = smooth_trajectory(tr);
  for (double v : s.velocities) EXPECT_NEAR(v, 10.0, 1e-9);
  for (double a : s.accelerations) EXPECT_NEAR(a, 0.0, 1e-8);
}

TEST(SmoothTrajectory, ReducesAccelerationExceedanceUnderNoise) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> noise(-0.2, 0.2);
  auto tr = sample_profile(SinusoidalSpeed{15.0, 2.0, 0.3, 0.0, 0.0}, 1000, 0.1, 0.0);
  for (auto& x : tr.positions) x += noise(rng);
  const auto raw_a = differentiate(differentiate(tr.positions, 0.1), 0.1);
  std::size_t raw_hits = 0;
  for (double a : raw_a) raw_hits += std::abs(a) > 3.0;
  const auto s = smooth_trajectory(tr);
  std::size_t smooth_hits = 0;
  for (double a : s.accelerations) smooth_hits += std::abs(a) > 3.0;
  EXPECT_LT(smooth_hits, raw_hits);
  EXPECT_DOUBLE_EQ(exceedance_fraction(raw_a, 3.0), static_cast<double>(raw_hits) / 1000.0);
}
