#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cavstab/calibration.hpp"
#include "cavstab/trajectory_io.hpp"

using namespace cavstab;

namespace {

const FvdmParams kTruth{2.0, 1.5, 3.0, 25.0, 12.0, 0.1, 0.0};

VehiclePair truth_pair(const FvdmParams& theta = kTruth, double duration = 100.0) {
  return generate_synthetic_pair(theta, SinusoidalSpeed{12.0, 1.0, 0.3, 5.0, 0.0}, duration,
                                 equilibrium_headway(theta, 12.0));
}

}  // namespace

TEST(ErrorMeasures, ZeroWhenIdentical) {
  const std::vector<double> d{10.0, 12.0, 7.5};
  EXPECT_EQ(error_abs(d, d), 0.0);
  EXPECT_EQ(error_rel(d, d), 0.0);
  EXPECT_EQ(error_mixed(d, d), 0.0);
}

TEST(ErrorMeasures, HandExamples) {
  const std::vector<double> data{10.0, 10.0};
  const std::vector<double> sim{11.0, 11.0};
  EXPECT_NEAR(error_abs(sim, data), 0.1, 1e-15);
  EXPECT_NEAR(error_mixed(sim, data), 0.1, 1e-15);
  EXPECT_NEAR(error_rel(std::vector<double>{11.0, 3.0}, std::vector<double>{10.0, 2.0}),
              std::sqrt((0.01 + 0.25) / 2.0), 1e-15);
  EXPECT_NEAR(error_rel(std::vector<double>{11.0, 3.0}, std::vector<double>{10.0, 2.0}), 0.3606, 1e-4);
}

TEST(ErrorMeasures, AbsoluteErrorIsScaleFree) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(5.0, 50.0);
  std::vector<double> d(30), s(30);
  for (std::size_t k = 0; k < d.size(); ++k) {
    d[k] = u(rng);
    s[k] = u(rng);
  }
  for (double c : {0.01, 3.0, 1e4}) {
    std::vector<double> dc(d), sc(s);
    for (auto& x : dc) x *= c;
    for (auto& x : sc) x *= c;
    EXPECT_NEAR(error_abs(sc, dc), error_abs(s, d), 1e-12);
    EXPECT_NEAR(error_rel(sc, dc), error_rel(s, d), 1e-12);
  }
}

TEST(ErrorMeasures, RelativeErrorWeighsSmallHeadways) {
  const std::vector<double> data{20.0, 4.0};
  EXPECT_GT(error_rel(std::vector<double>{20.0, 5.0}, data), error_rel(std::vector<double>{21.0, 4.0}, data));
}

TEST(ErrorMeasures, MixedLiesBetweenAbsAndRelOnConstantData) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> level(1.0, 60.0);
  std::normal_distribution<double> dev(0.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::vector<double> data(25, level(rng));
    std::vector<double> sim(data);
    for (auto& x : sim) x += dev(rng);
    const double a = error_abs(sim, data);
    const double r = error_rel(sim, data);
    const double m = error_mixed(sim, data);
    EXPECT_GE(m, std::min(a, r) - 1e-12);
    EXPECT_LE(m, std::max(a, r) + 1e-12);
  }
}

TEST(ErrorMeasures, InputValidation) {
  EXPECT_THROW(error_abs(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), LengthMismatch);
  EXPECT_THROW(error_rel(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 0.0}), NonpositiveHeadway);
  EXPECT_THROW(error_mixed(std::vector<double>{1.0}, std::vector<double>{-3.0}), NonpositiveHeadway);
  EXPECT_THROW(error_mixed(std::vector<double>{}, std::vector<double>{}), EmptySeries);
}

TEST(Fitness, GroundTruthIsExact) {
  const auto pair = truth_pair();
  EXPECT_LT(evaluate_fitness(kTruth, pair), 1e-6);
  EXPECT_EQ(evaluate_fitness(kTruth, pair), evaluate_fitness(kTruth, pair));
}

TEST(Fitness, CollisionIsPenalized) {
  const auto pair = truth_pair();
  // A very fast, insensitive driver runs into the leader.
  const FvdmParams reckless{1.0, 1.0, 0.1, 0.1, 70.0, 10.0, 3.0};
  EXPECT_EQ(evaluate_fitness(reckless, pair), kCollisionPenalty);
}

TEST(Fitness, DelayOfOneStepChangesLittle) {
  const auto pair = truth_pair();
  FvdmParams shifted = kTruth;
  shifted.tau = 0.1;
  EXPECT_LT(evaluate_fitness(shifted, pair), 0.05);
}

TEST(Bounds, PinTauAndContains) {
  auto b = ParamBounds::defaults();
  EXPECT_TRUE(b.contains(kTruth));
  b.pin_tau();
  EXPECT_EQ(b.lo.tau, 0.0);
  EXPECT_EQ(b.hi.tau, 0.0);
  FvdmParams p = kTruth;
  p.tau = 0.5;
  EXPECT_FALSE(b.contains(p));
  p.alpha = 11.0;
  EXPECT_FALSE(ParamBounds::defaults().contains(p));
}

TEST(Genetic, SameSeedSameResult) {
  const auto pair = truth_pair(kTruth, 30.0);
  GaConfig cfg;
  cfg.max_generations = 40;
  cfg.rng_seed = 99;
  const auto a = calibrate_ga(pair, ParamBounds::defaults(), cfg);
  const auto b = calibrate_ga(pair, ParamBounds::defaults(), cfg);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.fitness_history, b.fitness_history);
  EXPECT_EQ(a.generations_run, b.generations_run);
  cfg.rng_seed = 100;
  const auto c = calibrate_ga(pair, ParamBounds::defaults(), cfg);
  EXPECT_NE(a.fitness_history, c.fitness_history);
}

TEST(Genetic, HistoryIsMonotoneAndResultInBounds) {
  const auto pair = truth_pair(kTruth, 30.0);
  GaConfig cfg;
  cfg.max_generations = 60;
  const auto bounds = ParamBounds::defaults();
  const auto r = calibrate_ga(pair, bounds, cfg);
  ASSERT_EQ(r.fitness_history.size(), r.generations_run);
  EXPECT_EQ(r.generations_run, 60u);
  EXPECT_EQ(r.converged_by, StopReason::MaxGenerations);
  for (std::size_t i = 1; i < r.fitness_history.size(); ++i) {
    EXPECT_LE(r.fitness_history[i], r.fitness_history[i - 1]);
  }
  EXPECT_TRUE(bounds.contains(r.theta));
  EXPECT_EQ(r.mixed_error, r.fitness_history.back());
  EXPECT_DOUBLE_EQ(r.mixed_error, evaluate_fitness(r.theta, pair));
  const double tau_steps = r.theta.tau / kTauStep;
  EXPECT_NEAR(tau_steps, std::round(tau_steps), 1e-9);
}

TEST(Genetic, StagnatesWhenTruthIsSeeded) {
  const FvdmParams truth{2.0, 1.5, 3.0, 25.0, 12.0, 0.1, 0.2};
  const auto pair = truth_pair(truth, 30.0);
  GaConfig cfg;
  const std::vector<FvdmParams> seeds{truth};
  const auto r = calibrate_ga(pair, ParamBounds::defaults(), cfg, seeds);
  EXPECT_EQ(r.converged_by, StopReason::Stagnation);
  EXPECT_LE(r.generations_run, cfg.stagnation_limit + 1);
  EXPECT_EQ(r.mixed_error, 0.0);
  EXPECT_EQ(r.theta, truth);
}

TEST(Genetic, PinnedDelayStaysPinned) {
  const auto pair = truth_pair(kTruth, 30.0);
  GaConfig cfg;
  cfg.max_generations = 20;
  auto bounds = ParamBounds::defaults();
  bounds.pin_tau();
  EXPECT_EQ(calibrate_ga(pair, bounds, cfg).theta.tau, 0.0);
}

TEST(Genetic, RecoversSyntheticDriver) {
  const auto pair = truth_pair();
  GaConfig cfg;
  cfg.rng_seed = 3;
  const auto r = calibrate_ga(pair, ParamBounds::defaults(), cfg);
  EXPECT_LT(r.mixed_error, 1e-3);
  EXPECT_LT(r.abs_error, 1e-2);
  EXPECT_LT(r.rel_error, 1e-2);
}

TEST(Genetic, ConfigValidation) {
  const auto pair = truth_pair(kTruth, 5.0);
  GaConfig cfg;
  cfg.elitism_count = cfg.population_size;
  EXPECT_THROW(calibrate_ga(pair, ParamBounds::defaults(), cfg), DataError);
  cfg = GaConfig{};
  cfg.mutation_probability = 0.0;
  EXPECT_THROW(calibrate_ga(pair, ParamBounds::defaults(), cfg), DataError);
  auto bounds = ParamBounds::defaults();
  bounds.lo.alpha = 20.0;
  EXPECT_THROW(calibrate_ga(pair, bounds, GaConfig{}), DataError);
}
