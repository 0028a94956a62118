#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "cavstab/carfollowing.hpp"
#include "cavstab/errors.hpp"
#include "cavstab/trajectory.hpp"

namespace cavstab {

// ---------------------------------------------------------------------------
// Headway error measures

namespace detail {
inline void check_error_inputs(std::span<const double> sim, std::span<const double> data) {
  if (sim.size() != data.size()) throw LengthMismatch(sim.size(), data.size());
  if (data.empty()) throw EmptySeries();
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (!(data[k] > 0.0)) throw NonpositiveHeadway(k);
  }
}
}  // namespace detail

/// sqrt(<(sim - data)^2> / <data>^2)
inline double error_abs(std::span<const double> sim, std::span<const double> data) {
  detail::check_error_inputs(sim, data);
  double sq = 0.0;
  double mean = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const double e = sim[k] - data[k];
    sq += e * e;
    mean += data[k];
  }
  const double n = static_cast<double>(data.size());
  mean /= n;
  return std::sqrt(sq / n / (mean * mean));
}

/// sqrt(<((sim - data) / data)^2>)
inline double error_rel(std::span<const double> sim, std::span<const double> data) {
  detail::check_error_inputs(sim, data);
  double acc = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const double e = (sim[k] - data[k]) / data[k];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(data.size()));
}

/// sqrt(<(sim - data)^2 / |data|> / <|data|>)
inline double error_mixed(std::span<const double> sim, std::span<const double> data) {
  detail::check_error_inputs(sim, data);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const double e = sim[k] - data[k];
    num += e * e / std::abs(data[k]);
    den += std::abs(data[k]);
  }
  return std::sqrt(num / den);
}

// ---------------------------------------------------------------------------
// Fitness

inline constexpr double kCollisionPenalty = 1e6;

/// Simulated follower headways against the recorded leader.
inline std::vector<double> simulated_headways(const FvdmParams& theta, const VehiclePair& pair) {
  const auto sim = simulate_follower(theta, pair.leader, pair.follower.positions.front(),
                                     pair.follower.velocities.front());
  std::vector<double> out(pair.overlap_len);
  for (std::size_t k = 0; k < pair.overlap_len; ++k) {
    out[k] = pair.leader.positions[k] - sim.positions[k];
  }
  return out;
}

/// Mixed headway error of `theta` on `pair`; kCollisionPenalty when the
/// simulated follower reaches the leader or the run diverges.
inline double evaluate_fitness(const FvdmParams& theta, const VehiclePair& pair) {
  const auto sim = simulated_headways(theta, pair);
  for (double h : sim) {
    if (!(h > 0.0) || !std::isfinite(h)) return kCollisionPenalty;
  }
  const auto data = pair.headways();
  const double err = error_mixed(sim, data);
  return std::isfinite(err) ? err : kCollisionPenalty;
}

// ---------------------------------------------------------------------------
// Genetic algorithm

inline constexpr std::size_t kGeneCount = 7;
inline constexpr double kTauStep = 0.1;

using Genome = std::array<double, kGeneCount>;

inline Genome to_genome(const FvdmParams& p) {
  return {p.alpha, p.beta, p.b_c, p.b_f, p.v0, p.m, p.tau};
}

inline FvdmParams from_genome(const Genome& g) {
  return {g[0], g[1], g[2], g[3], g[4], g[5], g[6]};
}

/// Search box for the calibrated parameters.
struct ParamBounds {
  FvdmParams lo{1.0, 1.0, 0.1, 0.1, 1.0, 1e-5, 0.0};
  FvdmParams hi{10.0, 10.0, 8.0, 100.0, 70.0, 10.0, 3.0};

  static ParamBounds defaults() { return {}; }

  ParamBounds& pin_tau(double tau = 0.0) {
    lo.tau = hi.tau = tau;
    return *this;
  }

  bool contains(const FvdmParams& p) const {
    const auto g = to_genome(p);
    const auto l = to_genome(lo);
    const auto h = to_genome(hi);
    for (std::size_t i = 0; i < kGeneCount; ++i) {
      if (!(g[i] >= l[i] && g[i] <= h[i])) return false;
    }
    return true;
  }

  void validate() const {
    const auto l = to_genome(lo);
    const auto h = to_genome(hi);
    for (std::size_t i = 0; i < kGeneCount; ++i) {
      if (!(l[i] <= h[i])) throw DataError("parameter bounds have lo > hi");
    }
    if (lo.tau < 0.0) throw DataError("tau lower bound must be non-negative");
  }
};

struct GaConfig {
  std::size_t population_size = 50;
  std::size_t max_generations = 1000;
  std::size_t stagnation_limit = 100;
  double mutation_probability = 0.3;
  double mutation_scale = 0.1;  // fraction of each gene's range
  double crossover_probability = 0.9;
  std::size_t elitism_count = 2;
  std::uint64_t rng_seed = 1;
  /// The mutation step is halved after this many consecutive generations
  /// without a new best score (0 keeps it fixed). It is not reset when the
  /// best improves again.
  std::size_t step_halving_interval = 10;
  double min_step_factor = 1e-6;

  void validate() const {
    if (population_size < 2) throw DataError("population_size must be at least 2");
    if (elitism_count >= population_size) throw DataError("elitism_count must be below population_size");
    if (!(mutation_probability > 0.0 && mutation_probability <= 1.0)) {
      throw DataError("mutation_probability must be in (0, 1]");
    }
    if (!(crossover_probability >= 0.0 && crossover_probability <= 1.0)) {
      throw DataError("crossover_probability must be in [0, 1]");
    }
    if (max_generations < 1) throw DataError("max_generations must be at least 1");
  }
};

enum class StopReason { MaxGenerations, Stagnation };

struct CalibrationResult {
  FvdmParams theta;
  double mixed_error = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  std::size_t generations_run = 0;  // including the initial population
  StopReason converged_by = StopReason::MaxGenerations;
  std::vector<double> fitness_history;  // best of each generation
};

namespace detail {

/// Clamps into the box and snaps tau to whole 0.1 s steps.
inline Genome project(Genome g, const ParamBounds& b) {
  const auto lo = to_genome(b.lo);
  const auto hi = to_genome(b.hi);
  for (std::size_t i = 0; i < kGeneCount; ++i) g[i] = std::clamp(g[i], lo[i], hi[i]);
  g[6] = std::clamp(std::round(g[6] / kTauStep) * kTauStep, lo[6], hi[6]);
  return g;
}

struct Individual {
  Genome genes;
  double fitness;
};

}  // namespace detail

/// Real-coded GA: roulette selection on 1/(fitness + eps), uniform
/// crossover, Gaussian mutation truncated to the box (resampled until it
/// lands inside) and elitism. Optional seeds replace the first members of
/// the random initial population. Deterministic for a given cfg.rng_seed.
/// Stops after max_generations generations (counting the initial one) or
/// when the best score repeats stagnation_limit times in a row.
inline CalibrationResult calibrate_ga(const VehiclePair& pair, const ParamBounds& bounds,
                                      const GaConfig& cfg,
                                      std::span<const FvdmParams> seeds = {}) {
  cfg.validate();
  bounds.validate();
  if (pair.overlap_len < 2) throw DataError("pair needs at least 2 overlapping samples");

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto lo = to_genome(bounds.lo);
  const auto hi = to_genome(bounds.hi);
  constexpr double kScoreEps = 1e-12;

  auto by_fitness = [](const detail::Individual& a, const detail::Individual& b) {
    return a.fitness < b.fitness;
  };

  std::vector<detail::Individual> pop(cfg.population_size);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    Genome g;
    for (std::size_t j = 0; j < kGeneCount; ++j) g[j] = lo[j] + (hi[j] - lo[j]) * unit(rng);
    if (i < seeds.size()) g = to_genome(seeds[i]);
    pop[i].genes = detail::project(g, bounds);
  }
  for (auto& ind : pop) ind.fitness = evaluate_fitness(from_genome(ind.genes), pair);
  std::stable_sort(pop.begin(), pop.end(), by_fitness);

  CalibrationResult result;
  detail::Individual best = pop.front();
  result.fitness_history.push_back(best.fitness);
  std::size_t unchanged = 0;
  result.converged_by = StopReason::MaxGenerations;

  std::vector<double> scores(pop.size());
  double step_factor = 1.0;
  constexpr int kMaxResamples = 64;
  for (std::size_t gen = 1; gen < cfg.max_generations; ++gen) {
    for (std::size_t i = 0; i < pop.size(); ++i) scores[i] = 1.0 / (pop[i].fitness + kScoreEps);
    std::discrete_distribution<std::size_t> roulette(scores.begin(), scores.end());

    std::vector<detail::Individual> next(pop.begin(), pop.begin() + static_cast<std::ptrdiff_t>(cfg.elitism_count));
    while (next.size() < pop.size()) {
      const auto& a = pop[roulette(rng)].genes;
      const auto& b = pop[roulette(rng)].genes;
      Genome child = a;
      if (unit(rng) < cfg.crossover_probability) {
        for (std::size_t j = 0; j < kGeneCount; ++j) child[j] = unit(rng) < 0.5 ? a[j] : b[j];
      }
      for (std::size_t j = 0; j < kGeneCount; ++j) {
        if (unit(rng) < cfg.mutation_probability) {
          const double sigma = cfg.mutation_scale * step_factor * (hi[j] - lo[j]);
          double moved = child[j];
          for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
            moved = child[j] + gauss(rng) * sigma;
            if (moved >= lo[j] && moved <= hi[j]) break;
          }
          child[j] = moved;
        }
      }
      next.push_back({detail::project(child, bounds), 0.0});
    }
    for (std::size_t i = cfg.elitism_count; i < next.size(); ++i) {
      next[i].fitness = evaluate_fitness(from_genome(next[i].genes), pair);
    }
    std::stable_sort(next.begin(), next.end(), by_fitness);
    pop = std::move(next);

    const double gen_best = pop.front().fitness;
    result.fitness_history.push_back(gen_best);
    unchanged = gen_best == result.fitness_history[result.fitness_history.size() - 2] ? unchanged + 1 : 0;
    if (gen_best < best.fitness) best = pop.front();
    if (cfg.step_halving_interval > 0 && unchanged > 0 && unchanged % cfg.step_halving_interval == 0) {
      step_factor = std::max(0.5 * step_factor, cfg.min_step_factor);
    }
    if (unchanged >= cfg.stagnation_limit) {
      result.converged_by = StopReason::Stagnation;
      break;
    }
  }

  result.generations_run = result.fitness_history.size();
  result.theta = from_genome(best.genes);
  result.mixed_error = best.fitness;
  const auto data = pair.headways();
  const auto sim = simulated_headways(result.theta, pair);
  result.abs_error = error_abs(sim, data);
  result.rel_error = error_rel(sim, data);
  return result;
}

}  // namespace cavstab
