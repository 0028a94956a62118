#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cavstab/errors.hpp"
#include "cavstab/trajectory.hpp"

namespace cavstab {

/// Smoothing widths of the symmetric exponential moving average.
struct SmoothingConfig {
  double t_x = 0.5;  // s, positions
  double t_v = 1.0;  // s, velocities
  double t_a = 4.0;  // s, accelerations
  double dt = kFrameDt;
};

/// Kernel weights exp(-d/Delta) for d = 0..floor(3 Delta), Delta = T/dt.
inline std::vector<double> sema_kernel(double width, double dt) {
  if (!(width > 0.0) || !(dt > 0.0)) throw DataError("smoothing width and dt must be positive");
  const double steps = width / dt;
  const auto radius = static_cast<std::size_t>(std::floor(3.0 * steps));
  std::vector<double> w(radius + 1);
  for (std::size_t d = 0; d <= radius; ++d) w[d] = std::exp(-static_cast<double>(d) / steps);
  return w;
}

/// Symmetric exponential moving average. The half-window at sample k is
/// min(floor(3 Delta), k, N-1-k), so both endpoints pass through unchanged.
inline std::vector<double> sema_smooth(std::span<const double> series, double width, double dt) {
  if (series.empty()) throw EmptySeries();
  const auto w = sema_kernel(width, dt);
  const std::size_t n = series.size();
  const std::size_t radius = w.size() - 1;
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t d = std::min({radius, k, n - 1 - k});
    double sum = series[k];
    double z = 1.0;
    for (std::size_t j = 1; j <= d; ++j) {
      sum += w[j] * (series[k - j] + series[k + j]);
      z += 2.0 * w[j];
    }
    out[k] = sum / z;
  }
  return out;
}

/// Central differences inside, one-sided differences at the two ends.
inline std::vector<double> differentiate(std::span<const double> series, double dt) {
  const std::size_t n = series.size();
  if (n < 2) throw SeriesTooShort(n);
  std::vector<double> out(n);
  out.front() = (series[1] - series[0]) / dt;
  out.back() = (series[n - 1] - series[n - 2]) / dt;
  for (std::size_t k = 1; k + 1 < n; ++k) out[k] = (series[k + 1] - series[k - 1]) / (2.0 * dt);
  return out;
}

/// Recomputes velocity and acceleration from the raw positions, then smooths
/// all three series. Recorded speeds and accelerations are discarded.
inline Trajectory smooth_trajectory(const Trajectory& traj, const SmoothingConfig& cfg = {}) {
  Trajectory out = traj;
  const auto v_raw = differentiate(traj.positions, cfg.dt);
  const auto a_raw = differentiate(v_raw, cfg.dt);
  out.positions = sema_smooth(traj.positions, cfg.t_x, cfg.dt);
  out.velocities = sema_smooth(v_raw, cfg.t_v, cfg.dt);
  out.accelerations = sema_smooth(a_raw, cfg.t_a, cfg.dt);
  return out;
}

/// Share of samples with |value| > threshold.
inline double exceedance_fraction(std::span<const double> values, double threshold) {
  if (values.empty()) return 0.0;
  std::size_t hits = 0;
  for (double v : values) hits += std::abs(v) > threshold ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(values.size());
}

}  // namespace cavstab
