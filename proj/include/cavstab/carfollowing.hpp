#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "cavstab/errors.hpp"
#include "cavstab/trajectory.hpp"

namespace cavstab {

/// Full velocity-difference model parameters of one driver.
struct FvdmParams {
  double alpha = 1.0;  // 1/s, weight of the optimal-velocity term
  double beta = 1.0;   // 1/s, weight of the velocity-difference term
  double b_c = 2.0;    // m, headway at which the optimal velocity is zero
  double b_f = 20.0;   // m, inflection headway
  double v0 = 15.0;    // m/s, velocity scale
  double m = 0.1;      // 1/m, distance scale
  double tau = 0.0;    // s, reaction delay

  friend bool operator==(const FvdmParams&, const FvdmParams&) = default;
};

/// Linearized HDV feedback coefficients around an equilibrium.
struct LinearizedHdv {
  double k1 = 0.0;  // 1/s^2
  double k2 = 0.0;  // 1/s
  double k3 = 0.0;  // 1/s
  double lambda2 = 0.0;
  double tau = 0.0;
};

/// CAV feedback gains plus the desired-headway slope.
struct ControllerGains {
  double k1 = 0.0;
  double k2 = 0.0;
  double k3 = 0.0;
  double lambda2 = 0.0;

  friend bool operator==(const ControllerGains&, const ControllerGains&) = default;
};

// ---------------------------------------------------------------------------
// Optimal-velocity function

inline double optimal_velocity(const FvdmParams& p, double headway) {
  return p.v0 * (std::tanh(p.m * (headway - p.b_f)) - std::tanh(p.m * (p.b_c - p.b_f)));
}

/// Limit of the optimal velocity for unbounded headway.
inline double max_velocity(const FvdmParams& p) {
  return p.v0 * (1.0 - std::tanh(p.m * (p.b_c - p.b_f)));
}

/// dV/d(headway).
inline double ov_slope(const FvdmParams& p, double headway) {
  const double c = std::cosh(p.m * (headway - p.b_f));
  return p.v0 * p.m / (c * c);
}

/// Headway h with V(h) = speed. Requires 0 <= speed < max_velocity(p).
inline double equilibrium_headway(const FvdmParams& p, double speed) {
  const double y = speed / p.v0 + std::tanh(p.m * (p.b_c - p.b_f));
  if (speed < 0.0 || !(y < 1.0)) {
    throw DataError("speed " + std::to_string(speed) +
                    " m/s is not reachable: maximum optimal velocity is " +
                    std::to_string(max_velocity(p)) + " m/s");
  }
  return p.b_f + std::atanh(y) / p.m;
}

/// FVDM acceleration from the (possibly delayed) state; speed_diff is
/// leader speed minus own speed.
inline double fvdm_acceleration(const FvdmParams& p, double headway, double own_speed,
                                double speed_diff) {
  return p.alpha * (optimal_velocity(p, headway) - own_speed) + p.beta * speed_diff;
}

/// k1 (h - lambda2 v - lambda3) - k2 (v - v*) + k3 dv. Shared by the CAV
/// controller and the linearized HDV law.
inline double linear_acceleration(double k1, double k2, double k3, double lambda2, double lambda3,
                                  double v_star, double headway, double own_speed,
                                  double speed_diff) {
  return k1 * (headway - lambda2 * own_speed - lambda3) - k2 * (own_speed - v_star) +
         k3 * speed_diff;
}

inline std::size_t delay_steps(double tau, double dt) {
  return tau <= 0.0 ? 0 : static_cast<std::size_t>(std::lround(tau / dt));
}

struct KinematicState {
  double x;
  double v;
};

/// One ballistic step. Speed never goes negative: a vehicle that would
/// reverse stops at its braking distance and stays there for the step.
inline KinematicState ballistic_step(double x, double v, double a, double dt) {
  const double v_next = v + a * dt;
  if (v_next >= 0.0) return {x + v * dt + 0.5 * a * dt * dt, v_next};
  const double stop = a < 0.0 ? v * v / (-2.0 * a) : 0.0;
  return {x + stop, 0.0};
}

// ---------------------------------------------------------------------------
// Lead-vehicle profiles

struct ConstantSpeed {
  double v = 15.0;
};

/// Speed jumps to segments[i].v at time segments[i].t.
struct PiecewiseConstantSpeed {
  struct Segment {
    double t;
    double v;
  };
  std::vector<Segment> segments;
};

/// v(t) = v_star + amplitude sin(omega (t - t_start)) for t >= t_start,
/// for `cycles` full periods (0 = unbounded).
struct SinusoidalSpeed {
  double v_star = 15.0;
  double amplitude = 0.5;
  double omega = 0.5;
  double t_start = 0.0;
  double cycles = 0.0;
};

using LeadProfile = std::variant<ConstantSpeed, PiecewiseConstantSpeed, SinusoidalSpeed>;

namespace detail {
inline double sinusoid_end(const SinusoidalSpeed& s) {
  return s.cycles > 0.0 ? s.t_start + s.cycles * 2.0 * std::numbers::pi / s.omega
                        : std::numeric_limits<double>::infinity();
}
}  // namespace detail

inline double profile_velocity(const LeadProfile& profile, double t) {
  return std::visit(
      [t](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConstantSpeed>) {
          return p.v;
        } else if constexpr (std::is_same_v<P, PiecewiseConstantSpeed>) {
          if (p.segments.empty()) throw DataError("piecewise profile has no segments");
          double v = p.segments.front().v;
          for (const auto& s : p.segments) {
            if (s.t <= t) v = s.v;
          }
          return v;
        } else {
          if (t < p.t_start || t >= detail::sinusoid_end(p)) return p.v_star;
          return p.v_star + p.amplitude * std::sin(p.omega * (t - p.t_start));
        }
      },
      profile);
}

/// Position travelled since t = 0.
inline double profile_position(const LeadProfile& profile, double t) {
  return std::visit(
      [t](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConstantSpeed>) {
          return p.v * t;
        } else if constexpr (std::is_same_v<P, PiecewiseConstantSpeed>) {
          if (p.segments.empty()) throw DataError("piecewise profile has no segments");
          double x = 0.0;
          double v = p.segments.front().v;
          double from = 0.0;
          for (const auto& s : p.segments) {
            if (s.t >= t) break;
            if (s.t > from) {
              x += v * (s.t - from);
              from = s.t;
            }
            v = s.v;
          }
          return x + v * (t - from);
        } else {
          const double end = detail::sinusoid_end(p);
          const double u = std::clamp(t, p.t_start, end);
          double x = p.v_star * t;
          if (t > p.t_start) x += p.amplitude / p.omega * (1.0 - std::cos(p.omega * (u - p.t_start)));
          return x;
        }
      },
      profile);
}

inline double profile_acceleration(const LeadProfile& profile, double t) {
  if (const auto* s = std::get_if<SinusoidalSpeed>(&profile)) {
    if (t < s->t_start || t >= detail::sinusoid_end(*s)) return 0.0;
    return s->amplitude * s->omega * std::cos(s->omega * (t - s->t_start));
  }
  return 0.0;
}

/// Samples the profile on frames 0..n-1 starting at position x0.
inline Trajectory sample_profile(const LeadProfile& profile, std::size_t n, double dt, double x0,
                                 std::int64_t vehicle_id = 1) {
  Trajectory out;
  out.vehicle_id = vehicle_id;
  out.dt = dt;
  out.positions.resize(n);
  out.velocities.resize(n);
  out.accelerations.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    out.positions[k] = x0 + profile_position(profile, t);
    out.velocities[k] = profile_velocity(profile, t);
    out.accelerations[k] = profile_acceleration(profile, t);
  }
  out.lane_ids.assign(n, 1);
  out.preceding_ids.assign(n, 0);
  return out;
}

// ---------------------------------------------------------------------------
// Follower simulation

/// Simulates one FVDM follower behind a recorded leader with the ballistic
/// integrator. The delayed state uses round(tau/dt) whole steps; before the
/// first delayed sample exists the initial state is used.
inline Trajectory simulate_follower(const FvdmParams& theta, const Trajectory& leader,
                                    double init_position, double init_speed) {
  const std::size_t n = leader.size();
  if (n < 2 || leader.velocities.size() != n) throw LeaderTooShort();
  const double dt = leader.dt;
  const std::size_t d = delay_steps(theta.tau, dt);

  Trajectory out;
  out.vehicle_id = 0;
  out.start_frame = leader.start_frame;
  out.dt = dt;
  out.positions.resize(n);
  out.velocities.resize(n);
  out.accelerations.resize(n);
  out.positions[0] = init_position;
  out.velocities[0] = init_speed;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = k >= d ? k - d : 0;
    const double a = fvdm_acceleration(theta, leader.positions[j] - out.positions[j],
                                       out.velocities[j],
                                       leader.velocities[j] - out.velocities[j]);
    out.accelerations[k] = a;
    if (k + 1 < n) {
      const auto next = ballistic_step(out.positions[k], out.velocities[k], a, dt);
      out.positions[k + 1] = next.x;
      out.velocities[k + 1] = next.v;
    }
  }
  out.lane_ids = leader.lane_ids.size() == n ? leader.lane_ids : std::vector<std::int64_t>(n, 1);
  out.preceding_ids.assign(n, leader.vehicle_id);
  return out;
}

// ---------------------------------------------------------------------------
// Platoon simulation

struct HdvVehicle {
  FvdmParams theta;
};

struct CavVehicle {
  ControllerGains gains;
  double lambda3 = 0.0;  // m
};

/// Delayed linear law with HDV coefficients, for checking the frequency
/// domain against time-domain runs.
struct LinearHdvVehicle {
  LinearizedHdv lin;
  double lambda3 = 0.0;  // m
};

using PlatoonVehicle = std::variant<HdvVehicle, CavVehicle, LinearHdvVehicle>;

struct PlatoonSpec {
  LeadProfile lead_profile = ConstantSpeed{};
  std::vector<PlatoonVehicle> vehicles;
  double v_star = 15.0;
};

/// Equilibrium headway of one platoon member at speed v_star.
inline double platoon_equilibrium_headway(const PlatoonVehicle& vehicle, double v_star) {
  return std::visit(
      [v_star](const auto& veh) -> double {
        using V = std::decay_t<decltype(veh)>;
        if constexpr (std::is_same_v<V, HdvVehicle>) {
          return equilibrium_headway(veh.theta, v_star);
        } else if constexpr (std::is_same_v<V, CavVehicle>) {
          return veh.gains.lambda2 * v_star + veh.lambda3;
        } else {
          return veh.lin.lambda2 * v_star + veh.lambda3;
        }
      },
      vehicle);
}

class CollisionDetected : public NumericError {
 public:
  CollisionDetected(std::size_t vehicle, std::int64_t frame_, std::vector<Trajectory> partial_)
      : NumericError("collision: vehicle " + std::to_string(vehicle) + " at frame " +
                     std::to_string(frame_)),
        vehicle_index(vehicle),
        frame(frame_),
        partial(std::move(partial_)) {}
  std::size_t vehicle_index;  // 1-based position behind the leader
  std::int64_t frame;
  std::vector<Trajectory> partial;  // frames 0..frame inclusive
};

/// Integrates leader + vehicles for round(duration/dt)+1 frames. Element 0
/// of the result is the leader; vehicle i has id i+1 and follows id i.
inline std::vector<Trajectory> simulate_platoon(const PlatoonSpec& spec, double duration,
                                                double dt) {
  if (spec.vehicles.empty()) throw EmptyPlatoon();
  if (!(dt > 0.0) || !(duration > 0.0)) throw DataError("duration and dt must be positive");
  const auto frames = static_cast<std::size_t>(std::llround(duration / dt)) + 1;
  const std::size_t count = spec.vehicles.size() + 1;

  std::vector<Trajectory> out(count);
  out[0] = sample_profile(spec.lead_profile, frames, dt, 0.0, 1);
  std::vector<std::size_t> delays(count, 0);
  for (std::size_t i = 1; i < count; ++i) {
    auto& tr = out[i];
    tr.vehicle_id = static_cast<std::int64_t>(i + 1);
    tr.dt = dt;
    tr.positions.assign(frames, 0.0);
    tr.velocities.assign(frames, 0.0);
    tr.accelerations.assign(frames, 0.0);
    tr.lane_ids.assign(frames, 1);
    tr.preceding_ids.assign(frames, static_cast<std::int64_t>(i));
    tr.positions[0] =
        out[i - 1].positions[0] - platoon_equilibrium_headway(spec.vehicles[i - 1], spec.v_star);
    tr.velocities[0] = spec.v_star;
    const auto& veh = spec.vehicles[i - 1];
    if (const auto* h = std::get_if<HdvVehicle>(&veh)) delays[i] = delay_steps(h->theta.tau, dt);
    if (const auto* l = std::get_if<LinearHdvVehicle>(&veh)) delays[i] = delay_steps(l->lin.tau, dt);
  }

  auto truncated = [&](std::size_t last_frame) {
    std::vector<Trajectory> partial;
    partial.reserve(count);
    for (const auto& tr : out) partial.push_back(tr.slice(tr.start_frame, last_frame + 1));
    return partial;
  };

  for (std::size_t k = 0; k < frames; ++k) {
    for (std::size_t i = 1; i < count; ++i) {
      const std::size_t j = k >= delays[i] ? k - delays[i] : 0;
      const auto& lead = out[i - 1];
      auto& self = out[i];
      const double h = lead.positions[j] - self.positions[j];
      const double v = self.velocities[j];
      const double dv = lead.velocities[j] - v;
      self.accelerations[k] = std::visit(
          [&](const auto& veh) -> double {
            using V = std::decay_t<decltype(veh)>;
            if constexpr (std::is_same_v<V, HdvVehicle>) {
              return fvdm_acceleration(veh.theta, h, v, dv);
            } else if constexpr (std::is_same_v<V, CavVehicle>) {
              return linear_acceleration(veh.gains.k1, veh.gains.k2, veh.gains.k3,
                                         veh.gains.lambda2, veh.lambda3, spec.v_star, h, v, dv);
            } else {
              return linear_acceleration(veh.lin.k1, veh.lin.k2, veh.lin.k3, veh.lin.lambda2,
                                         veh.lambda3, spec.v_star, h, v, dv);
            }
          },
          spec.vehicles[i - 1]);
    }
    if (k + 1 == frames) break;
    for (std::size_t i = 1; i < count; ++i) {
      auto& self = out[i];
      const auto next = ballistic_step(self.positions[k], self.velocities[k], self.accelerations[k], dt);
      self.positions[k + 1] = next.x;
      self.velocities[k + 1] = next.v;
    }
    for (std::size_t i = 1; i < count; ++i) {
      const double h = out[i - 1].positions[k + 1] - out[i].positions[k + 1];
      if (!(h > 0.0)) throw CollisionDetected(i, static_cast<std::int64_t>(k + 1), truncated(k + 1));
    }
  }
  return out;
}

}  // namespace cavstab
