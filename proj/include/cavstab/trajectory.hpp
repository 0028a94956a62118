#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cavstab/errors.hpp"

namespace cavstab {

/// Sampling interval of NGSIM trajectories, seconds.
inline constexpr double kFrameDt = 0.1;

/// Pairs shorter than this are flagged as too short for calibration.
inline constexpr std::size_t kMinCalibrationSamples = 600;

struct TrajectoryRecord {
  std::int64_t vehicle_id = 0;
  std::int64_t frame_id = 0;
  double local_y = 0.0;       // m
  double velocity = 0.0;      // m/s
  double acceleration = 0.0;  // m/s^2
  std::int64_t lane_id = 0;
  std::int64_t preceding_id = 0;  // 0 = none
  double vehicle_length = 0.0;    // m

  friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

/// Gap-free kinematic time series of one vehicle. Sample k belongs to frame
/// start_frame + k. Lane and leader links are kept per frame so that pairing
/// can be re-run from canonical files alone.
struct Trajectory {
  std::int64_t vehicle_id = 0;
  std::int64_t start_frame = 0;
  std::vector<double> positions;
  std::vector<double> velocities;
  std::vector<double> accelerations;
  double length = 4.5;
  std::vector<std::int64_t> lane_ids;
  std::vector<std::int64_t> preceding_ids;
  double dt = kFrameDt;

  std::size_t size() const { return positions.size(); }
  std::int64_t end_frame() const { return start_frame + static_cast<std::int64_t>(size()); }
  bool covers(std::int64_t frame) const { return frame >= start_frame && frame < end_frame(); }
  std::size_t index_of(std::int64_t frame) const {
    return static_cast<std::size_t>(frame - start_frame);
  }

  /// Copy of the samples in [from_frame, from_frame + count).
  Trajectory slice(std::int64_t from_frame, std::size_t count) const {
    if (!covers(from_frame) || index_of(from_frame) + count > size()) {
      throw DataError("trajectory slice out of range");
    }
    Trajectory out;
    out.vehicle_id = vehicle_id;
    out.start_frame = from_frame;
    out.length = length;
    out.dt = dt;
    const auto b = static_cast<std::ptrdiff_t>(index_of(from_frame));
    const auto e = b + static_cast<std::ptrdiff_t>(count);
    out.positions.assign(positions.begin() + b, positions.begin() + e);
    out.velocities.assign(velocities.begin() + b, velocities.begin() + e);
    out.accelerations.assign(accelerations.begin() + b, accelerations.begin() + e);
    if (lane_ids.size() == size()) out.lane_ids.assign(lane_ids.begin() + b, lane_ids.begin() + e);
    if (preceding_ids.size() == size()) {
      out.preceding_ids.assign(preceding_ids.begin() + b, preceding_ids.begin() + e);
    }
    return out;
  }
};

/// Leader and follower restricted to their shared window.
struct VehiclePair {
  Trajectory leader;
  Trajectory follower;
  std::int64_t overlap_start = 0;
  std::size_t overlap_len = 0;

  bool short_for_calibration() const { return overlap_len < kMinCalibrationSamples; }

  std::vector<double> headways() const {
    std::vector<double> out(overlap_len);
    for (std::size_t k = 0; k < overlap_len; ++k) {
      out[k] = leader.positions[k] - follower.positions[k];
    }
    return out;
  }
};

}  // namespace cavstab
