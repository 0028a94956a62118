#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cavstab/carfollowing.hpp"
#include "cavstab/errors.hpp"
#include "cavstab/trajectory.hpp"

namespace cavstab {

enum class Units { Meters, Feet };

inline constexpr double kFeetToMeters = 0.3048;

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t from = 0;
  while (true) {
    const auto comma = line.find(',', from);
    out.push_back(trim(line.substr(from, comma == std::string_view::npos ? comma : comma - from)));
    if (comma == std::string_view::npos) break;
    from = comma + 1;
  }
  return out;
}

template <typename T>
T parse_field(std::string_view text, std::size_t row, const std::string& column) {
  T value{};
  if (text.size() > 1 && text.front() == '+') text.remove_prefix(1);
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    throw UnparsableField(row, column, std::string(text));
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw UnparsableField(row, column, std::string(text));
  }
  return value;
}

/// Header-indexed view of a comma-separated table.
class CsvTable {
 public:
  explicit CsvTable(std::string_view text) {
    std::size_t from = 0;
    bool header_done = false;
    std::size_t row = 0;
    while (from <= text.size()) {
      auto nl = text.find('\n', from);
      if (nl == std::string_view::npos) nl = text.size();
      const auto line = trim(text.substr(from, nl - from));
      from = nl + 1;
      if (line.empty()) continue;
      if (!header_done) {
        const auto names = split_row(line);
        for (std::size_t i = 0; i < names.size(); ++i) columns_.emplace(lower(names[i]), i);
        header_done = true;
        continue;
      }
      rows_.push_back(split_row(line));
      row_numbers_.push_back(++row);
    }
    if (rows_.empty()) throw EmptyInput();
  }

  std::size_t column(std::string_view name) const {
    const auto it = columns_.find(lower(name));
    if (it == columns_.end()) throw MissingColumn(std::string(name));
    return it->second;
  }

  std::size_t size() const { return rows_.size(); }

  template <typename T>
  T get(std::size_t row, std::size_t col, const std::string& name) const {
    const auto& cells = rows_[row];
    if (col >= cells.size()) throw UnparsableField(row_numbers_[row], name, "");
    return parse_field<T>(cells[col], row_numbers_[row], name);
  }

 private:
  std::map<std::string, std::size_t> columns_;
  std::vector<std::vector<std::string_view>> rows_;
  std::vector<std::size_t> row_numbers_;
};

}  // namespace detail

/// Reads NGSIM-style trajectory rows. Column names match case-insensitively
/// and extra columns are ignored. With Units::Feet, lengths, speeds and
/// accelerations are scaled to SI.
inline std::vector<TrajectoryRecord> parse_ngsim_csv(std::string_view text,
                                                     Units units = Units::Meters) {
  const detail::CsvTable table(text);
  const auto c_vid = table.column("Vehicle_ID");
  const auto c_frame = table.column("Frame_ID");
  const auto c_y = table.column("Local_Y");
  const auto c_v = table.column("v_Vel");
  const auto c_a = table.column("v_Acc");
  const auto c_lane = table.column("Lane_ID");
  const auto c_prec = table.column("Preceding");
  const auto c_len = table.column("v_length");
  const double scale = units == Units::Feet ? kFeetToMeters : 1.0;

  std::vector<TrajectoryRecord> out;
  out.reserve(table.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    TrajectoryRecord rec;
    rec.vehicle_id = table.get<std::int64_t>(r, c_vid, "Vehicle_ID");
    rec.frame_id = table.get<std::int64_t>(r, c_frame, "Frame_ID");
    rec.local_y = table.get<double>(r, c_y, "Local_Y") * scale;
    rec.velocity = table.get<double>(r, c_v, "v_Vel") * scale;
    rec.acceleration = table.get<double>(r, c_a, "v_Acc") * scale;
    rec.lane_id = table.get<std::int64_t>(r, c_lane, "Lane_ID");
    rec.preceding_id = table.get<std::int64_t>(r, c_prec, "Preceding");
    rec.vehicle_length = table.get<double>(r, c_len, "v_length") * scale;
    out.push_back(rec);
  }
  return out;
}

inline constexpr std::string_view kCanonicalHeader =
    "vehicle_id,frame_id,t,local_y_m,v_mps,a_mps2,lane_id,preceding_id,length_m";

/// Canonical SI trajectory table. `t` is frame_id * dt.
inline std::string to_canonical_csv(std::span<const TrajectoryRecord> records,
                                    double dt = kFrameDt) {
  std::string out(kCanonicalHeader);
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.vehicle_id);
    out += ',';
    out += std::to_string(r.frame_id);
    out += ',';
    out += format_double(static_cast<double>(r.frame_id) * dt);
    for (double v : {r.local_y, r.velocity, r.acceleration}) {
      out += ',';
      out += format_double(v);
    }
    out += ',';
    out += std::to_string(r.lane_id);
    out += ',';
    out += std::to_string(r.preceding_id);
    out += ',';
    out += format_double(r.vehicle_length);
    out += '\n';
  }
  return out;
}

inline std::vector<TrajectoryRecord> parse_canonical_csv(std::string_view text) {
  const detail::CsvTable table(text);
  const auto c_vid = table.column("vehicle_id");
  const auto c_frame = table.column("frame_id");
  const auto c_y = table.column("local_y_m");
  const auto c_v = table.column("v_mps");
  const auto c_a = table.column("a_mps2");
  const auto c_lane = table.column("lane_id");
  const auto c_prec = table.column("preceding_id");
  const auto c_len = table.column("length_m");
  std::vector<TrajectoryRecord> out;
  out.reserve(table.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    TrajectoryRecord rec;
    rec.vehicle_id = table.get<std::int64_t>(r, c_vid, "vehicle_id");
    rec.frame_id = table.get<std::int64_t>(r, c_frame, "frame_id");
    rec.local_y = table.get<double>(r, c_y, "local_y_m");
    rec.velocity = table.get<double>(r, c_v, "v_mps");
    rec.acceleration = table.get<double>(r, c_a, "a_mps2");
    rec.lane_id = table.get<std::int64_t>(r, c_lane, "lane_id");
    rec.preceding_id = table.get<std::int64_t>(r, c_prec, "preceding_id");
    rec.vehicle_length = table.get<double>(r, c_len, "length_m");
    out.push_back(rec);
  }
  return out;
}

/// Flattens trajectories back into per-frame records, ordered by vehicle
/// then frame.
inline std::vector<TrajectoryRecord> to_records(std::span<const Trajectory> trajectories) {
  std::vector<TrajectoryRecord> out;
  for (const auto& tr : trajectories) {
    for (std::size_t k = 0; k < tr.size(); ++k) {
      TrajectoryRecord r;
      r.vehicle_id = tr.vehicle_id;
      r.frame_id = tr.start_frame + static_cast<std::int64_t>(k);
      r.local_y = tr.positions[k];
      r.velocity = tr.velocities[k];
      r.acceleration = tr.accelerations[k];
      r.lane_id = k < tr.lane_ids.size() ? tr.lane_ids[k] : 0;
      r.preceding_id = k < tr.preceding_ids.size() ? tr.preceding_ids[k] : 0;
      r.vehicle_length = tr.length;
      out.push_back(r);
    }
  }
  return out;
}

inline std::vector<TrajectoryRecord> to_records(const std::map<std::int64_t, Trajectory>& trajectories) {
  std::vector<Trajectory> flat;
  flat.reserve(trajectories.size());
  for (const auto& [id, tr] : trajectories) flat.push_back(tr);
  return to_records(std::span<const Trajectory>(flat));
}

struct BuildResult {
  std::map<std::int64_t, Trajectory> trajectories;
  std::size_t fragments_discarded = 0;  // shorter gap-free runs dropped
  std::size_t vehicles_too_short = 0;   // vehicles whose longest run has one sample
};

/// Groups records per vehicle and keeps each vehicle's longest run of
/// consecutive frames (earliest run on ties).
inline BuildResult build_trajectories(std::span<const TrajectoryRecord> records) {
  std::map<std::int64_t, std::vector<const TrajectoryRecord*>> by_vehicle;
  for (const auto& r : records) by_vehicle[r.vehicle_id].push_back(&r);

  BuildResult result;
  for (auto& [id, recs] : by_vehicle) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const auto* a, const auto* b) { return a->frame_id < b->frame_id; });
    std::size_t best_begin = 0;
    std::size_t best_len = 0;
    std::size_t runs = 0;
    std::size_t begin = 0;
    for (std::size_t i = 0; i <= recs.size(); ++i) {
      if (i > 0 && i < recs.size() && recs[i]->frame_id == recs[i - 1]->frame_id) {
        throw DuplicateFrame(id, recs[i]->frame_id);
      }
      const bool breaks = i == recs.size() || (i > 0 && recs[i]->frame_id != recs[i - 1]->frame_id + 1);
      if (breaks && i > begin) {
        ++runs;
        if (i - begin > best_len) {
          best_len = i - begin;
          best_begin = begin;
        }
        begin = i;
      }
    }
    result.fragments_discarded += runs - 1;
    if (best_len < 2) {
      ++result.vehicles_too_short;
      continue;
    }
    Trajectory tr;
    tr.vehicle_id = id;
    tr.start_frame = recs[best_begin]->frame_id;
    tr.length = recs[best_begin]->vehicle_length;
    for (std::size_t i = best_begin; i < best_begin + best_len; ++i) {
      tr.positions.push_back(recs[i]->local_y);
      tr.velocities.push_back(recs[i]->velocity);
      tr.accelerations.push_back(recs[i]->acceleration);
      tr.lane_ids.push_back(recs[i]->lane_id);
      tr.preceding_ids.push_back(recs[i]->preceding_id);
    }
    result.trajectories.emplace(id, std::move(tr));
  }
  return result;
}

/// A candidate pair dropped because the headway was not positive.
struct RejectedPair {
  std::int64_t leader_id = 0;
  std::int64_t follower_id = 0;
  std::int64_t overlap_start = 0;
  std::size_t overlap_len = 0;
  std::int64_t first_bad_frame = 0;
};

struct PairingResult {
  std::vector<VehiclePair> pairs;  // longest overlap first
  std::vector<RejectedPair> rejected;
};

/// Emits one pair per maximal window in which the follower's preceding id is
/// constant, the leader has data, and both share a lane (optionally a given
/// lane). Windows shorter than two samples are ignored.
inline PairingResult pair_leader_follower(const std::map<std::int64_t, Trajectory>& trajectories,
                                          std::optional<std::int64_t> lane_filter = std::nullopt) {
  PairingResult result;
  for (const auto& [fid, follower] : trajectories) {
    if (follower.preceding_ids.size() != follower.size() || follower.lane_ids.size() != follower.size()) {
      continue;
    }
    const Trajectory* leader = nullptr;
    std::int64_t run_leader = 0;
    std::int64_t run_start = 0;
    std::size_t run_len = 0;

    auto flush = [&]() {
      if (leader != nullptr && run_len >= 2) {
        auto lead = leader->slice(run_start, run_len);
        auto foll = follower.slice(run_start, run_len);
        std::optional<std::int64_t> bad;
        for (std::size_t k = 0; k < run_len; ++k) {
          if (!(lead.positions[k] - foll.positions[k] > 0.0)) {
            bad = run_start + static_cast<std::int64_t>(k);
            break;
          }
        }
        if (bad) {
          result.rejected.push_back({run_leader, fid, run_start, run_len, *bad});
        } else {
          result.pairs.push_back({std::move(lead), std::move(foll), run_start, run_len});
        }
      }
      leader = nullptr;
      run_len = 0;
    };

    for (std::size_t k = 0; k < follower.size(); ++k) {
      const std::int64_t frame = follower.start_frame + static_cast<std::int64_t>(k);
      const std::int64_t pid = follower.preceding_ids[k];
      const std::int64_t lane = follower.lane_ids[k];
      const Trajectory* cand = nullptr;
      if (pid != 0 && (!lane_filter || *lane_filter == lane)) {
        const auto it = trajectories.find(pid);
        if (it != trajectories.end() && it->second.covers(frame) &&
            it->second.lane_ids.size() == it->second.size() &&
            it->second.lane_ids[it->second.index_of(frame)] == lane) {
          cand = &it->second;
        }
      }
      if (cand == nullptr || cand != leader) flush();
      if (cand != nullptr) {
        if (leader == nullptr) {
          leader = cand;
          run_leader = pid;
          run_start = frame;
        }
        ++run_len;
      }
    }
    flush();
  }
  std::stable_sort(result.pairs.begin(), result.pairs.end(),
                   [](const VehiclePair& a, const VehiclePair& b) { return a.overlap_len > b.overlap_len; });
  return result;
}

/// Rebuilds a pair from an index entry and the trajectories it refers to.
inline VehiclePair make_pair_from_index(const std::map<std::int64_t, Trajectory>& trajectories,
                                        std::int64_t leader_id, std::int64_t follower_id,
                                        std::int64_t overlap_start, std::size_t overlap_len) {
  const auto l = trajectories.find(leader_id);
  const auto f = trajectories.find(follower_id);
  if (l == trajectories.end() || f == trajectories.end()) {
    throw DataError("pair index refers to unknown vehicle " + std::to_string(leader_id) + " or " +
                    std::to_string(follower_id));
  }
  return {l->second.slice(overlap_start, overlap_len), f->second.slice(overlap_start, overlap_len),
          overlap_start, overlap_len};
}

/// Noise-free leader/follower pair: the leader follows `profile` and the
/// follower is integrated from `theta`, starting `initial_headway` behind at
/// the leader's initial speed.
inline VehiclePair generate_synthetic_pair(const FvdmParams& theta, const LeadProfile& profile,
                                           double duration, double initial_headway,
                                           double dt = kFrameDt) {
  if (!(initial_headway > theta.b_c)) {
    throw InfeasibleInitialState("initial headway " + std::to_string(initial_headway) +
                                 " m must exceed b_c = " + std::to_string(theta.b_c) + " m");
  }
  const double steps = duration / dt;
  if (!(steps >= 2.0) || std::abs(steps - std::round(steps)) > 1e-9) {
    throw DataError("duration must be an integer multiple of dt covering at least 2 samples");
  }
  const auto n = static_cast<std::size_t>(std::llround(steps));
  Trajectory leader = sample_profile(profile, n, dt, initial_headway, 1);
  Trajectory follower = simulate_follower(theta, leader, 0.0, leader.velocities[0]);
  follower.vehicle_id = 2;
  follower.preceding_ids.assign(n, 1);
  for (std::size_t k = 0; k < n; ++k) {
    if (!(leader.positions[k] - follower.positions[k] > 0.0)) {
      throw InfeasibleInitialState("synthetic follower reaches the leader at sample " +
                                   std::to_string(k));
    }
  }
  return {std::move(leader), std::move(follower), 0, n};
}

}  // namespace cavstab
