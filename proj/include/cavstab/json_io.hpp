#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "cavstab/calibration.hpp"
#include "cavstab/carfollowing.hpp"
#include "cavstab/stability.hpp"
#include "cavstab/trajectory_io.hpp"

namespace cavstab {

using nlohmann::json;

namespace detail {
template <typename T>
T require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw DataError(std::string("missing JSON field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(std::string("bad JSON field '") + key + "': " + e.what());
  }
}

template <typename T>
T value_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return require<T>(j, key);
}
}  // namespace detail

inline void to_json(json& j, const FvdmParams& p) {
  j = json{{"alpha", p.alpha}, {"beta", p.beta}, {"b_c", p.b_c}, {"b_f", p.b_f},
           {"v0", p.v0},       {"m", p.m},       {"tau", p.tau}};
}

inline void from_json(const json& j, FvdmParams& p) {
  p.alpha = detail::require<double>(j, "alpha");
  p.beta = detail::require<double>(j, "beta");
  p.b_c = detail::require<double>(j, "b_c");
  p.b_f = detail::require<double>(j, "b_f");
  p.v0 = detail::require<double>(j, "v0");
  p.m = detail::require<double>(j, "m");
  p.tau = detail::value_or<double>(j, "tau", 0.0);
}

inline void to_json(json& j, const ControllerGains& g) {
  j = json{{"k1", g.k1}, {"k2", g.k2}, {"k3", g.k3}, {"lambda2", g.lambda2}};
}

inline void from_json(const json& j, ControllerGains& g) {
  g.k1 = detail::require<double>(j, "k1");
  g.k2 = detail::require<double>(j, "k2");
  g.k3 = detail::require<double>(j, "k3");
  g.lambda2 = detail::value_or<double>(j, "lambda2", 0.0);
}

inline void to_json(json& j, const LinearizedHdv& l) {
  j = json{{"k1", l.k1}, {"k2", l.k2}, {"k3", l.k3}, {"lambda2", l.lambda2}, {"tau", l.tau}};
}

inline void from_json(const json& j, LinearizedHdv& l) {
  l.k1 = detail::require<double>(j, "k1");
  l.k2 = detail::require<double>(j, "k2");
  l.k3 = detail::require<double>(j, "k3");
  l.lambda2 = detail::value_or<double>(j, "lambda2", 0.0);
  l.tau = detail::value_or<double>(j, "tau", 0.0);
}

inline json count_to_json(const StabCount& c) {
  switch (c.kind) {
    case StabCount::Kind::Unbounded:
      return json{{"count", nullptr}, {"bound", "unbounded"}};
    case StabCount::Kind::AtLeast:
      return json{{"count", c.value}, {"bound", "at_least"}};
    default:
      return json{{"count", c.value}, {"bound", "exact"}};
  }
}

/// {"alpha": [lo, hi], ...}; missing keys keep the defaults.
inline ParamBounds bounds_from_json(const json& j) {
  ParamBounds b = ParamBounds::defaults();
  auto read = [&](const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw DataError(std::string("bounds for '") + key + "' must be [lo, hi]");
    lo = v[0].get<double>();
    hi = v[1].get<double>();
  };
  if (!j.is_object()) throw DataError("bounds must be a JSON object");
  read("alpha", b.lo.alpha, b.hi.alpha);
  read("beta", b.lo.beta, b.hi.beta);
  read("b_c", b.lo.b_c, b.hi.b_c);
  read("b_f", b.lo.b_f, b.hi.b_f);
  read("v0", b.lo.v0, b.hi.v0);
  read("m", b.lo.m, b.hi.m);
  read("tau", b.lo.tau, b.hi.tau);
  b.validate();
  return b;
}

inline json bounds_to_json(const ParamBounds& b) {
  return json{{"alpha", {b.lo.alpha, b.hi.alpha}}, {"beta", {b.lo.beta, b.hi.beta}},
              {"b_c", {b.lo.b_c, b.hi.b_c}},       {"b_f", {b.lo.b_f, b.hi.b_f}},
              {"v0", {b.lo.v0, b.hi.v0}},          {"m", {b.lo.m, b.hi.m}},
              {"tau", {b.lo.tau, b.hi.tau}}};
}

// ---------------------------------------------------------------------------
// Pair index

struct PairIndexEntry {
  std::int64_t leader_id = 0;
  std::int64_t follower_id = 0;
  std::int64_t overlap_start = 0;
  std::size_t overlap_len = 0;
};

inline json pair_index_to_json(const PairingResult& pairing) {
  json pairs = json::array();
  for (const auto& p : pairing.pairs) {
    pairs.push_back({{"leader_id", p.leader.vehicle_id},
                     {"follower_id", p.follower.vehicle_id},
                     {"overlap_start", p.overlap_start},
                     {"overlap_len", p.overlap_len},
                     {"short", p.short_for_calibration()}});
  }
  json rejected = json::array();
  for (const auto& r : pairing.rejected) {
    rejected.push_back({{"leader_id", r.leader_id},
                        {"follower_id", r.follower_id},
                        {"overlap_start", r.overlap_start},
                        {"overlap_len", r.overlap_len},
                        {"first_nonpositive_headway_frame", r.first_bad_frame}});
  }
  return json{{"pairs", pairs}, {"rejected", rejected}};
}

inline std::vector<PairIndexEntry> pair_index_from_json(const json& j) {
  const json& arr = j.is_array() ? j : j.at("pairs");
  std::vector<PairIndexEntry> out;
  for (const auto& e : arr) {
    out.push_back({detail::require<std::int64_t>(e, "leader_id"), detail::require<std::int64_t>(e, "follower_id"),
                   detail::require<std::int64_t>(e, "overlap_start"),
                   detail::require<std::size_t>(e, "overlap_len")});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model inventory

struct InventoryRecord {
  std::int64_t leader_id = 0;
  std::int64_t follower_id = 0;
  FvdmParams theta;
  double mixed_error = 0.0;
};

inline const char* to_string(StopReason r) {
  return r == StopReason::Stagnation ? "Stagnation" : "MaxGenerations";
}

inline json calibration_record(const VehiclePair& pair, const CalibrationResult& r) {
  return json{{"leader_id", pair.leader.vehicle_id},
              {"follower_id", pair.follower.vehicle_id},
              {"overlap_start", pair.overlap_start},
              {"overlap_len", pair.overlap_len},
              {"short_overlap", pair.short_for_calibration()},
              {"theta", r.theta},
              {"errors", {{"mixed", r.mixed_error}, {"abs", r.abs_error}, {"rel", r.rel_error}}},
              {"generations_run", r.generations_run},
              {"converged_by", to_string(r.converged_by)},
              {"fitness_history", r.fitness_history}};
}

inline std::vector<InventoryRecord> inventory_from_json(const json& j) {
  if (!j.is_array()) throw DataError("model inventory must be a JSON array");
  std::vector<InventoryRecord> out;
  for (const auto& e : j) {
    InventoryRecord r;
    r.leader_id = detail::value_or<std::int64_t>(e, "leader_id", 0);
    r.follower_id = detail::value_or<std::int64_t>(e, "follower_id", 0);
    r.theta = detail::require<FvdmParams>(e, "theta");
    if (e.contains("errors")) r.mixed_error = detail::value_or<double>(e.at("errors"), "mixed", 0.0);
    out.push_back(r);
  }
  if (out.empty()) throw DataError("model inventory is empty");
  return out;
}

// ---------------------------------------------------------------------------
// Platoon specs

inline LeadProfile profile_from_json(const json& j) {
  const auto type = detail::require<std::string>(j, "type");
  if (type == "constant") return ConstantSpeed{detail::require<double>(j, "v")};
  if (type == "piecewise") {
    PiecewiseConstantSpeed p;
    for (const auto& s : j.at("segments")) {
      p.segments.push_back({detail::require<double>(s, "t"), detail::require<double>(s, "v")});
    }
    if (p.segments.empty()) throw DataError("piecewise profile needs segments");
    return p;
  }
  if (type == "sinusoid") {
    SinusoidalSpeed s;
    s.v_star = detail::require<double>(j, "v_star");
    s.amplitude = detail::require<double>(j, "amplitude");
    s.omega = detail::require<double>(j, "omega");
    s.t_start = detail::value_or<double>(j, "t_start", 0.0);
    s.cycles = detail::value_or<double>(j, "cycles", 0.0);
    if (!(s.omega > 0.0)) throw DataError("sinusoid omega must be positive");
    return s;
  }
  throw DataError("unknown lead profile type '" + type + "'");
}

inline json profile_to_json(const LeadProfile& profile) {
  return std::visit(
      [](const auto& p) -> json {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConstantSpeed>) {
          return {{"type", "constant"}, {"v", p.v}};
        } else if constexpr (std::is_same_v<P, PiecewiseConstantSpeed>) {
          json segs = json::array();
          for (const auto& s : p.segments) segs.push_back({{"t", s.t}, {"v", s.v}});
          return {{"type", "piecewise"}, {"segments", segs}};
        } else {
          return {{"type", "sinusoid"}, {"v_star", p.v_star}, {"amplitude", p.amplitude},
                  {"omega", p.omega},   {"t_start", p.t_start}, {"cycles", p.cycles}};
        }
      },
      profile);
}

struct PlatoonRun {
  PlatoonSpec spec;
  double duration = 100.0;
  double dt = kFrameDt;
};

/// {"v_star", "duration", "dt", "lead_profile", "vehicles": [{"kind": "hdv"|
/// "cav"|"linear_hdv", ...}]}
inline PlatoonRun platoon_from_json(const json& j) {
  PlatoonRun run;
  run.spec.v_star = detail::require<double>(j, "v_star");
  run.duration = detail::require<double>(j, "duration");
  run.dt = detail::value_or<double>(j, "dt", kFrameDt);
  run.spec.lead_profile = j.contains("lead_profile") ? profile_from_json(j.at("lead_profile"))
                                                     : LeadProfile{ConstantSpeed{run.spec.v_star}};
  if (!j.contains("vehicles") || !j.at("vehicles").is_array()) throw DataError("platoon needs a vehicles array");
  for (const auto& v : j.at("vehicles")) {
    const auto kind = detail::require<std::string>(v, "kind");
    if (kind == "hdv") {
      run.spec.vehicles.emplace_back(HdvVehicle{detail::require<FvdmParams>(v, "theta")});
    } else if (kind == "cav") {
      run.spec.vehicles.emplace_back(CavVehicle{v.get<ControllerGains>(), detail::require<double>(v, "lambda3")});
    } else if (kind == "linear_hdv") {
      run.spec.vehicles.emplace_back(LinearHdvVehicle{v.get<LinearizedHdv>(), detail::require<double>(v, "lambda3")});
    } else {
      throw DataError("unknown vehicle kind '" + kind + "'");
    }
  }
  if (run.spec.vehicles.empty()) throw EmptyPlatoon();
  return run;
}

inline json platoon_to_json(const PlatoonRun& run) {
  json vehicles = json::array();
  for (const auto& v : run.spec.vehicles) {
    std::visit(
        [&vehicles](const auto& veh) {
          using V = std::decay_t<decltype(veh)>;
          if constexpr (std::is_same_v<V, HdvVehicle>) {
            vehicles.push_back({{"kind", "hdv"}, {"theta", veh.theta}});
          } else if constexpr (std::is_same_v<V, CavVehicle>) {
            json e = veh.gains;
            e["kind"] = "cav";
            e["lambda3"] = veh.lambda3;
            vehicles.push_back(e);
          } else {
            json e = veh.lin;
            e["kind"] = "linear_hdv";
            e["lambda3"] = veh.lambda3;
            vehicles.push_back(e);
          }
        },
        v);
  }
  return json{{"v_star", run.spec.v_star},
              {"duration", run.duration},
              {"dt", run.dt},
              {"lead_profile", profile_to_json(run.spec.lead_profile)},
              {"vehicles", vehicles}};
}

// ---------------------------------------------------------------------------
// Gain grids

/// {"k1": [..] | {"start", "stop", "step"}, "k2": ..., "k3": ...}; missing
/// axes keep their defaults.
inline GainGridSpec gain_grid_from_json(const json& j) {
  GainGridSpec g = GainGridSpec::defaults();
  auto axis = [&](const char* key, std::vector<double>& out) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    if (a.is_array()) {
      out = a.get<std::vector<double>>();
    } else {
      out = GainGridSpec::range(detail::require<double>(a, "start"), detail::require<double>(a, "stop"),
                                detail::require<double>(a, "step"));
    }
    if (out.empty()) throw DataError(std::string("gain axis '") + key + "' is empty");
  };
  if (!j.is_object()) throw DataError("gain grid must be a JSON object");
  axis("k1", g.k1);
  axis("k2", g.k2);
  axis("k3", g.k3);
  return g;
}

}  // namespace cavstab
