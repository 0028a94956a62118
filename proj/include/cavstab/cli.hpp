#pragma once

// File-staged command-line driver: ingest -> smooth -> pair -> calibrate ->
// stability -> optimize-gains -> simulate, plus `pipeline` chaining them.
// Every output directory receives one manifest.json.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cavstab/calibration.hpp"
#include "cavstab/carfollowing.hpp"
#include "cavstab/json_io.hpp"
#include "cavstab/smoothing.hpp"
#include "cavstab/stability.hpp"
#include "cavstab/trajectory_io.hpp"

#ifndef CAVSTAB_VERSION
#define CAVSTAB_VERSION "0.1.0"
#endif

namespace cavstab::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericFailure = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

/// Accepts inline JSON text or a path to a JSON file.
inline json load_json_arg(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\r\n");
  const std::string text = first != std::string::npos && (arg[first] == '{' || arg[first] == '[')
                               ? arg
                               : read_file(arg);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid JSON: ") + e.what());
  }
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Run manifest

/// Provenance record of one subcommand invocation. The digest covers input
/// contents and the effective flags, not paths, so relocated reruns agree.
/// Wall-clock stamps are only written with --timestamps.
class RunManifest {
 public:
  RunManifest(std::string subcommand, bool timestamps)
      : subcommand_(std::move(subcommand)), timestamps_(timestamps) {
    if (timestamps_) started_ = utc_now();
  }

  void input(const std::string& role, std::string_view content) { inputs_[role] = sha256_hex(content); }
  void flag(const std::string& name, const json& value) { flags_[name] = value; }
  void seed(std::uint64_t s) { seed_ = s; }

  std::string digest() const {
    const json payload{{"subcommand", subcommand_}, {"inputs", inputs_}, {"flags", flags_}};
    return sha256_hex(payload.dump());
  }

  void write(const fs::path& dir) const {
    json j{{"subcommand", subcommand_},
           {"config_digest", digest()},
           {"tool_version", CAVSTAB_VERSION},
           {"rng_seed", seed_ ? json(*seed_) : json(nullptr)},
           {"inputs", inputs_},
           {"flags", flags_},
           {"started", started_ ? json(*started_) : json(nullptr)},
           {"finished", timestamps_ ? json(utc_now()) : json(nullptr)}};
    write_json(dir / "manifest.json", j);
  }

 private:
  std::string subcommand_;
  bool timestamps_;
  std::optional<std::string> started_;
  std::optional<std::uint64_t> seed_;
  json inputs_ = json::object();
  json flags_ = json::object();
};

// ---------------------------------------------------------------------------
// Shared configuration

/// Operating point used by `stability` and `optimize-gains`. A null lambda3
/// means each HDV is linearized at its own equilibrium headway V^-1(v_star).
struct EquilibriumConfig {
  double v_star = 15.0;
  double lambda2 = 0.0;
  std::optional<double> lambda3;
  double cav_lambda2 = 0.0;
  double cav_lambda3 = 25.0;

  static EquilibriumConfig from_json(const json& j) {
    EquilibriumConfig c;
    c.v_star = detail::value_or<double>(j, "v_star", c.v_star);
    c.lambda2 = detail::value_or<double>(j, "lambda2", c.lambda2);
    if (j.contains("lambda3") && !j.at("lambda3").is_null()) c.lambda3 = j.at("lambda3").get<double>();
    c.cav_lambda2 = detail::value_or<double>(j, "cav_lambda2", c.cav_lambda2);
    c.cav_lambda3 = detail::value_or<double>(j, "cav_lambda3", c.cav_lambda3);
    return c;
  }

  json to_json() const {
    return json{{"v_star", v_star},
                {"lambda2", lambda2},
                {"lambda3", lambda3 ? json(*lambda3) : json(nullptr)},
                {"cav_lambda2", cav_lambda2},
                {"cav_lambda3", cav_lambda3}};
  }

  EquilibriumSpec hdv_spec(const FvdmParams& theta) const {
    const double l3 = lambda3 ? *lambda3 : equilibrium_headway(theta, v_star) - lambda2 * v_star;
    return {v_star, lambda2, l3};
  }

  EquilibriumSpec cav_spec() const { return {v_star, cav_lambda2, cav_lambda3}; }
};

struct Options {
  std::string input;
  std::string trajectories;
  std::string out;
  std::string units = "meters";
  std::optional<std::uint64_t> seed;
  double tx = 0.5;
  double tv = 1.0;
  double ta = 4.0;
  bool pin_tau = false;
  std::string bounds;
  double omega_min = 1e-3;
  double omega_max = 1e2;
  std::size_t omega_points = 4000;
  double headway_min = 10.0;
  double headway_max = 40.0;
  double beta = 5.0;
  std::string gain_grid;
  std::string equilibrium;
  std::optional<std::int64_t> lane;
  std::size_t max_generations = 1000;
  std::size_t population = 50;
  std::size_t platoon_size = 20;
  bool timestamps = false;

  OmegaGrid omega_grid() const {
    OmegaGrid g{omega_min, omega_max, omega_points};
    g.validate();
    return g;
  }

  EquilibriumConfig equilibrium_config() const {
    return equilibrium.empty() ? EquilibriumConfig{} : EquilibriumConfig::from_json(load_json_arg(equilibrium));
  }

  ParamBounds param_bounds() const {
    ParamBounds b = bounds.empty() ? ParamBounds::defaults() : bounds_from_json(load_json_arg(bounds));
    if (pin_tau) b.pin_tau();
    return b;
  }

  GainGridSpec gain_grid_spec() const {
    return gain_grid.empty() ? GainGridSpec::defaults() : gain_grid_from_json(load_json_arg(gain_grid));
  }

  Units parsed_units() const {
    if (units == "meters") return Units::Meters;
    if (units == "feet") return Units::Feet;
    throw UsageError("--units must be 'feet' or 'meters'");
  }
};

inline std::map<std::int64_t, Trajectory> load_trajectories(std::string_view csv) {
  return build_trajectories(parse_canonical_csv(csv)).trajectories;
}

inline std::string trajectories_csv(const std::map<std::int64_t, Trajectory>& trajectories) {
  return to_canonical_csv(to_records(trajectories));
}

// ---------------------------------------------------------------------------
// Stages

inline void cmd_ingest(const Options& o) {
  RunManifest manifest("ingest", o.timestamps);
  const auto text = read_file(o.input);
  manifest.input("input", text);
  manifest.flag("units", o.units);
  const auto records = parse_ngsim_csv(text, o.parsed_units());
  const auto built = build_trajectories(records);
  const fs::path dir(o.out);
  write_file(dir / "trajectories.csv", trajectories_csv(built.trajectories));
  write_json(dir / "ingest_report.json", {{"n_records", records.size()},
                                          {"n_vehicles", built.trajectories.size()},
                                          {"fragments_discarded", built.fragments_discarded},
                                          {"vehicles_too_short", built.vehicles_too_short}});
  manifest.write(dir);
}

inline void cmd_smooth(const Options& o) {
  RunManifest manifest("smooth", o.timestamps);
  const auto text = read_file(o.input);
  manifest.input("input", text);
  manifest.flag("tx", o.tx);
  manifest.flag("tv", o.tv);
  manifest.flag("ta", o.ta);
  const SmoothingConfig cfg{o.tx, o.tv, o.ta, kFrameDt};
  const auto trajectories = load_trajectories(text);

  std::vector<double> reported;
  std::vector<double> recomputed;
  std::vector<double> smoothed_acc;
  std::map<std::int64_t, Trajectory> smoothed;
  for (const auto& [id, tr] : trajectories) {
    reported.insert(reported.end(), tr.accelerations.begin(), tr.accelerations.end());
    const auto a_raw = differentiate(differentiate(tr.positions, cfg.dt), cfg.dt);
    recomputed.insert(recomputed.end(), a_raw.begin(), a_raw.end());
    auto s = smooth_trajectory(tr, cfg);
    smoothed_acc.insert(smoothed_acc.end(), s.accelerations.begin(), s.accelerations.end());
    smoothed.emplace(id, std::move(s));
  }
  const fs::path dir(o.out);
  write_file(dir / "trajectories.csv", trajectories_csv(smoothed));
  write_json(dir / "smoothing_diagnostics.json",
             {{"raw_exceedance_3ms2", exceedance_fraction(reported, 3.0)},
              {"recomputed_raw_exceedance_3ms2", exceedance_fraction(recomputed, 3.0)},
              {"smoothed_exceedance_3ms2", exceedance_fraction(smoothed_acc, 3.0)},
              {"n_vehicles", smoothed.size()}});
  manifest.write(dir);
}

inline void cmd_pair(const Options& o) {
  RunManifest manifest("pair", o.timestamps);
  const auto text = read_file(o.input);
  manifest.input("input", text);
  manifest.flag("lane", o.lane ? json(*o.lane) : json(nullptr));
  const auto pairing = pair_leader_follower(load_trajectories(text), o.lane);
  const fs::path dir(o.out);
  write_json(dir / "pairs.json", pair_index_to_json(pairing));
  manifest.write(dir);
}

inline void cmd_calibrate(const Options& o) {
  if (!o.seed) throw UsageError("calibrate requires --seed");
  if (o.trajectories.empty()) throw UsageError("calibrate requires --trajectories <smoothed csv>");
  RunManifest manifest("calibrate", o.timestamps);
  const auto index_text = read_file(o.input);
  const auto traj_text = read_file(o.trajectories);
  manifest.input("pairs", index_text);
  manifest.input("trajectories", traj_text);
  manifest.seed(*o.seed);
  const auto bounds = o.param_bounds();
  manifest.flag("bounds", bounds_to_json(bounds));
  manifest.flag("max_generations", o.max_generations);
  manifest.flag("population", o.population);

  const auto index = pair_index_from_json(load_json_arg(index_text));
  const auto trajectories = load_trajectories(traj_text);
  json inventory = json::array();
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& e = index[i];
    const auto pair = make_pair_from_index(trajectories, e.leader_id, e.follower_id, e.overlap_start, e.overlap_len);
    GaConfig cfg;
    cfg.population_size = o.population;
    cfg.max_generations = o.max_generations;
    cfg.rng_seed = *o.seed + i;
    inventory.push_back(calibration_record(pair, calibrate_ga(pair, bounds, cfg)));
  }
  const fs::path dir(o.out);
  write_json(dir / "inventory.json", inventory);
  manifest.write(dir);
}

inline void cmd_stability(const Options& o) {
  RunManifest manifest("stability", o.timestamps);
  const auto text = read_file(o.input);
  manifest.input("inventory", text);
  const auto eq = o.equilibrium_config();
  const auto grid = o.omega_grid();
  manifest.flag("equilibrium", eq.to_json());
  manifest.flag("omega_grid", {grid.omega_min, grid.omega_max, grid.points});

  const auto inventory = inventory_from_json(load_json_arg(text));
  json models = json::array();
  std::vector<LinearizedHdv> lins;
  for (const auto& rec : inventory) {
    const auto spec = eq.hdv_spec(rec.theta);
    const auto lin = linearize_hdv(rec.theta, spec);
    lins.push_back(lin);
    const double w0 = vehicle_critical_frequency(lin, grid);
    json m = lin;
    m["leader_id"] = rec.leader_id;
    m["follower_id"] = rec.follower_id;
    m["desired_headway"] = spec.desired_headway();
    m["omega0"] = w0;
    m["string_stable"] = w0 == 0.0;
    models.push_back(m);
  }
  const fs::path dir(o.out);
  write_json(dir / "stability.json", {{"equilibrium", eq.to_json()},
                                      {"models", models},
                                      {"platoon_critical_frequency", platoon_critical_frequency(lins, grid)}});
  manifest.write(dir);
}

inline std::string format_gain(double v) { return format_double(v); }

/// k2 rows, k3 columns; -1 = unbounded, -2 = violates CAV string stability.
inline std::string heatmap_csv(const GainSearchResult& r, std::size_t k1_index) {
  std::string out = "k2\\k3";
  for (double k3 : r.k3_values) out += "," + format_gain(k3);
  out += '\n';
  for (std::size_t b = 0; b < r.k2_values.size(); ++b) {
    out += format_gain(r.k2_values[b]);
    for (std::size_t c = 0; c < r.k3_values.size(); ++c) {
      const auto idx = r.index(k1_index, b, c);
      const std::int64_t cell =
          r.feasible[idx] ? min_count(r.n_stable_grid[idx], r.n_safe_grid[idx]).encode() : -2;
      out += "," + std::to_string(cell);
    }
    out += '\n';
  }
  return out;
}

/// Draws the HDV platoon that follows the CAV from the model inventory.
inline std::vector<std::size_t> sample_platoon(std::size_t inventory_size, std::size_t platoon_size,
                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, inventory_size - 1);
  std::vector<std::size_t> out(platoon_size);
  for (auto& i : out) i = pick(rng);
  return out;
}

inline GainSearchResult cmd_optimize_gains(const Options& o) {
  RunManifest manifest("optimize-gains", o.timestamps);
  const auto text = read_file(o.input);
  manifest.input("inventory", text);
  const std::uint64_t seed = o.seed.value_or(0);
  manifest.seed(seed);
  const auto eq = o.equilibrium_config();
  const auto grid = o.omega_grid();
  const auto gains = o.gain_grid_spec();
  manifest.flag("equilibrium", eq.to_json());
  manifest.flag("omega_grid", {grid.omega_min, grid.omega_max, grid.points});
  manifest.flag("gain_grid", {{"k1", gains.k1}, {"k2", gains.k2}, {"k3", gains.k3}});
  manifest.flag("headway_bounds", {o.headway_min, o.headway_max});
  manifest.flag("beta", o.beta);
  manifest.flag("platoon_size", o.platoon_size);
  if (o.platoon_size == 0) throw UsageError("--platoon-size must be positive");

  const auto inventory = inventory_from_json(load_json_arg(text));
  const auto members = sample_platoon(inventory.size(), o.platoon_size, seed);
  std::vector<LinearizedHdv> lins;
  json platoon = json::array();
  for (std::size_t idx : members) {
    const auto& rec = inventory[idx];
    lins.push_back(linearize_hdv(rec.theta, eq.hdv_spec(rec.theta)));
    platoon.push_back({{"inventory_index", idx},
                       {"follower_id", rec.follower_id},
                       {"theta", rec.theta},
                       {"linearized", lins.back()}});
  }
  const auto res = optimize_gains(lins, eq.cav_spec(), {o.headway_min, o.headway_max}, o.beta, gains, grid);

  auto grid_json = [&res](const std::vector<StabCount>& cells) {
    json slices = json::array();
    for (std::size_t a = 0; a < res.k1_values.size(); ++a) {
      json rows = json::array();
      for (std::size_t b = 0; b < res.k2_values.size(); ++b) {
        json row = json::array();
        for (std::size_t c = 0; c < res.k3_values.size(); ++c) {
          const auto idx = res.index(a, b, c);
          row.push_back(res.feasible[idx] ? cells[idx].encode() : -2);
        }
        rows.push_back(row);
      }
      slices.push_back(rows);
    }
    return slices;
  };

  const fs::path dir(o.out);
  write_json(dir / "gains.json",
             {{"best_gains", res.best_gains},
              {"cav_lambda3", eq.cav_lambda3},
              {"best_counts", {{"n_stable", count_to_json(res.best_stable)}, {"n_safe", count_to_json(res.best_safe)}}},
              {"eta", res.eta},
              {"desired_headway", res.desired_headway},
              {"critical_frequency", res.critical_frequency},
              {"binding_omega", res.binding_omega},
              {"grid_axes", {{"k1", res.k1_values}, {"k2", res.k2_values}, {"k3", res.k3_values}}},
              {"cell_encoding", "count; -1 unbounded; -2 violates CAV string stability"},
              {"n_stable_grid", grid_json(res.n_stable_grid)},
              {"n_safe_grid", grid_json(res.n_safe_grid)}});
  write_json(dir / "platoon.json", {{"equilibrium", eq.to_json()}, {"members", platoon}});
  for (std::size_t a = 0; a < res.k1_values.size(); ++a) {
    write_file(dir / ("heatmap_k1=" + format_gain(res.k1_values[a]) + ".csv"), heatmap_csv(res, a));
  }
  manifest.write(dir);
  return res;
}

inline json simulation_summary(const PlatoonRun& run, const std::vector<Trajectory>& trajs,
                               const CollisionDetected* collision) {
  json vehicles = json::array();
  for (std::size_t i = 1; i < trajs.size(); ++i) {
    const double target = platoon_equilibrium_headway(run.spec.vehicles[i - 1], run.spec.v_star);
    double worst = 0.0;
    for (std::size_t k = 0; k < trajs[i].size(); ++k) {
      worst = std::max(worst, std::abs(trajs[i - 1].positions[k] - trajs[i].positions[k] - target));
    }
    const char* kind = std::visit(
        [](const auto& v) {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, HdvVehicle>) return "hdv";
          else if constexpr (std::is_same_v<V, CavVehicle>) return "cav";
          else return "linear_hdv";
        },
        run.spec.vehicles[i - 1]);
    vehicles.push_back({{"vehicle_id", trajs[i].vehicle_id}, {"kind", kind}, {"max_abs_headway_deviation", worst}});
  }
  json s{{"vehicles", vehicles}, {"collision", collision != nullptr}};
  if (collision) {
    s["collision_vehicle_index"] = collision->vehicle_index;
    s["collision_frame"] = collision->frame;
  }
  return s;
}

/// Returns kNumericFailure on collision after dumping the partial run.
inline int cmd_simulate(const Options& o) {
  RunManifest manifest("simulate", o.timestamps);
  const auto text = read_file(o.input);
  manifest.input("platoon", text);
  const auto run = platoon_from_json(load_json_arg(text));
  const fs::path dir(o.out);
  auto dump = [&](const std::vector<Trajectory>& trajs, const CollisionDetected* collision) {
    write_file(dir / "trajectories.csv", to_canonical_csv(to_records(std::span<const Trajectory>(trajs)), run.dt));
    write_json(dir / "summary.json", simulation_summary(run, trajs, collision));
    manifest.write(dir);
  };
  try {
    dump(simulate_platoon(run.spec, run.duration, run.dt), nullptr);
    return kOk;
  } catch (const CollisionDetected& c) {
    dump(c.partial, &c);
    return kNumericFailure;
  }
}

// ---------------------------------------------------------------------------
// Synthetic NGSIM-style input

/// One lane of FVDM drivers behind an oscillating leader, written in NGSIM
/// column layout (SI units) with uniform +-0.2 m position noise; reported
/// speeds and accelerations are differenced from the noisy positions.
inline std::string synthetic_ngsim_csv(std::uint64_t seed, std::size_t followers = 5,
                                       double duration = 100.0) {
  std::mt19937_64 rng(seed);
  auto uni = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  PlatoonSpec spec;
  spec.v_star = 15.0;
  spec.lead_profile = SinusoidalSpeed{15.0, 1.5, 0.25, 10.0, 0.0};
  for (std::size_t i = 0; i < followers; ++i) {
    FvdmParams p{uni(1.0, 3.0), uni(1.0, 2.0), uni(2.0, 5.0), uni(15.0, 30.0), uni(12.0, 20.0), uni(0.08, 0.15), 0.0};
    spec.vehicles.emplace_back(HdvVehicle{p});
  }
  const auto trajs = simulate_platoon(spec, duration - kFrameDt, kFrameDt);
  std::uniform_real_distribution<double> noise(-0.2, 0.2);
  std::string out = "Vehicle_ID,Frame_ID,Total_Frames,Local_X,Local_Y,v_length,v_Vel,v_Acc,Lane_ID,Preceding\n";
  const std::int64_t frame0 = 1000;
  for (const auto& tr : trajs) {
    std::vector<double> noisy(tr.positions);
    for (auto& x : noisy) x += 200.0 + noise(rng);
    const auto v = differentiate(noisy, kFrameDt);
    const auto a = differentiate(v, kFrameDt);
    for (std::size_t k = 0; k < tr.size(); ++k) {
      out += std::to_string(tr.vehicle_id) + "," + std::to_string(frame0 + static_cast<std::int64_t>(k)) + "," +
             std::to_string(tr.size()) + ",6.0," + format_double(noisy[k]) + ",4.5," + format_double(v[k]) + "," +
             format_double(a[k]) + ",2," + std::to_string(tr.preceding_ids[k]) + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

inline int cmd_pipeline(const Options& o) {
  if (!o.seed) throw UsageError("pipeline requires --seed");
  const fs::path root(o.out);
  RunManifest manifest("pipeline", o.timestamps);
  manifest.seed(*o.seed);

  Options stage = o;
  std::string input_path = o.input;
  if (o.input == "synthetic") {
    const auto csv = synthetic_ngsim_csv(*o.seed);
    RunManifest gen("synthetic", o.timestamps);
    gen.seed(*o.seed);
    write_file(root / "00_input" / "ngsim.csv", csv);
    gen.write(root / "00_input");
    input_path = (root / "00_input" / "ngsim.csv").string();
    stage.units = "meters";
  }
  manifest.input("input", read_file(input_path));
  manifest.flag("units", stage.units);

  stage.input = input_path;
  stage.out = (root / "01_ingest").string();
  cmd_ingest(stage);

  stage.input = (root / "01_ingest" / "trajectories.csv").string();
  stage.out = (root / "02_smooth").string();
  cmd_smooth(stage);

  stage.input = (root / "02_smooth" / "trajectories.csv").string();
  stage.out = (root / "03_pair").string();
  cmd_pair(stage);

  stage.input = (root / "03_pair" / "pairs.json").string();
  stage.trajectories = (root / "02_smooth" / "trajectories.csv").string();
  stage.out = (root / "04_calibrate").string();
  cmd_calibrate(stage);

  stage.input = (root / "04_calibrate" / "inventory.json").string();
  stage.out = (root / "05_stability").string();
  cmd_stability(stage);

  stage.out = (root / "06_optimize_gains").string();
  const auto gains = cmd_optimize_gains(stage);

  // Validation run: the optimized CAV leads the sampled HDV platoon through a
  // sinusoidal disturbance at the binding frequency.
  const auto eq = o.equilibrium_config();
  const auto platoon = load_json_arg(read_file(root / "06_optimize_gains" / "platoon.json"));
  PlatoonRun run;
  run.spec.v_star = eq.v_star;
  const double omega = gains.binding_omega > 0.0 ? gains.binding_omega
                       : gains.critical_frequency > 0.0 ? 0.5 * gains.critical_frequency
                                                        : 0.3;
  run.spec.lead_profile = SinusoidalSpeed{eq.v_star, 0.5, omega, 0.0, 0.0};
  run.spec.vehicles.emplace_back(CavVehicle{gains.best_gains, eq.cav_lambda3});
  for (const auto& m : platoon.at("members")) run.spec.vehicles.emplace_back(HdvVehicle{m.at("theta").get<FvdmParams>()});
  run.duration = 300.0;
  run.dt = kFrameDt;
  write_json(root / "07_simulate" / "platoon.json", platoon_to_json(run));
  stage.input = (root / "07_simulate" / "platoon.json").string();
  stage.out = (root / "07_simulate").string();
  const int sim = cmd_simulate(stage);

  manifest.flag("stages", {"ingest", "smooth", "pair", "calibrate", "stability", "optimize-gains", "simulate"});
  manifest.write(root);
  return sim;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Car-following calibration and CAV string-stability gain design", "cavstab"};
  app.require_subcommand(1);
  Options o;
  std::optional<std::uint64_t> seed_arg;

  auto common = [&o](CLI::App* sub, bool needs_input = true) {
    auto* in = sub->add_option("--input", o.input, "input file");
    if (needs_input) in->required();
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_flag("--timestamps", o.timestamps, "record wall-clock times in manifest.json");
  };
  auto omega = [&o](CLI::App* sub) {
    sub->add_option("--omega-min", o.omega_min, "lowest analysed frequency, rad/s");
    sub->add_option("--omega-max", o.omega_max, "highest analysed frequency, rad/s");
    sub->add_option("--omega-points", o.omega_points, "log-spaced frequency samples");
    sub->add_option("--equilibrium", o.equilibrium, "equilibrium JSON (inline or path)");
  };
  auto gains = [&o](CLI::App* sub) {
    sub->add_option("--headway-min", o.headway_min, "minimum admissible headway, m");
    sub->add_option("--headway-max", o.headway_max, "maximum admissible headway, m");
    sub->add_option("--beta", o.beta, "disturbance magnitude, m");
    sub->add_option("--gain-grid", o.gain_grid, "gain grid JSON (inline or path)");
    sub->add_option("--platoon-size", o.platoon_size, "HDVs sampled from the inventory");
  };
  auto calib = [&o](CLI::App* sub) {
    sub->add_flag("--pin-tau", o.pin_tau, "fix the reaction delay at 0");
    sub->add_option("--bounds", o.bounds, "parameter bounds JSON (inline or path)");
    sub->add_option("--max-generations", o.max_generations, "GA generation cap");
    sub->add_option("--population", o.population, "GA population size");
  };

  auto* ingest = app.add_subcommand("ingest", "NGSIM CSV -> canonical trajectories");
  common(ingest);
  ingest->add_option("--units", o.units, "units of the input file")->check(CLI::IsMember({"feet", "meters"}));

  auto* smooth = app.add_subcommand("smooth", "sEMA smoothing of canonical trajectories");
  common(smooth);
  smooth->add_option("--tx", o.tx, "position smoothing width, s");
  smooth->add_option("--tv", o.tv, "velocity smoothing width, s");
  smooth->add_option("--ta", o.ta, "acceleration smoothing width, s");

  auto* pair = app.add_subcommand("pair", "leader/follower pairing");
  common(pair);
  pair->add_option("--lane", o.lane, "restrict to one lane");

  auto* calibrate = app.add_subcommand("calibrate", "GA calibration of FVDM per pair");
  common(calibrate);
  calibrate->add_option("--trajectories", o.trajectories, "smoothed canonical trajectories")->required();
  calibrate->add_option("--seed", seed_arg, "RNG seed");
  calib(calibrate);

  auto* stability = app.add_subcommand("stability", "linearization and critical frequencies");
  common(stability);
  omega(stability);

  auto* optimize = app.add_subcommand("optimize-gains", "CAV gain grid search");
  common(optimize);
  omega(optimize);
  gains(optimize);
  optimize->add_option("--seed", seed_arg, "platoon sampling seed");

  auto* simulate = app.add_subcommand("simulate", "platoon simulation from a JSON spec");
  common(simulate);

  auto* pipeline = app.add_subcommand("pipeline", "run every stage in order");
  common(pipeline);
  pipeline->add_option("--seed", seed_arg, "RNG seed");
  pipeline->add_option("--units", o.units, "units of the input file")->check(CLI::IsMember({"feet", "meters"}));
  pipeline->add_option("--tx", o.tx, "position smoothing width, s");
  pipeline->add_option("--tv", o.tv, "velocity smoothing width, s");
  pipeline->add_option("--ta", o.ta, "acceleration smoothing width, s");
  pipeline->add_option("--lane", o.lane, "restrict pairing to one lane");
  calib(pipeline);
  omega(pipeline);
  gains(pipeline);

  std::vector<const char*> argv{"cavstab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  }
  o.seed = seed_arg;

  try {
    if (ingest->parsed()) cmd_ingest(o);
    else if (smooth->parsed()) cmd_smooth(o);
    else if (pair->parsed()) cmd_pair(o);
    else if (calibrate->parsed()) cmd_calibrate(o);
    else if (stability->parsed()) cmd_stability(o);
    else if (optimize->parsed()) cmd_optimize_gains(o);
    else if (simulate->parsed()) return cmd_simulate(o);
    else if (pipeline->parsed()) return cmd_pipeline(o);
    return kOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
}

}  // namespace cavstab::cli
