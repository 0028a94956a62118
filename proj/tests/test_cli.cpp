#include <gtest/gtest.h>

#include <sstream>

#include "cavstab/cli.hpp"
#include "support.hpp"

using cavstab::cli::run;
using testing_support::slurp;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kSmallGrid = R"({"k1":[0,0.5],"k2":{"start":0.2,"stop":1.0,"step":0.4},"k3":[0.2,0.6]})";

std::string collision_spec() {
  return R"({"v_star":15,"duration":60,"dt":0.1,
             "lead_profile":{"type":"piecewise","segments":[{"t":0,"v":15},{"t":1,"v":0}]},
             "vehicles":[{"kind":"cav","k1":0.1,"k2":0.1,"k3":0.1,"lambda2":0,"lambda3":2}]})";
}

std::string calm_spec() {
  return R"({"v_star":15,"duration":20,"dt":0.1,
             "lead_profile":{"type":"sinusoid","v_star":15,"amplitude":0.5,"omega":0.5,"t_start":0,"cycles":0},
             "vehicles":[{"kind":"cav","k1":0.2,"k2":0.8,"k3":0.6,"lambda2":0,"lambda3":25},
                         {"kind":"hdv","theta":{"alpha":2,"beta":1.5,"b_c":3,"b_f":25,"v0":12,"m":0.1,"tau":0}}]})";
}

}  // namespace

TEST(Cli, UnknownSubcommandIsUsageError) {
  const auto r = invoke({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(invoke({}).code, 1);
}

TEST(Cli, HelpSucceeds) {
  const auto r = invoke({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("optimize-gains"), std::string::npos);
}

TEST(Cli, CalibrateRequiresSeed) {
  TempDir dir("cli_seed");
  const auto r = invoke({"calibrate", "--input", dir.str("pairs.json"), "--trajectories", dir.str("t.csv"), "--out",
                         dir.str("out")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--seed"), std::string::npos);
}

TEST(Cli, MissingInputIsDataError) {
  TempDir dir("cli_missing");
  EXPECT_EQ(invoke({"ingest", "--input", dir.str("nope.csv"), "--out", dir.str("out")}).code, 2);
}

TEST(Cli, MalformedCsvIsDataError) {
  TempDir dir("cli_bad");
  cavstab::cli::write_file(dir.path() / "bad.csv",
                           "Vehicle_ID,Frame_ID,Local_Y,v_Vel,v_Acc,Lane_ID,Preceding,v_length\n1,2,x,4,5,6,7,8\n");
  const auto r = invoke({"ingest", "--input", dir.str("bad.csv"), "--out", dir.str("out")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Local_Y"), std::string::npos);
}

TEST(Cli, CollisionExitsThreeWithPartialDump) {
  TempDir dir("cli_crash");
  cavstab::cli::write_file(dir.path() / "spec.json", collision_spec());
  const auto r = invoke({"simulate", "--input", dir.str("spec.json"), "--out", dir.str("out")});
  EXPECT_EQ(r.code, 3);
  ASSERT_TRUE(fs::exists(dir.path() / "out" / "trajectories.csv"));
  ASSERT_TRUE(fs::exists(dir.path() / "out" / "manifest.json"));
  const auto summary = nlohmann::json::parse(slurp(dir.path() / "out" / "summary.json"));
  EXPECT_TRUE(summary.at("collision").get<bool>());
  const auto frame = summary.at("collision_frame").get<std::int64_t>();
  const auto rows = cavstab::parse_canonical_csv(slurp(dir.path() / "out" / "trajectories.csv"));
  EXPECT_EQ(rows.size(), 2u * static_cast<std::size_t>(frame + 1));
}

TEST(Cli, SimulateWritesSummary) {
  TempDir dir("cli_sim");
  cavstab::cli::write_file(dir.path() / "spec.json", calm_spec());
  ASSERT_EQ(invoke({"simulate", "--input", dir.str("spec.json"), "--out", dir.str("out")}).code, 0);
  const auto summary = nlohmann::json::parse(slurp(dir.path() / "out" / "summary.json"));
  EXPECT_FALSE(summary.at("collision").get<bool>());
  ASSERT_EQ(summary.at("vehicles").size(), 2u);
  EXPECT_EQ(summary.at("vehicles")[0].at("kind"), "cav");
  EXPECT_GT(summary.at("vehicles")[0].at("max_abs_headway_deviation").get<double>(), 0.0);
  const auto rows = cavstab::parse_canonical_csv(slurp(dir.path() / "out" / "trajectories.csv"));
  EXPECT_EQ(rows.size(), 3u * 201u);
}

TEST(Cli, StagesChainFromFiles) {
  TempDir dir("cli_chain");
  const auto root = dir.path();
  // Write the synthetic file in feet to exercise the conversion.
  std::string csv = cavstab::cli::synthetic_ngsim_csv(3, 2, 70.0);
  cavstab::cli::write_file(root / "meters.csv", csv);
  ASSERT_EQ(invoke({"ingest", "--input", (root / "meters.csv").string(), "--out", (root / "ingest").string()}).code, 0);
  ASSERT_EQ(invoke({"ingest", "--input", (root / "meters.csv").string(), "--out", (root / "ingest_ft").string(),
                    "--units", "feet"}).code, 0);
  const auto m = cavstab::parse_canonical_csv(slurp(root / "ingest" / "trajectories.csv"));
  const auto f = cavstab::parse_canonical_csv(slurp(root / "ingest_ft" / "trajectories.csv"));
  ASSERT_EQ(m.size(), f.size());
  EXPECT_NEAR(f[5].local_y, m[5].local_y * 0.3048, 1e-9);

  ASSERT_EQ(invoke({"smooth", "--input", (root / "ingest" / "trajectories.csv").string(), "--out",
                    (root / "smooth").string()}).code, 0);
  const auto diag = nlohmann::json::parse(slurp(root / "smooth" / "smoothing_diagnostics.json"));
  EXPECT_EQ(diag.at("n_vehicles"), 3);
  EXPECT_LT(diag.at("smoothed_exceedance_3ms2").get<double>(), diag.at("raw_exceedance_3ms2").get<double>());

  ASSERT_EQ(invoke({"pair", "--input", (root / "smooth" / "trajectories.csv").string(), "--out",
                    (root / "pair").string()}).code, 0);
  const auto pairs = nlohmann::json::parse(slurp(root / "pair" / "pairs.json"));
  ASSERT_EQ(pairs.at("pairs").size(), 2u);
  EXPECT_EQ(pairs.at("pairs")[0].at("overlap_len"), 700);
  EXPECT_EQ(pairs.at("pairs")[0].at("short"), false);

  ASSERT_EQ(invoke({"calibrate", "--input", (root / "pair" / "pairs.json").string(), "--trajectories",
                    (root / "smooth" / "trajectories.csv").string(), "--out", (root / "cal").string(), "--seed", "5",
                    "--max-generations", "30", "--pin-tau"}).code, 0);
  const auto inv = nlohmann::json::parse(slurp(root / "cal" / "inventory.json"));
  ASSERT_EQ(inv.size(), 2u);
  EXPECT_EQ(inv[0].at("generations_run"), 30);
  EXPECT_EQ(inv[0].at("theta").at("tau"), 0.0);

  ASSERT_EQ(invoke({"stability", "--input", (root / "cal" / "inventory.json").string(), "--out",
                    (root / "stab").string()}).code, 0);
  const auto stab = nlohmann::json::parse(slurp(root / "stab" / "stability.json"));
  ASSERT_EQ(stab.at("models").size(), 2u);
  for (const auto& model : stab.at("models")) {
    for (const char* key : {"k1", "k2", "k3", "omega0"}) EXPECT_TRUE(model.contains(key));
  }

  ASSERT_EQ(invoke({"optimize-gains", "--input", (root / "cal" / "inventory.json").string(), "--out",
                    (root / "gains").string(), "--gain-grid", kSmallGrid, "--platoon-size", "4", "--omega-points",
                    "300"}).code, 0);
  EXPECT_TRUE(fs::exists(root / "gains" / "heatmap_k1=0.csv"));
  EXPECT_TRUE(fs::exists(root / "gains" / "heatmap_k1=0.5.csv"));
  const auto heat = slurp(root / "gains" / "heatmap_k1=0.csv");
  EXPECT_EQ(heat.substr(0, heat.find('\n')), "k2\\k3,0.2,0.6");
  EXPECT_EQ(std::count(heat.begin(), heat.end(), '\n'), 4);
  const auto gains = nlohmann::json::parse(slurp(root / "gains" / "gains.json"));
  for (const char* key : {"best_gains", "best_counts", "eta", "n_stable_grid", "n_safe_grid", "grid_axes"}) {
    EXPECT_TRUE(gains.contains(key)) << key;
  }

  for (const char* stage : {"ingest", "smooth", "pair", "cal", "stab", "gains"}) {
    const auto man = nlohmann::json::parse(slurp(root / stage / "manifest.json"));
    EXPECT_EQ(man.at("config_digest").get<std::string>().size(), 64u);
    EXPECT_TRUE(man.at("started").is_null());
    EXPECT_EQ(man.at("tool_version"), CAVSTAB_VERSION);
  }
}

TEST(Cli, ManifestDigestTracksInputsAndFlags) {
  TempDir dir("cli_digest");
  const auto root = dir.path();
  cavstab::cli::write_file(root / "in.csv", cavstab::cli::synthetic_ngsim_csv(1, 1, 10.0));
  auto digest = [&](const std::vector<std::string>& extra, const std::string& out) {
    std::vector<std::string> args{"ingest", "--input", (root / "in.csv").string(), "--out", (root / out).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    EXPECT_EQ(invoke(args).code, 0);
    return nlohmann::json::parse(slurp(root / out / "manifest.json"));
  };
  const auto a = digest({}, "a");
  const auto b = digest({}, "b");
  const auto c = digest({"--units", "feet"}, "c");
  const auto d = digest({"--timestamps"}, "d");
  EXPECT_EQ(a.at("config_digest"), b.at("config_digest"));
  EXPECT_EQ(slurp(root / "a" / "manifest.json"), slurp(root / "b" / "manifest.json"));
  EXPECT_NE(a.at("config_digest"), c.at("config_digest"));
  EXPECT_TRUE(d.at("started").is_string());
  EXPECT_TRUE(d.at("finished").is_string());
}

TEST(Cli, Sha256KnownVector) {
  EXPECT_EQ(cavstab::cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
