#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cagemap/cli.hpp"
#include "cagemap/datastore.hpp"
#include "cagemap/tuning.hpp"
#include "coast.hpp"

using namespace cagemap;
using cagemap::test::Coast;

namespace {

fs::path scratch() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = fs::temp_directory_path() / "cagemap_cli" / (std::string(info->test_suite_name()) + "_" + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "cagemap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Cli, EstimateOnDegenerateCoast) {
  const auto dir = scratch();
  const auto config = Coast::make().write(dir, 50).string();
  const auto r = run({"estimate", "--config", config});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = read_json(dir / "out" / "tonnage.json");
  double total = 0.0;
  for (const auto& p : doc["periods"]) {
    total += p["mean"].get<double>();
    EXPECT_EQ(p["sd"].get<double>(), 0.0);
  }
  EXPECT_NEAR(total, 3 * Coast::farm_tonnage(6), 1e-9 * total);
  EXPECT_TRUE(fs::exists(dir / "out" / "replicates.f64"));
  EXPECT_TRUE(fs::exists(dir / "out" / "estimate.manifest.json"));
  const auto m = load_verified_manifest(dir / "out" / "estimate.manifest.json");
  EXPECT_EQ(m.command, "estimate");
  EXPECT_EQ(m.run_id, doc["run_id"]);
  EXPECT_FALSE(m.input_digests.empty());
}

TEST(Cli, ClusterFindsThePlantedFarms) {
  const auto dir = scratch();
  const auto config = Coast::make().write(dir).string();
  const auto r = run({"cluster", "--config", config});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = read_json(dir / "out" / "clusters.json");
  ASSERT_EQ(doc["clusters"].size(), 3u);
  for (const auto& c : doc["clusters"]) EXPECT_EQ(c["size"], 6);
}

TEST(Cli, FlagOverridesConfig) {
  const auto dir = scratch();
  const auto config = Coast::make().write(dir).string();
  // Lower threshold lets the low-score line (8 cages, 35 m apart) through.
  const auto r = run({"cluster", "--config", config, "--score-threshold", "0.4", "--out", (dir / "o2").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(dir / "o2" / "clusters.json")["clusters"].size(), 4u);
  const auto m = read_json(dir / "o2" / "cluster.manifest.json");
  EXPECT_EQ(m["config"]["params"]["score_threshold"], 0.4);
}

TEST(Cli, TuneAgreesWithTheLibrary) {
  const auto dir = scratch();
  const Coast coast = Coast::make();
  const auto config_path = coast.write(dir);
  auto cfg = read_json(config_path);
  cfg["grid"] = {{"score_thresholds", {0.4, 0.785, 0.95}},
                 {"distance_thresholds", {30, 50}},
                 {"min_cluster_sizes", {1, 4, 5}}};
  cfg["folds"] = 3;
  write_json(config_path, cfg);
  const auto r = run({"tune", "--config", config_path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = read_json(dir / "out" / "tuning.json");

  std::vector<Detection> ocean;
  for (const auto& d : coast.predictions) {
    if (d.box.min_y > 0) ocean.push_back(d);
  }
  ParamGrid grid;
  grid.score_thresholds = {0.4, 0.785, 0.95};
  grid.distance_thresholds = {30, 50};
  grid.min_cluster_sizes = {1, 4, 5};
  const auto direct = grid_search(ocean, coast.labels, grid, 3, Objective::product, 5);
  EXPECT_EQ(doc["best"]["score_threshold"], direct.best.score_threshold);
  EXPECT_EQ(doc["best"]["distance_m"], direct.best.distance);
  EXPECT_EQ(doc["best"]["min_cluster_size"], direct.best.min_cluster_size);
  EXPECT_EQ(doc["table"].size(), grid.size() * 3);
}

TEST(Cli, BoundWritesTheCurve) {
  const auto dir = scratch();
  const auto config_path = Coast::make().write(dir);
  auto cfg = read_json(config_path);
  cfg["bound"] = {{"sample_size", 10518}, {"stratum_size", 783355}, {"trials", 2000},
                  {"grid", {{"lo", 1e-5}, {"hi", 1e-4}, {"step", 1e-5}}}};
  write_json(config_path, cfg);
  const auto r = run({"bound", "--config", config_path.string(), "--bound-rule", "smallest_rejected"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = read_json(dir / "out" / "upper_bound.json");
  EXPECT_EQ(doc["rule"], "smallest_rejected");
  EXPECT_EQ(doc["curve"].size(), 10u);
  EXPECT_TRUE(doc["found"].get<bool>());
}

TEST(Cli, ArtifactsAreByteIdenticalAcrossRuns) {
  const auto dir = scratch();
  const auto config = Coast::make().write(dir, 40).string();
  auto s = read_json(dir / "factors.json");
  // Spread factors so the replicate stream matters.
  s["depth_sd_scale"] = 1.0;
  s["species"][0]["stocking_sd"] = 2.0;
  s["species"][0]["harvest_sd"] = 0.1;
  write_json(dir / "factors.json", s);
  for (const char* cmd : {"filter", "cluster", "estimate", "report"}) {
    ASSERT_EQ(run({cmd, "--config", config}).code, 0) << cmd;
  }
  std::map<std::string, std::string> first;
  for (const auto& e : fs::directory_iterator(dir / "out")) {
    if (e.path().string().find("manifest") == std::string::npos) first[e.path().filename()] = slurp(e.path());
  }
  for (const char* cmd : {"filter", "cluster", "estimate", "report"}) {
    ASSERT_EQ(run({cmd, "--config", config}).code, 0) << cmd;
  }
  ASSERT_EQ(first.size(), 7u);  // no FAO series, so no comparison table
  for (const auto& [name, bytes] : first) EXPECT_EQ(slurp(dir / "out" / name), bytes) << name;
  const auto t = read_json(dir / "out" / "tonnage.json");
  EXPECT_GT(t["periods"][0]["sd"].get<double>(), 0.0);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch();
  const auto config = Coast::make().write(dir).string();
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"--version"}).code, 0);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"cluster", "--config", (dir / "missing.json").string()}).code, 2);
  EXPECT_EQ(run({"cluster", "--config", config, "--score-threshold", "3"}).code, 2);

  // Invalid detection file: validation failure.
  auto broken = read_json(dir / "detections.geojson");
  broken["features"][0]["properties"]["score"] = -1;
  write_json(dir / "detections.geojson", broken);
  const auto v = run({"cluster", "--config", config});
  EXPECT_EQ(v.code, 2);
  EXPECT_NE(v.err.find("farm0_0"), std::string::npos) << v.err;

  // Unknown config key.
  auto cfg = read_json(config);
  cfg["colour"] = "blue";
  write_json(dir / "bad.json", cfg);
  EXPECT_EQ(run({"cluster", "--config", (dir / "bad.json").string()}).code, 2);

  // Output directory blocked by a regular file: an internal failure.
  const auto good = scratch() / "g";
  const auto gc = Coast::make().write(good).string();
  std::ofstream(good / "blocker") << "x";
  EXPECT_EQ(run({"cluster", "--config", gc, "--out", (good / "blocker" / "sub").string()}).code, 1);
}

TEST(Cli, ReportCountsTheQueue) {
  const auto dir = scratch();
  const auto config = Coast::make().write(dir).string();
  const auto r = run({"report", "--config", config});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = read_json(dir / "out" / "report.json");
  EXPECT_EQ(doc["burden"]["population_size"], 120);
  EXPECT_EQ(doc["pending_tasks"], doc["burden"]["queue_size"]);
  EXPECT_EQ(doc["reviewed_tasks"], 0);
}
