#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "psopinn/harness.hpp"

using namespace psopinn;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("psopinn_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

RunConfig tiny(const std::string& name) {
  RunConfig c = preset("heat-pso_bp_cd");
  c.name = name;
  c.population = 4;
  c.iterations = 10;
  c.repetitions = 2;
  c.beta = 0.9;
  c.points = {16, 8, 32, 0};
  c.mesh_nx = 16;
  c.mesh_nt = 8;
  c.checkpoints = {0, 10};
  c.output = scratch(name).string();
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

} // namespace

TEST(Config, JsonRoundTrip) {
  for (const std::string& name : preset_names()) {
    const RunConfig c = preset(name);
    EXPECT_NO_THROW(c.validate()) << name;
    EXPECT_EQ(config_from_json(to_json(c)), c) << name;
  }
  RunConfig c = preset("allen-cahn-adam");
  c.max_mean_l2 = 0.3;
  c.problem_parameters = {{"diffusivity", 2e-4}};
  EXPECT_EQ(config_from_json(to_json(c)), c);
}

TEST(Config, UnknownKeysRejected) {
  json j = to_json(preset("heat-pso"));
  j["optimiser"] = "typo";
  EXPECT_THROW(config_from_json(j), std::invalid_argument);
  json k = to_json(preset("heat-pso"));
  k["optimizer"]["gamma"] = 1.0;
  EXPECT_THROW(config_from_json(k), std::invalid_argument);
  json m = to_json(preset("heat-pso"));
  m["optimizer"]["kind"] = "sgd";
  EXPECT_THROW(config_from_json(m), std::invalid_argument);
}

TEST(Config, MissingKeysKeepDefaults) {
  const RunConfig c = config_from_json(json::parse(R"({"problem": "burgers", "population": 7})"));
  EXPECT_EQ(c.problem, "burgers");
  EXPECT_EQ(c.population, 7u);
  EXPECT_EQ(c.iterations, RunConfig{}.iterations);
}

TEST(Config, PresetFilesMatchBuiltins) {
  const std::filesystem::path dir = std::filesystem::path(PSOPINN_SOURCE_DIR) / "presets";
  for (const std::string& name : preset_names()) {
    const auto path = dir / (name + ".json");
    ASSERT_TRUE(std::filesystem::exists(path)) << path;
    EXPECT_EQ(load_config(path), preset(name)) << name;
  }
  EXPECT_THROW(preset("heat-sgd"), std::invalid_argument);
  EXPECT_THROW(preset("nonsense"), std::invalid_argument);
}

TEST(Config, PresetValues) {
  const RunConfig demo = preset("poisson-demo");
  EXPECT_EQ(demo.population, 50u);
  EXPECT_EQ(demo.iterations, 90u);
  EXPECT_EQ(demo.hidden, (std::vector<std::size_t>{10, 10, 10}));
  const RunConfig heat_cd = preset("heat-pso_bp_cd");
  EXPECT_EQ(heat_cd.population, 100u);
  EXPECT_EQ(heat_cd.hidden, (std::vector<std::size_t>{8, 8, 8, 8, 8}));
  EXPECT_DOUBLE_EQ(heat_cd.beta, 0.99);
  EXPECT_DOUBLE_EQ(preset("burgers-pso_bp").c2, 0.05);
  EXPECT_EQ(preset("forced-heat-adam").population, 20u);
  EXPECT_EQ(preset("allen-cahn-pso_bp_cd").points.data, 2000u);
}

TEST(Config, FastTier) {
  const RunConfig f = apply_tier(preset("heat-pso"), Tier::fast);
  EXPECT_EQ(f.population, 20u);
  EXPECT_EQ(f.iterations, 500u);
  EXPECT_EQ(apply_tier(preset("poisson-demo"), Tier::fast), preset("poisson-demo"));
  EXPECT_EQ(apply_tier(preset("heat-pso"), Tier::paper), preset("heat-pso"));
}

TEST(Problems, ById) {
  EXPECT_EQ(make_problem("heat").name, "heat");
  EXPECT_EQ(make_problem("burgers", {{"nu", 0.01}}).parameters.at("nu"), 0.01);
  EXPECT_THROW(make_problem("heat", {{"nu", 0.01}}), std::invalid_argument);
  EXPECT_THROW(make_problem("wave"), std::invalid_argument);
}

TEST(Run, WritesOutputsAndRoundTrips) {
  const RunConfig c = tiny("outputs");
  const RunReport r = run(c);
  ASSERT_EQ(r.repetitions.size(), 2u);
  ASSERT_TRUE(r.mean_l2.has_value()) << r.repetitions[0].error;
  EXPECT_EQ(r.failures, 0u);
  EXPECT_EQ(r.repetitions[1].seed, c.seed + 1);
  EXPECT_EQ(r.repetitions[0].std_trace.size(), 2u);
  EXPECT_LE(*r.min_l2, *r.mean_l2);

  const json j = json::parse(slurp(std::filesystem::path(c.output) / "summary.json"));
  EXPECT_EQ(report_from_json(j), r);
  EXPECT_EQ(report_from_json(to_json(r)), r);

  const auto rep = std::filesystem::path(c.output) / "rep_0";
  std::ifstream pred(rep / "predictions.csv");
  std::string line;
  std::getline(pred, line);
  EXPECT_EQ(line, "x,t,mean,std,best_individual,reference,abs_error");
  std::size_t rows = 0;
  while (std::getline(pred, line)) {
    ++rows;
  }
  EXPECT_EQ(rows, 16u * 8u);
  std::ifstream hist(rep / "loss_history.csv");
  std::getline(hist, line);
  EXPECT_EQ(line, "iteration,mean,min,max,std,c1,c2");
  for (const char* f : {"points_residual.csv", "points_initial.csv", "points_boundary.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(rep / f)) << f;
  }
  std::filesystem::remove_all(c.output);
}

TEST(Run, DeterministicSummary) {
  const RunConfig c = tiny("determinism");
  run(c);
  const std::string first = redact_timing(json::parse(slurp(std::filesystem::path(c.output) / "summary.json"))).dump();
  run(c);
  const std::string second = redact_timing(json::parse(slurp(std::filesystem::path(c.output) / "summary.json"))).dump();
  EXPECT_EQ(first, second);
  std::filesystem::remove_all(c.output);
}

TEST(Run, RedactionOnlyTouchesTiming) {
  json j = {{"created", "2024-01-01"}, {"wall_seconds", 3.5}, {"l2", 0.1},
            {"reps", json::array({{{"wall_seconds", 1.0}, {"seed", 4}}})}};
  const json r = redact_timing(j);
  EXPECT_EQ(r["created"], "");
  EXPECT_EQ(r["wall_seconds"], 0.0);
  EXPECT_EQ(r["reps"][0]["wall_seconds"], 0.0);
  EXPECT_EQ(r["reps"][0]["seed"], 4);
  EXPECT_EQ(r["l2"], 0.1);
}

TEST(Run, AdamBaseline) {
  RunConfig c = tiny("adam");
  c.optimizer = "adam";
  c.alpha = 0.01;
  c.repetitions = 1;
  const RunReport r = run(c, {nullptr, false});
  ASSERT_TRUE(r.repetitions[0].ok) << r.repetitions[0].error;
  EXPECT_FALSE(std::filesystem::exists(c.output));
}

TEST(Run, FailedRepetitionIsRecorded) {
  RunConfig c = tiny("failure");
  c.points = {16, 7, 32, 0}; // cannot be split over two boundary loci
  c.repetitions = 1;
  const RunReport r = run(c, {nullptr, false});
  EXPECT_FALSE(r.repetitions[0].ok);
  EXPECT_FALSE(r.repetitions[0].error.empty());
  EXPECT_EQ(r.failures, 1u);
  EXPECT_FALSE(r.mean_l2.has_value());
}

TEST(Oracle, CachedOnDisk) {
  OracleConfig oc;
  oc.nx = 65;
  oc.slices = 11;
  oc.cache_dir = scratch("oracle").string();
  const PdeProblem p = allen_cahn();
  const auto a = ensure_oracle(p, oc);
  EXPECT_TRUE(std::filesystem::exists(oracle_cache_path(p, oc)));
  const auto b = ensure_oracle(p, oc);
  EXPECT_EQ(a->values, b->values);
  std::filesystem::remove_all(oc.cache_dir);
}

TEST(Sweep, SingleCellEqualsRun) {
  RunConfig c = tiny("sweep_base");
  c.repetitions = 1;
  const RunReport direct = run(c, {nullptr, false});
  const auto root = scratch("sweep");
  const auto cells = sweep(c, SweepGrid{}, root.string(), {nullptr, true});
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].report.mean_l2, direct.mean_l2);
  EXPECT_TRUE(std::filesystem::exists(root / "sweep.csv"));
  std::filesystem::remove_all(root);
}

TEST(Sweep, RankedByMeanL2) {
  RunConfig c = tiny("sweep_rank");
  c.repetitions = 1;
  SweepGrid g;
  g.c1 = {0.0, 0.5};
  g.init = {"glorot", "he"};
  const auto cells = sweep(c, g, scratch("sweep_rank").string(), {nullptr, false});
  ASSERT_EQ(cells.size(), 4u);
  for (std::size_t i = 1; i < cells.size(); ++i) {
    EXPECT_LE(*cells[i - 1].report.mean_l2, *cells[i].report.mean_l2);
  }
  EXPECT_THROW(grid_from_json(json::parse(R"({"gamma": [1]})")), std::invalid_argument);
}

TEST(Table, Format) {
  RunReport r;
  r.repetitions = {{0, 1, true, "", 0.02, 0.0, 0.0, 0.0, 0.0, {}, 0, 0.0},
                   {1, 2, true, "", 0.04, 0.0, 0.0, 0.0, 0.0, {}, 0, 0.0}};
  r.recompute();
  EXPECT_DOUBLE_EQ(*r.mean_l2, 0.03);
  EXPECT_NEAR(*r.std_l2, std::sqrt(2e-4), 1e-15);
  EXPECT_EQ(format_l2(r), "0.0300 ± 0.0141 (0.0200)");
  const std::string t = format_table({{"heat", "pso", r}, {"heat", "pso_bp", r}});
  EXPECT_NE(t.find("heat"), std::string::npos);
}
