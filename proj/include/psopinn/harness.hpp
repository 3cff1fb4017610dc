#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <locale>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "psopinn/ensemble.hpp"
#include "psopinn/optim.hpp"
#include "psopinn/oracle.hpp"
#include "psopinn/pde.hpp"
#include "psopinn/sampling.hpp"

namespace psopinn {

using json = nlohmann::ordered_json;

/// Grid oracle settings for problems whose reference is computed.
struct OracleConfig {
  std::size_t nx = 4097;
  std::size_t slices = 1001;
  std::string cache_dir = "oracle_cache";

  friend bool operator==(const OracleConfig&, const OracleConfig&) = default;
};

/// Everything needed to reproduce one experiment. See README for the JSON schema.
struct RunConfig {
  std::string name = "run";
  std::string problem = "heat";
  std::map<std::string, double> problem_parameters;
  std::vector<std::size_t> hidden{8, 8, 8, 8, 8};
  std::string init = "glorot";
  /// pso, pso_bp, pso_bp_cd or adam
  std::string optimizer = "pso_bp_cd";
  double alpha = 0.005;
  double beta = 0.99;
  double c1 = 0.08;
  double c2 = 0.5;
  std::size_t iterations = 2000;
  std::string decay_rule = "eq";
  bool per_coordinate_r = false;
  bool plain_gradient = false;
  double adam_beta1 = 0.99;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::string aggregate = "positions";
  std::size_t population = 100;
  PointCounts points{1024, 512, 1000, 0};
  std::uint64_t seed = 1;
  std::size_t repetitions = 10;
  std::string output = "runs/run";
  std::size_t mesh_nx = 256;
  std::size_t mesh_nt = 100;
  OracleConfig oracle;
  /// Iterations at which the spatially averaged ensemble std is recorded.
  std::vector<std::size_t> checkpoints;
  bool write_points = true;
  /// Optional acceptance bound on the mean L2 error; exceeded -> exit code 2.
  std::optional<double> max_mean_l2;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  [[nodiscard]] bool is_adam() const { return optimizer == "adam"; }

  void validate() const {
    if (!is_adam()) {
      (void)parse_variant(optimizer);
      to_hyperparams().validate();
    } else if (!(alpha > 0.0) || iterations == 0) {
      throw std::invalid_argument("config '" + name + "': adam needs alpha > 0 and iterations >= 1");
    }
    (void)parse_decay_rule(decay_rule);
    (void)InitScheme::parse(init);
    if (aggregate != "positions" && aggregate != "personal_bests") {
      throw std::invalid_argument("config '" + name + "': aggregate must be positions or personal_bests");
    }
    if (population == 0) {
      throw std::invalid_argument("config '" + name + "': population must be >= 1");
    }
    if (repetitions == 0) {
      throw std::invalid_argument("config '" + name + "': repetitions must be >= 1");
    }
    if (points.residual == 0) {
      throw std::invalid_argument("config '" + name + "': need at least one residual point");
    }
  }

  [[nodiscard]] PsoHyperparams to_hyperparams() const {
    PsoHyperparams hp;
    hp.variant = parse_variant(optimizer);
    hp.alpha = alpha;
    hp.beta = beta;
    hp.c1 = c1;
    hp.c2 = c2;
    hp.iterations = iterations;
    hp.decay_rule = parse_decay_rule(decay_rule);
    hp.per_coordinate_r = per_coordinate_r;
    hp.plain_gradient = plain_gradient;
    hp.adam_beta1 = adam_beta1;
    hp.adam_beta2 = adam_beta2;
    hp.adam_eps = adam_eps;
    return hp;
  }

  [[nodiscard]] AdamHyperparams to_adam() const { return {alpha, adam_beta1, adam_beta2, adam_eps, iterations}; }
};

inline json to_json(const RunConfig& c) {
  json j;
  j["name"] = c.name;
  j["problem"] = {{"id", c.problem}, {"parameters", c.problem_parameters}};
  j["network"] = {{"hidden", c.hidden}, {"activation", "tanh"}, {"init", c.init}};
  j["optimizer"] = {{"kind", c.optimizer},
                    {"alpha", c.alpha},
                    {"beta", c.beta},
                    {"c1", c.c1},
                    {"c2", c.c2},
                    {"iterations", c.iterations},
                    {"decay_rule", c.decay_rule},
                    {"per_coordinate_r", c.per_coordinate_r},
                    {"plain_gradient", c.plain_gradient},
                    {"adam_beta1", c.adam_beta1},
                    {"adam_beta2", c.adam_beta2},
                    {"adam_eps", c.adam_eps}};
  j["population"] = c.population;
  j["points"] = {{"initial", c.points.initial},
                 {"boundary", c.points.boundary},
                 {"residual", c.points.residual},
                 {"data", c.points.data}};
  j["seed"] = c.seed;
  j["repetitions"] = c.repetitions;
  j["output"] = c.output;
  j["test_mesh"] = {{"nx", c.mesh_nx}, {"nt", c.mesh_nt}};
  j["aggregate"] = c.aggregate;
  j["oracle"] = {{"nx", c.oracle.nx}, {"slices", c.oracle.slices}, {"cache_dir", c.oracle.cache_dir}};
  j["checkpoints"] = c.checkpoints;
  j["write_points"] = c.write_points;
  j["max_mean_l2"] = c.max_mean_l2 ? json(*c.max_mean_l2) : json(nullptr);
  return j;
}

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: '" + where + "' must be an object");
  }
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

} // namespace detail

/// Reads a config; missing keys keep their defaults, unknown keys are errors.
inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  detail::reject_unknown(j,
                         {"name", "problem", "network", "optimizer", "population", "points", "seed", "repetitions",
                          "output", "test_mesh", "aggregate", "oracle", "checkpoints", "write_points", "max_mean_l2"},
                         "config");
  detail::read(j, "name", c.name);
  if (j.contains("problem")) {
    const json& p = j.at("problem");
    if (p.is_string()) {
      c.problem = p.get<std::string>();
    } else {
      detail::reject_unknown(p, {"id", "parameters"}, "problem");
      detail::read(p, "id", c.problem);
      detail::read(p, "parameters", c.problem_parameters);
    }
  }
  if (j.contains("network")) {
    const json& n = j.at("network");
    detail::reject_unknown(n, {"hidden", "activation", "init"}, "network");
    detail::read(n, "hidden", c.hidden);
    detail::read(n, "init", c.init);
    if (n.contains("activation") && n.at("activation") != "tanh") {
      throw std::invalid_argument("config: only tanh activation is supported");
    }
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    detail::reject_unknown(o,
                           {"kind", "alpha", "beta", "c1", "c2", "iterations", "decay_rule", "per_coordinate_r",
                            "plain_gradient", "adam_beta1", "adam_beta2", "adam_eps"},
                           "optimizer");
    detail::read(o, "kind", c.optimizer);
    detail::read(o, "alpha", c.alpha);
    detail::read(o, "beta", c.beta);
    detail::read(o, "c1", c.c1);
    detail::read(o, "c2", c.c2);
    detail::read(o, "iterations", c.iterations);
    detail::read(o, "decay_rule", c.decay_rule);
    detail::read(o, "per_coordinate_r", c.per_coordinate_r);
    detail::read(o, "plain_gradient", c.plain_gradient);
    detail::read(o, "adam_beta1", c.adam_beta1);
    detail::read(o, "adam_beta2", c.adam_beta2);
    detail::read(o, "adam_eps", c.adam_eps);
  }
  detail::read(j, "population", c.population);
  if (j.contains("points")) {
    const json& p = j.at("points");
    detail::reject_unknown(p, {"initial", "boundary", "residual", "data"}, "points");
    detail::read(p, "initial", c.points.initial);
    detail::read(p, "boundary", c.points.boundary);
    detail::read(p, "residual", c.points.residual);
    detail::read(p, "data", c.points.data);
  }
  detail::read(j, "seed", c.seed);
  detail::read(j, "repetitions", c.repetitions);
  detail::read(j, "output", c.output);
  if (j.contains("test_mesh")) {
    const json& m = j.at("test_mesh");
    detail::reject_unknown(m, {"nx", "nt"}, "test_mesh");
    detail::read(m, "nx", c.mesh_nx);
    detail::read(m, "nt", c.mesh_nt);
  }
  detail::read(j, "aggregate", c.aggregate);
  if (j.contains("oracle")) {
    const json& o = j.at("oracle");
    detail::reject_unknown(o, {"nx", "slices", "cache_dir"}, "oracle");
    detail::read(o, "nx", c.oracle.nx);
    detail::read(o, "slices", c.oracle.slices);
    detail::read(o, "cache_dir", c.oracle.cache_dir);
  }
  detail::read(j, "checkpoints", c.checkpoints);
  detail::read(j, "write_points", c.write_points);
  if (j.contains("max_mean_l2") && !j.at("max_mean_l2").is_null()) {
    c.max_mean_l2 = j.at("max_mean_l2").get<double>();
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config " + path.string());
  }
  try {
    return config_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
}

/// Problem constructor by id; unknown parameter names are rejected.
inline PdeProblem make_problem(const std::string& id, const std::map<std::string, double>& params = {}) {
  auto take = [&](std::set<std::string> allowed) {
    for (const auto& [k, _] : params) {
      if (!allowed.contains(k)) {
        throw std::invalid_argument("problem '" + id + "' has no parameter '" + k + "'");
      }
    }
  };
  auto get = [&](const std::string& k, double fallback) {
    const auto it = params.find(k);
    return it == params.end() ? fallback : it->second;
  };
  if (id == "poisson") {
    take({});
    return poisson();
  }
  if (id == "advection") {
    take({"speed", "q_left", "q_right", "front", "length", "t_end"});
    AdvectionParams a;
    a.speed = get("speed", a.speed);
    a.q_left = get("q_left", a.q_left);
    a.q_right = get("q_right", a.q_right);
    a.front = get("front", a.front);
    a.length = get("length", a.length);
    a.t_end = get("t_end", a.t_end);
    return advection(a);
  }
  if (id == "heat") {
    take({"alpha", "length"});
    return heat(get("alpha", 1.0 / (pi * pi)), get("length", 1.0));
  }
  if (id == "burgers") {
    take({"nu"});
    return burgers(get("nu", 0.02 / pi));
  }
  if (id == "forced-heat") {
    take({});
    return forced_heat();
  }
  if (id == "allen-cahn") {
    take({"diffusivity", "data_points"});
    return allen_cahn(get("diffusivity", 1e-4), static_cast<std::size_t>(get("data_points", 2000)));
  }
  throw std::invalid_argument("unknown problem '" + id +
                              "' (poisson, advection, heat, burgers, forced-heat, allen-cahn)");
}

inline std::filesystem::path oracle_cache_path(const PdeProblem& problem, const OracleConfig& oc) {
  return std::filesystem::path(oc.cache_dir) /
         (problem.key() + "_nx" + std::to_string(oc.nx) + "_s" + std::to_string(oc.slices) + ".grid");
}

/// Loads the grid oracle from the cache or computes and stores it.
inline std::shared_ptr<const GridOracle> ensure_oracle(const PdeProblem& problem, const OracleConfig& oc,
                                                       std::ostream* log = nullptr) {
  const auto path = oracle_cache_path(problem, oc);
  if (std::filesystem::exists(path)) {
    auto grid = std::make_shared<GridOracle>(load_grid(path));
    if (grid->problem_key != problem.key()) {
      throw std::runtime_error("oracle cache " + path.string() + " belongs to '" + grid->problem_key + "'");
    }
    return grid;
  }
  if (log != nullptr) {
    *log << "computing grid oracle for " << problem.key() << " (nx=" << oc.nx << ")\n";
  }
  FdOptions opts;
  opts.max_slices = oc.slices;
  auto grid = std::make_shared<GridOracle>(
      fd_oracle(problem, oc.nx, stable_step_count(problem, oc.nx, oc.slices - 1), opts));
  save_grid(*grid, path);
  if (log != nullptr) {
    *log << "  refinement estimate " << grid->refinement_estimate << ", cached at " << path.string() << "\n";
  }
  return grid;
}

/// The problem of a config with its reference ready (grid oracle attached if needed).
inline PdeProblem prepare_problem(const RunConfig& c, std::ostream* log = nullptr) {
  PdeProblem p = make_problem(c.problem, c.problem_parameters);
  if (p.reference.kind == ReferenceKind::grid_oracle && !p.reference.ready()) {
    attach_oracle(p, ensure_oracle(p, c.oracle, log));
  }
  return p;
}

struct RepetitionRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double l2_error = 0.0;
  double best_l2_error = 0.0;
  double g_best_loss = 0.0;
  double final_mean_loss = 0.0;
  double mean_std = 0.0;
  std::vector<std::pair<std::size_t, double>> std_trace;
  std::size_t rejected_moves = 0;
  double wall_seconds = 0.0;

  friend bool operator==(const RepetitionRecord&, const RepetitionRecord&) = default;
};

struct RunReport {
  RunConfig config;
  std::vector<RepetitionRecord> repetitions;
  std::optional<double> mean_l2;
  std::optional<double> std_l2;
  std::optional<double> min_l2;
  std::size_t failures = 0;
  double wall_seconds = 0.0;
  std::string created;
  std::string rng_algorithm{RandomStream::algorithm};

  friend bool operator==(const RunReport&, const RunReport&) = default;

  /// Recomputes mean, sample std and min over the successful repetitions.
  void recompute() {
    std::vector<double> v;
    failures = 0;
    for (const RepetitionRecord& r : repetitions) {
      if (r.ok) {
        v.push_back(r.l2_error);
      } else {
        ++failures;
      }
    }
    mean_l2.reset();
    std_l2.reset();
    min_l2.reset();
    if (v.empty()) {
      return;
    }
    double sum = 0.0;
    for (const double x : v) {
      sum += x;
    }
    const double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (const double x : v) {
      ss += (x - mean) * (x - mean);
    }
    mean_l2 = mean;
    std_l2 = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    min_l2 = *std::min_element(v.begin(), v.end());
  }
};

namespace detail {

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::optional<double> optional_double(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) {
    return std::nullopt;
  }
  return j.at(key).get<double>();
}

} // namespace detail

inline json to_json(const RunReport& r) {
  json j;
  j["format"] = "psopinn-summary 1";
  j["created"] = r.created;
  j["config"] = to_json(r.config);
  j["rng"] = {{"algorithm", r.rng_algorithm},
              {"seed", r.config.seed},
              {"repetition_seeds", "seed + repetition index"},
              {"streams",
               {{"residual_points", streams::residual_points},
                {"data_points", streams::data_points},
                {"init", "init_base + particle"},
                {"init_base", streams::init_base},
                {"velocity", "velocity_base + particle"},
                {"velocity_base", streams::velocity_base}}}};
  json reps = json::array();
  for (const RepetitionRecord& rec : r.repetitions) {
    json t = json::array();
    for (const auto& [it, s] : rec.std_trace) {
      t.push_back({it, s});
    }
    reps.push_back({{"index", rec.index},
                    {"seed", rec.seed},
                    {"ok", rec.ok},
                    {"error", rec.error},
                    {"l2_error", rec.l2_error},
                    {"best_individual_l2_error", rec.best_l2_error},
                    {"g_best_loss", rec.g_best_loss},
                    {"final_mean_loss", rec.final_mean_loss},
                    {"mean_ensemble_std", rec.mean_std},
                    {"std_trace", t},
                    {"rejected_moves", rec.rejected_moves},
                    {"wall_seconds", rec.wall_seconds}});
  }
  j["repetitions"] = reps;
  j["l2_error"] = {{"mean", detail::optional_json(r.mean_l2)},
                   {"std", detail::optional_json(r.std_l2)},
                   {"min", detail::optional_json(r.min_l2)},
                   {"failures", r.failures}};
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

inline RunReport report_from_json(const json& j) {
  if (j.value("format", "") != "psopinn-summary 1") {
    throw std::invalid_argument("not a psopinn summary");
  }
  RunReport r;
  r.created = j.at("created").get<std::string>();
  r.config = config_from_json(j.at("config"));
  r.rng_algorithm = j.at("rng").at("algorithm").get<std::string>();
  for (const json& e : j.at("repetitions")) {
    RepetitionRecord rec;
    rec.index = e.at("index").get<std::size_t>();
    rec.seed = e.at("seed").get<std::uint64_t>();
    rec.ok = e.at("ok").get<bool>();
    rec.error = e.at("error").get<std::string>();
    rec.l2_error = e.at("l2_error").get<double>();
    rec.best_l2_error = e.at("best_individual_l2_error").get<double>();
    rec.g_best_loss = e.at("g_best_loss").get<double>();
    rec.final_mean_loss = e.at("final_mean_loss").get<double>();
    rec.mean_std = e.at("mean_ensemble_std").get<double>();
    for (const json& t : e.at("std_trace")) {
      rec.std_trace.emplace_back(t.at(0).get<std::size_t>(), t.at(1).get<double>());
    }
    rec.rejected_moves = e.at("rejected_moves").get<std::size_t>();
    rec.wall_seconds = e.at("wall_seconds").get<double>();
    r.repetitions.push_back(std::move(rec));
  }
  const json& l2 = j.at("l2_error");
  r.mean_l2 = detail::optional_double(l2, "mean");
  r.std_l2 = detail::optional_double(l2, "std");
  r.min_l2 = detail::optional_double(l2, "min");
  r.failures = l2.at("failures").get<std::size_t>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

/// Blanks the fields that legitimately differ between identical runs
/// (creation time and wall-clock durations).
inline json redact_timing(json j) {
  if (j.is_object()) {
    for (auto& [key, value] : j.items()) {
      if (key == "created") {
        value = "";
      } else if (key == "wall_seconds") {
        value = 0.0;
      } else {
        value = redact_timing(value);
      }
    }
  } else if (j.is_array()) {
    for (auto& value : j) {
      value = redact_timing(value);
    }
  }
  return j;
}

namespace detail {

inline std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out.imbue(std::locale::classic());
  out.precision(17);
  return out;
}

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace detail

inline void write_predictions_csv(const PdeProblem& problem, const EnsemblePrediction& pred, const Vector& reference,
                                  const std::filesystem::path& path) {
  auto out = detail::open_csv(path);
  for (std::size_t d = 0; d < problem.dims(); ++d) {
    out << problem.coord_names[d] << ",";
  }
  out << "mean,std,best_individual,reference,abs_error\n";
  const Vector sd = pred.std_dev();
  for (Eigen::Index k = 0; k < pred.mesh.cols(); ++k) {
    for (Eigen::Index d = 0; d < pred.mesh.rows(); ++d) {
      out << pred.mesh(d, k) << ",";
    }
    out << pred.mean[k] << "," << sd[k] << "," << pred.best_values[k] << "," << reference[k] << ","
        << std::abs(pred.mean[k] - reference[k]) << "\n";
  }
}

inline void write_history_csv(const std::vector<HistoryRow>& history, const std::filesystem::path& path) {
  auto out = detail::open_csv(path);
  out << "iteration,mean,min,max,std,c1,c2\n";
  for (const HistoryRow& r : history) {
    out << r.iteration << "," << r.mean << "," << r.min << "," << r.max << "," << r.std << "," << r.c1 << ","
        << r.c2 << "\n";
  }
}

struct RunOptions {
  std::ostream* log = nullptr;
  /// Write per-repetition CSV files and summary.json under config.output.
  bool write_files = true;
};

/// Trains one repetition and fills its record. Throws on failure.
inline RepetitionRecord run_repetition(const RunConfig& c, const PdeProblem& problem, const Matrix& mesh,
                                       const Vector& reference, std::size_t index, const RunOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  RepetitionRecord rec;
  rec.index = index;
  rec.seed = c.seed + index;
  Architecture arch{problem.dims(), c.hidden, 1, Activation::tanh};
  arch.validate();
  const PointSets sets = make_point_sets(problem, c.points, rec.seed);
  const PinnLoss loss(problem, sets, arch);
  const InitScheme init = InitScheme::parse(c.init);
  const Aggregate which = c.aggregate == "positions" ? Aggregate::positions : Aggregate::personal_bests;

  std::vector<std::size_t> checkpoints = c.checkpoints;
  auto on_iteration = [&](const SwarmState& s) {
    if (std::find(checkpoints.begin(), checkpoints.end(), s.iteration) != checkpoints.end()) {
      const EnsemblePrediction p = predict(s, arch, mesh, which);
      rec.std_trace.emplace_back(s.iteration, p.std_dev().mean());
    }
  };
  TrainResult result = c.is_adam() ? train_adam_ensemble(loss, init, c.to_adam(), c.population, rec.seed, on_iteration)
                                   : train_swarm(loss, init, c.to_hyperparams(), c.population, rec.seed, on_iteration);
  const EnsemblePrediction pred = predict(result.swarm, arch, mesh, which);
  if (opts.log != nullptr) {
    for (const std::string& w : pred.warnings) {
      *opts.log << "warning: " << w << "\n";
    }
  }
  rec.l2_error = l2_error(pred.mean, reference);
  rec.best_l2_error = l2_error(pred.best_values, reference);
  rec.g_best_loss = result.swarm.g_best_loss;
  rec.final_mean_loss = result.history.back().mean;
  rec.mean_std = pred.std_dev().mean();
  rec.rejected_moves = result.events.size();
  if (!std::isfinite(rec.l2_error)) {
    throw NonFiniteError("ensemble prediction", "L2 error " + std::to_string(rec.l2_error));
  }
  if (opts.write_files) {
    const std::filesystem::path dir = std::filesystem::path(c.output) / ("rep_" + std::to_string(index));
    std::filesystem::create_directories(dir);
    write_predictions_csv(problem, pred, reference, dir / "predictions.csv");
    write_history_csv(result.history, dir / "loss_history.csv");
    if (c.write_points) {
      write_points_csv(problem, sets, dir);
    }
    if (!result.events.empty()) {
      auto ev = detail::open_csv(dir / "events.csv");
      ev << "iteration,particle,message\n";
      for (const TrainEvent& e : result.events) {
        ev << e.iteration << "," << e.particle << ",\"" << e.message << "\"\n";
      }
    }
  }
  rec.ok = true;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

/// Runs every repetition (seeds seed + 0 .. seed + reps - 1). A repetition
/// that throws is recorded as failed and the remaining ones still run.
inline RunReport run(const RunConfig& config, const RunOptions& opts = {}) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  report.config = config;
  report.created = detail::utc_now();
  const PdeProblem problem = prepare_problem(config, opts.log);
  const Matrix mesh = make_test_mesh(problem, config.mesh_nx, config.mesh_nt);
  const Vector reference = reference_values(problem, mesh);
  for (std::size_t k = 0; k < config.repetitions; ++k) {
    RepetitionRecord rec;
    try {
      rec = run_repetition(config, problem, mesh, reference, k, opts);
    } catch (const std::exception& e) {
      rec = RepetitionRecord{};
      rec.index = k;
      rec.seed = config.seed + k;
      rec.ok = false;
      rec.error = e.what();
    }
    if (opts.log != nullptr) {
      *opts.log << config.name << " rep " << k << " (seed " << rec.seed << "): ";
      if (rec.ok) {
        *opts.log << "L2 " << rec.l2_error << ", best individual " << rec.best_l2_error << ", g_best loss "
                  << rec.g_best_loss << " [" << std::fixed << std::setprecision(1) << rec.wall_seconds << " s]"
                  << std::defaultfloat << std::setprecision(6) << "\n";
      } else {
        *opts.log << "FAILED: " << rec.error << "\n";
      }
    }
    report.repetitions.push_back(std::move(rec));
  }
  report.recompute();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (opts.write_files) {
    std::filesystem::create_directories(config.output);
    std::ofstream out(std::filesystem::path(config.output) / "summary.json");
    out << to_json(report).dump(2) << "\n";
  }
  return report;
}

// ---- presets -------------------------------------------------------------

enum class Tier { paper, fast };

inline Tier parse_tier(const std::string& s) {
  if (s == "paper") {
    return Tier::paper;
  }
  if (s == "fast") {
    return Tier::fast;
  }
  throw std::invalid_argument("unknown tier '" + s + "' (paper, fast)");
}

/// Reduced scale used for quick checks: at most 20 particles, 500 iterations.
/// Configs that already run 500 iterations or fewer are left alone.
inline RunConfig apply_tier(RunConfig c, Tier tier) {
  if (tier == Tier::fast && c.iterations > 500) {
    c.population = std::min<std::size_t>(c.population, 20);
    c.iterations = std::min<std::size_t>(c.iterations, 500);
    c.name += "-fast";
    c.output += "-fast";
  }
  return c;
}

/// Built-in experiment presets; the files under presets/ mirror these.
inline std::vector<std::string> preset_names() {
  return {"poisson-demo",
          "advection-pso",
          "advection-pso_bp",
          "advection-pso_bp_cd",
          "heat-pso",
          "heat-pso_bp",
          "heat-pso_bp_cd",
          "burgers-pso",
          "burgers-pso_bp",
          "burgers-pso_bp_cd",
          "forced-heat-pso_bp_cd",
          "forced-heat-adam",
          "allen-cahn-pso_bp_cd",
          "allen-cahn-adam"};
}

inline RunConfig preset(const std::string& name) {
  RunConfig c;
  c.name = name;
  c.output = "runs/" + name;
  if (name == "poisson-demo") {
    c.problem = "poisson";
    c.hidden = {10, 10, 10};
    c.init = "uniform";
    c.optimizer = "pso_bp_cd";
    c.alpha = 0.005;
    c.beta = 0.9;
    c.c1 = 0.08;
    c.c2 = 0.5;
    c.iterations = 90;
    c.population = 50;
    c.points = {0, 2, 1000, 0};
    c.repetitions = 1;
    c.checkpoints = {0, 90};
    return c;
  }
  const auto dash = name.rfind('-');
  if (dash == std::string::npos) {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  const std::string problem = name.substr(0, dash);
  const std::string variant = name.substr(dash + 1);
  c.problem = problem;
  c.optimizer = variant;
  c.hidden = {8, 8, 8, 8, 8};
  c.init = "glorot";
  c.iterations = 2000;
  c.repetitions = 10;
  if (problem == "advection" || problem == "heat" || problem == "burgers") {
    c.population = 100;
    c.points = {1024, 512, 1000, 0};
    if (variant == "pso") {
      c.beta = 0.9;
      c.c1 = 0.8;
      c.c2 = 0.5;
    } else if (variant == "pso_bp" || variant == "pso_bp_cd") {
      if (problem == "burgers") {
        c.alpha = 0.001;
        c.beta = 0.9;
        c.c1 = 0.08;
        c.c2 = 0.05;
      } else {
        c.alpha = 0.005;
        c.beta = 0.99;
        c.c1 = 0.08;
        c.c2 = 0.5;
      }
    } else {
      throw std::invalid_argument("unknown preset '" + name + "'");
    }
    return c;
  }
  if (problem == "forced-heat" || problem == "allen-cahn") {
    if (problem == "forced-heat") {
      c.population = 20;
      c.points = {1024, 512, 512, 0};
    } else {
      c.population = 100;
      c.points = {256, 400, 2000, 2000};
    }
    if (variant == "pso_bp_cd") {
      c.alpha = 0.005;
      c.beta = 0.99;
      c.c1 = 0.08;
      c.c2 = 0.5;
    } else if (variant == "adam") {
      c.alpha = 0.001;
      c.adam_beta1 = 0.99;
      c.adam_beta2 = 0.999;
      c.beta = 0.0;
      c.c1 = 0.0;
      c.c2 = 0.0;
    } else {
      throw std::invalid_argument("unknown preset '" + name + "'");
    }
    return c;
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

// ---- table and sweep ------------------------------------------------------

struct TableRow {
  std::string problem;
  std::string variant;
  RunReport report;
};

inline std::string format_l2(const RunReport& r) {
  if (!r.mean_l2) {
    return "all repetitions failed";
  }
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << std::fixed << std::setprecision(4) << *r.mean_l2 << " ± " << *r.std_l2 << " (" << *r.min_l2 << ")";
  if (r.failures > 0) {
    out << " [" << r.failures << " failed]";
  }
  return out.str();
}

inline std::string format_table(const std::vector<TableRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "Problem" << std::setw(12) << "Variant"
      << "L2 error: mean ± std (min)\n";
  std::string last;
  for (const TableRow& r : rows) {
    out << std::setw(12) << (r.problem == last ? "" : r.problem) << std::setw(12) << r.variant << format_l2(r.report)
        << "\n";
    last = r.problem;
  }
  return out.str();
}

/// Problem x variant grid of fresh runs in the layout of the variant table.
inline std::vector<TableRow> benchmark_table(const std::vector<std::string>& problems,
                                             const std::vector<std::string>& variants, std::size_t reps,
                                             std::uint64_t seed, Tier tier = Tier::paper,
                                             const std::string& output_root = "runs/table",
                                             const RunOptions& opts = {}) {
  if (reps == 0) {
    throw std::invalid_argument("benchmark_table: need at least one repetition");
  }
  std::vector<TableRow> rows;
  for (const std::string& p : problems) {
    for (const std::string& v : variants) {
      RunConfig c = apply_tier(preset(p + "-" + v), tier);
      c.repetitions = reps;
      c.seed = seed;
      c.output = (std::filesystem::path(output_root) / c.name).string();
      rows.push_back({p, v, run(c, opts)});
    }
  }
  return rows;
}

/// Cartesian grid over alpha, beta, c1, c2 and init. Axes not listed keep the base value.
struct SweepGrid {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> c1;
  std::vector<double> c2;
  std::vector<std::string> init;
};

inline SweepGrid grid_from_json(const json& j) {
  detail::reject_unknown(j, {"alpha", "beta", "c1", "c2", "init"}, "grid");
  SweepGrid g;
  detail::read(j, "alpha", g.alpha);
  detail::read(j, "beta", g.beta);
  detail::read(j, "c1", g.c1);
  detail::read(j, "c2", g.c2);
  detail::read(j, "init", g.init);
  return g;
}

struct SweepCell {
  std::size_t index = 0;
  RunConfig config;
  RunReport report;
};

/// Runs every cell with the base seed and repetitions, ranked by mean L2
/// (failed cells last). Writes sweep.csv under `output_root`.
inline std::vector<SweepCell> sweep(const RunConfig& base, const SweepGrid& grid, const std::string& output_root,
                                    const RunOptions& opts = {}) {
  auto axis = [](const std::vector<double>& v, double fallback) {
    return v.empty() ? std::vector<double>{fallback} : v;
  };
  const auto alphas = axis(grid.alpha, base.alpha);
  const auto betas = axis(grid.beta, base.beta);
  const auto c1s = axis(grid.c1, base.c1);
  const auto c2s = axis(grid.c2, base.c2);
  const auto inits = grid.init.empty() ? std::vector<std::string>{base.init} : grid.init;
  std::vector<SweepCell> cells;
  for (const double a : alphas) {
    for (const double b : betas) {
      for (const double x1 : c1s) {
        for (const double x2 : c2s) {
          for (const std::string& in : inits) {
            SweepCell cell;
            cell.index = cells.size();
            cell.config = base;
            cell.config.alpha = a;
            cell.config.beta = b;
            cell.config.c1 = x1;
            cell.config.c2 = x2;
            cell.config.init = in;
            cell.config.name = base.name + "-cell" + std::to_string(cell.index);
            cell.config.output = (std::filesystem::path(output_root) / ("cell_" + std::to_string(cell.index))).string();
            cell.config.validate();
            cells.push_back(std::move(cell));
          }
        }
      }
    }
  }
  for (SweepCell& cell : cells) {
    cell.report = run(cell.config, opts);
  }
  std::stable_sort(cells.begin(), cells.end(), [](const SweepCell& a, const SweepCell& b) {
    if (a.report.mean_l2.has_value() != b.report.mean_l2.has_value()) {
      return a.report.mean_l2.has_value();
    }
    return a.report.mean_l2.value_or(0.0) < b.report.mean_l2.value_or(0.0);
  });
  if (opts.write_files) {
    std::filesystem::create_directories(output_root);
    auto out = detail::open_csv(std::filesystem::path(output_root) / "sweep.csv");
    out << "rank,cell,alpha,beta,c1,c2,init,mean_l2,std_l2,min_l2,failures\n";
    for (std::size_t r = 0; r < cells.size(); ++r) {
      const SweepCell& s = cells[r];
      out << r + 1 << "," << s.index << "," << s.config.alpha << "," << s.config.beta << "," << s.config.c1 << ","
          << s.config.c2 << "," << s.config.init << ",";
      if (s.report.mean_l2) {
        out << *s.report.mean_l2 << "," << *s.report.std_l2 << "," << *s.report.min_l2;
      } else {
        out << ",,";
      }
      out << "," << s.report.failures << "\n";
    }
  }
  return cells;
}

} // namespace psopinn
