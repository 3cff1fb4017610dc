#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psopinn/acceptance.hpp"
#include "psopinn/psopinn.hpp"

using namespace psopinn;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kToleranceFailure = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::optional<std::string> out;
  std::optional<std::string> decay_rule;
  std::optional<std::string> tier;
  std::optional<std::string> oracle_cache;

  void attach(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "base seed (repetition k uses seed + k)");
    cmd->add_option("--reps", reps, "number of repetitions");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--decay-rule", decay_rule, "coefficient decay: eq (c *= 1 - 2/n) or alg")
        ->check(CLI::IsMember({"eq", "alg"}));
    cmd->add_option("--tier", tier, "paper (full scale) or fast (20 particles, 500 iterations)")
        ->check(CLI::IsMember({"paper", "fast"}));
    cmd->add_option("--oracle-cache", oracle_cache, "directory for cached grid oracles");
  }

  RunConfig apply(RunConfig c) const {
    if (tier) {
      c = apply_tier(c, parse_tier(*tier));
    }
    if (seed) {
      c.seed = *seed;
    }
    if (reps) {
      c.repetitions = *reps;
    }
    if (out) {
      c.output = *out;
    }
    if (decay_rule) {
      c.decay_rule = *decay_rule;
    }
    if (oracle_cache) {
      c.oracle.cache_dir = *oracle_cache;
    }
    c.validate();
    return c;
  }
};

int report_exit(const RunReport& r) {
  std::cout << r.config.name << ": L2 " << format_l2(r) << "\n";
  std::cout << "summary: " << (std::filesystem::path(r.config.output) / "summary.json").string() << "\n";
  if (!r.mean_l2) {
    std::cerr << "error: every repetition failed\n";
    return kError;
  }
  if (r.config.max_mean_l2 && *r.mean_l2 > *r.config.max_mean_l2) {
    std::cerr << "mean L2 " << *r.mean_l2 << " exceeds max_mean_l2 " << *r.config.max_mean_l2 << "\n";
    return kToleranceFailure;
  }
  return kOk;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"PSO-PINN: swarm-trained physics-informed neural networks"};
  app.require_subcommand(1);

  Overrides run_over;
  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "run an experiment config");
  run_cmd->add_option("--config", config_path, "config JSON file")->required()->check(CLI::ExistingFile);
  run_over.attach(run_cmd);

  Overrides bench_over;
  std::string bench_problem;
  std::string bench_variant;
  auto* bench_cmd = app.add_subcommand("benchmark", "run a built-in preset (problem x variant)");
  bench_cmd->add_option("--problem", bench_problem, "advection, heat, burgers, forced-heat, allen-cahn")->required();
  bench_cmd->add_option("--variant", bench_variant, "pso, pso_bp, pso_bp_cd or adam")->required();
  bench_over.attach(bench_cmd);

  std::string table_tier = "paper";
  std::size_t table_reps = 10;
  std::uint64_t table_seed = 1;
  std::string table_out = "runs/table";
  std::string table_problems = "advection,heat,burgers";
  std::string table_variants = "pso,pso_bp,pso_bp_cd";
  auto* table_cmd = app.add_subcommand("table", "problem x variant table of mean L2 errors");
  table_cmd->add_option("--tier", table_tier)->check(CLI::IsMember({"paper", "fast"}));
  table_cmd->add_option("--reps", table_reps);
  table_cmd->add_option("--seed", table_seed);
  table_cmd->add_option("--out", table_out);
  table_cmd->add_option("--problems", table_problems, "comma-separated");
  table_cmd->add_option("--variants", table_variants, "comma-separated");

  std::string grid_path;
  std::string sweep_config;
  std::string sweep_preset = "heat-pso_bp_cd";
  Overrides sweep_over;
  auto* sweep_cmd = app.add_subcommand("sweep", "grid search over alpha, beta, c1, c2, init");
  sweep_cmd->add_option("--grid", grid_path, "grid JSON file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--config", sweep_config, "base config (default: --preset)")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--preset", sweep_preset, "base preset name");
  sweep_over.attach(sweep_cmd);

  std::string oracle_problem;
  OracleConfig oracle_cfg;
  auto* oracle_cmd = app.add_subcommand("oracle", "precompute and cache a grid oracle");
  oracle_cmd->add_option("--problem", oracle_problem)->required();
  oracle_cmd->add_option("--nx", oracle_cfg.nx, "spatial nodes");
  oracle_cmd->add_option("--slices", oracle_cfg.slices, "stored time slices");
  oracle_cmd->add_option("--cache", oracle_cfg.cache_dir, "cache directory");

  auto* check_cmd = app.add_subcommand("check", "gradient, jet, residual and reduction checks");

  std::string preset_dir;
  auto* presets_cmd = app.add_subcommand("presets", "list built-in presets or write them as JSON");
  presets_cmd->add_option("--write", preset_dir, "directory to write <name>.json files into");

  std::string acc_tier = "fast";
  std::string acc_only;
  std::string acc_out = "acceptance_runs";
  std::string acc_cache = "oracle_cache";
  auto* acc_cmd = app.add_subcommand("acceptance", "evaluate the acceptance criteria");
  acc_cmd->add_option("--tier", acc_tier)->check(CLI::IsMember({"paper", "fast"}));
  acc_cmd->add_option("--only", acc_only, "comma-separated criterion ids");
  acc_cmd->add_option("--out", acc_out);
  acc_cmd->add_option("--oracle-cache", acc_cache);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const RunConfig c = run_over.apply(load_config(config_path));
      return report_exit(run(c, {&std::cerr, true}));
    }
    if (*bench_cmd) {
      const RunConfig c = bench_over.apply(preset(bench_problem + "-" + bench_variant));
      return report_exit(run(c, {&std::cerr, true}));
    }
    if (*table_cmd) {
      const auto rows = benchmark_table(split(table_problems), split(table_variants), table_reps, table_seed,
                                        parse_tier(table_tier), table_out, {&std::cerr, true});
      const std::string text = format_table(rows);
      std::cout << text;
      std::filesystem::create_directories(table_out);
      std::ofstream(std::filesystem::path(table_out) / "table.txt") << text;
      for (const TableRow& r : rows) {
        if (!r.report.mean_l2) {
          return kError;
        }
      }
      return kOk;
    }
    if (*sweep_cmd) {
      RunConfig base = sweep_config.empty() ? preset(sweep_preset) : load_config(sweep_config);
      base = sweep_over.apply(base);
      std::ifstream in(grid_path);
      const SweepGrid grid = grid_from_json(json::parse(in));
      const std::string root = sweep_over.out.value_or("runs/sweep");
      const auto cells = sweep(base, grid, root, {&std::cerr, true});
      for (std::size_t r = 0; r < cells.size(); ++r) {
        const SweepCell& s = cells[r];
        std::cout << r + 1 << ". alpha " << s.config.alpha << " beta " << s.config.beta << " c1 " << s.config.c1
                  << " c2 " << s.config.c2 << " init " << s.config.init << ": " << format_l2(s.report) << "\n";
      }
      std::cout << "ranking: " << (std::filesystem::path(root) / "sweep.csv").string() << "\n";
      return kOk;
    }
    if (*oracle_cmd) {
      const PdeProblem p = make_problem(oracle_problem);
      if (p.reference.kind != ReferenceKind::grid_oracle) {
        std::cerr << "problem '" << oracle_problem << "' has a " << to_string(p.reference.kind)
                  << " reference; no grid oracle needed\n";
        return kError;
      }
      const auto grid = ensure_oracle(p, oracle_cfg, &std::cerr);
      std::cout << "oracle " << oracle_cache_path(p, oracle_cfg).string() << ": nx " << grid->nx << ", slices "
                << grid->nt << ", refinement estimate " << grid->refinement_estimate << "\n";
      return kOk;
    }
    if (*check_cmd) {
      bool ok = true;
      for (const CheckResult& c : run_property_checks()) {
        std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.measured << " (tolerance "
                  << c.tolerance << ")" << (c.detail.empty() ? "" : "; " + c.detail) << "\n";
        ok = ok && c.passed;
      }
      return ok ? kOk : kToleranceFailure;
    }
    if (*presets_cmd) {
      for (const std::string& name : preset_names()) {
        std::cout << name << "\n";
        if (!preset_dir.empty()) {
          std::filesystem::create_directories(preset_dir);
          std::ofstream(std::filesystem::path(preset_dir) / (name + ".json")) << to_json(preset(name)).dump(2)
                                                                              << "\n";
        }
      }
      return kOk;
    }
    if (*acc_cmd) {
      acceptance::Settings s;
      s.tier = parse_tier(acc_tier);
      s.output_root = acc_out;
      s.oracle_cache = acc_cache;
      s.log = &std::cerr;
      std::vector<int> ids;
      for (const std::string& t : split(acc_only)) {
        ids.push_back(std::stoi(t));
      }
      bool ok = true;
      for (const auto& c : acceptance::run_all(s, ids, std::cout)) {
        ok = ok && c.status != acceptance::Status::fail;
      }
      return ok ? kOk : kToleranceFailure;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}
