/* SPDX-License-Identifier: Apache-2.0 */

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pulse/fp.hpp"
#include "pulse/harness.hpp"
#include "pulse/mps.hpp"

using json = nlohmann::ordered_json;

namespace {

struct CommonOpts {
  double time_limit = 600.0;
  uint64_t seed     = 0;
  std::string rounding = "fixprop";
  bool repair          = false;
  bool two_stage       = false;
  double obj_fp_alpha  = 0.1;
  int cycle_window     = 5;
  bool first_feasible_stop = false;
};

void add_common_flags(CLI::App* cmd, CommonOpts& opts)
{
  cmd->add_option("--time-limit", opts.time_limit, "wall clock budget in seconds")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", opts.seed, "root RNG seed");
  cmd->add_option("--rounding", opts.rounding, "rounding heuristic")
      ->check(CLI::IsMember({"nearest", "fixprop"}));
  cmd->add_flag("--repair", opts.repair, "enable the repair procedure");
  cmd->add_flag("--two-stage", opts.two_stage, "pump binaries first");
  cmd->add_option("--obj-fp-alpha", opts.obj_fp_alpha,
                  "objective blending weight for projections (0 disables)");
  cmd->add_option("--cycle-window", opts.cycle_window, "trailing projections for cycle detection")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--first-feasible-stop", opts.first_feasible_stop,
                "stop at the first feasible solution");
}

pulse::FpConfig to_config(const CommonOpts& opts, uint64_t seed)
{
  pulse::FpConfig cfg;
  cfg.time_limit_sec = opts.time_limit;
  cfg.seed           = seed;
  cfg.rounding =
      opts.rounding == "nearest" ? pulse::RoundingMode::Nearest : pulse::RoundingMode::FixProp;
  cfg.repair_enabled      = opts.repair;
  cfg.two_stage           = opts.two_stage;
  cfg.obj_fp_alpha        = opts.obj_fp_alpha;
  cfg.cycle_window        = opts.cycle_window;
  cfg.first_feasible_stop = opts.first_feasible_stop;
  return cfg;
}

json report_json(const pulse::FpOutcome& out, uint64_t seed)
{
  json j;
  j["feasible"]               = out.stats.feasible;
  j["objective"]              = out.stats.objective;
  j["max_violation"]          = out.stats.max_violation;
  j["time_sec"]               = out.stats.total_time_sec;
  j["time_to_first_feasible"] = out.stats.time_to_first_feasible;
  j["iterations"]             = out.stats.fp_iterations;
  j["seed"]                   = seed;
  return j;
}

int run_solve(const std::string& instance, const CommonOpts& opts, const std::string& sol_out,
              const std::string& json_out)
{
  pulse::ProblemDef p;
  try {
    p = pulse::load_mps(instance);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  const auto out = pulse::fused_heuristic(p, to_config(opts, opts.seed));

  if (!sol_out.empty()) {
    std::ofstream f(sol_out);
    if (!f) {
      std::cerr << "error: cannot write " << sol_out << "\n";
      return 1;
    }
    pulse::write_solution(p, out.best, f);
  }
  const json j = report_json(out, opts.seed);
  if (!json_out.empty()) {
    std::ofstream f(json_out);
    if (!f) {
      std::cerr << "error: cannot write " << json_out << "\n";
      return 1;
    }
    f << j.dump(2) << "\n";
  }
  std::cout << j.dump(2) << "\n";
  return out.stats.feasible ? 0 : 2;
}

struct ManifestEntry {
  std::string path;
  std::optional<double> optimum;
};

std::vector<ManifestEntry> read_manifest(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string file;
    if (!(ls >> file) || file[0] == '#') continue;
    ManifestEntry e;
    e.path = file;
    double opt;
    if (ls >> opt) e.optimum = opt;
    entries.push_back(e);
  }
  return entries;
}

int run_bench(const std::string& manifest_path, const std::string& seeds_arg,
              const CommonOpts& opts, const std::string& csv_out, const std::string& json_out)
{
  std::vector<ManifestEntry> manifest;
  try {
    manifest = read_manifest(manifest_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::vector<uint64_t> seeds;
  {
    std::istringstream ss(seeds_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) seeds.push_back(std::stoull(tok));
    }
  }
  if (seeds.empty()) seeds.push_back(opts.seed);

  std::vector<pulse::GapRecord> records;
  std::ostringstream csv;
  csv << "instance,seed,feasible,objective,gap,time_to_first,total_time\n";

  for (const auto& entry : manifest) {
    for (const uint64_t seed : seeds) {
      pulse::GapRecord rec;
      rec.instance  = entry.path;
      rec.seed      = seed;
      rec.z_optimal = entry.optimum;
      try {
        const auto p   = pulse::load_mps(entry.path);
        const auto out = pulse::fused_heuristic(p, to_config(opts, seed));
        rec.feasible      = out.stats.feasible;
        rec.objective     = out.stats.objective;
        rec.time_to_first = out.stats.time_to_first_feasible;
        rec.total_time    = out.stats.total_time_sec;
      } catch (const std::exception& e) {
        // A failing instance is recorded infeasible; the sweep continues.
        std::cerr << "warning: " << entry.path << " seed " << seed << ": " << e.what() << "\n";
        rec.feasible = false;
      }
      const auto gap = rec.gap();
      char gapbuf[32] = "n/a";
      if (gap) std::snprintf(gapbuf, sizeof(gapbuf), "%.6f", *gap);
      char row[512];
      std::snprintf(row, sizeof(row), "%s,%llu,%d,%.10g,%s,%.4f,%.4f\n", rec.instance.c_str(),
                    static_cast<unsigned long long>(rec.seed), rec.feasible ? 1 : 0,
                    rec.objective, gapbuf, rec.time_to_first, rec.total_time);
      csv << row;
      records.push_back(std::move(rec));
    }
  }

  if (records.empty()) {
    std::cerr << "error: empty manifest\n";
    return 1;
  }
  const auto agg = pulse::aggregate(records);

  if (!csv_out.empty()) {
    std::ofstream f(csv_out);
    f << csv.str();
  }
  json j;
  j["avg_feasible"] = agg.avg_feasible;
  if (agg.mean_gap) {
    j["mean_gap"] = *agg.mean_gap;
  } else {
    j["mean_gap"] = nullptr;
  }
  json per_seed = json::object();
  for (const auto& [seed, count] : agg.per_seed_feasible) {
    per_seed[std::to_string(seed)] = count;
  }
  j["per_seed_feasible"] = per_seed;
  j["n_records"]         = agg.n_records;
  if (!json_out.empty()) {
    std::ofstream f(json_out);
    f << j.dump(2) << "\n";
  }
  std::cout << pulse::format_summary(agg, "pulse " + opts.rounding);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"MILP primal heuristic stack: propagation, probing, rounding, local search and "
               "an extended feasibility pump"};
  app.require_subcommand(1);

  CommonOpts solve_opts, bench_opts;
  std::string instance, sol_out, json_out;
  auto* solve = app.add_subcommand("solve", "solve one MPS instance");
  solve->add_option("instance", instance, "MPS file")->required();
  add_common_flags(solve, solve_opts);
  solve->add_option("--sol-out", sol_out, "solution file (name value lines)");
  solve->add_option("--json-out", json_out, "JSON report path");

  std::string manifest, seeds = "", bench_csv, bench_json;
  auto* bench = app.add_subcommand("bench", "run a manifest of instances over seeds");
  bench->add_option("--manifest", manifest, "file of instance paths with optional optima")
      ->required();
  bench->add_option("--seeds", seeds, "comma separated seed list");
  add_common_flags(bench, bench_opts);
  bench->add_option("--csv-out", bench_csv, "per-run CSV path");
  bench->add_option("--json-out", bench_json, "JSON summary path");

  CLI11_PARSE(app, argc, argv);

  if (solve->parsed()) return run_solve(instance, solve_opts, sol_out, json_out);
  return run_bench(manifest, seeds, bench_opts, bench_csv, bench_json);
}
