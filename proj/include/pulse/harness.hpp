/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pulse/common.hpp"

namespace pulse {

// Normalized distance between a found objective and the optimum: 1 for an
// infeasible run or opposite signs, |z - z*| / max(|z|, |z*|) otherwise. The
// all-zero corner returns 0.
inline double primal_gap(const std::optional<double>& z_obj, double z_opt)
{
  if (!z_obj) return 1.0;
  const double z = *z_obj;
  if (z * z_opt < 0.0) return 1.0;
  if (z == 0.0 && z_opt == 0.0) return 0.0;
  return std::abs(z - z_opt) / std::max(std::abs(z), std::abs(z_opt));
}

struct GapRecord {
  std::string instance;
  uint64_t seed = 0;
  bool feasible = false;
  double objective = 0.0;               // meaningful only when feasible
  std::optional<double> z_optimal;      // absent when the optimum is unknown
  double time_to_first = -1.0;
  double total_time    = 0.0;
  std::optional<double> gap_value;      // set when loaded from a CSV

  std::optional<double> gap() const
  {
    if (gap_value) return gap_value;
    if (!z_optimal) return std::nullopt;
    return primal_gap(feasible ? std::optional<double>(objective) : std::nullopt, *z_optimal);
  }
};

struct Aggregate {
  double avg_feasible = 0.0;              // mean over seeds of per-seed counts
  std::optional<double> mean_gap;         // mean over all records with optima
  std::map<uint64_t, int> per_seed_feasible;
  int n_records = 0;
};

inline Aggregate aggregate(const std::vector<GapRecord>& records)
{
  if (records.empty()) throw std::invalid_argument("no records");
  Aggregate out;
  out.n_records = static_cast<int>(records.size());
  double gap_sum = 0.0;
  int gap_count  = 0;
  for (const auto& r : records) {
    out.per_seed_feasible.try_emplace(r.seed, 0);
    if (r.feasible) out.per_seed_feasible[r.seed]++;
    if (const auto g = r.gap()) {
      gap_sum += *g;
      gap_count++;
    }
  }
  double total = 0.0;
  for (const auto& [seed, count] : out.per_seed_feasible) total += count;
  out.avg_feasible = total / static_cast<double>(out.per_seed_feasible.size());
  if (gap_count > 0) out.mean_gap = gap_sum / gap_count;
  return out;
}

// Reads rows in the bench CSV layout back into records:
//   instance,seed,feasible,objective,gap,time_to_first,total_time
// The gap column carries "n/a" when no optimum was known.
inline std::vector<GapRecord> read_bench_csv(std::istream& in)
{
  std::vector<GapRecord> records;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("instance,", 0) == 0) {
      first = false;
      continue;  // header
    }
    first = false;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) fields.push_back(tok);
    if (fields.size() != 7) throw std::invalid_argument("malformed bench CSV row: " + line);
    GapRecord r;
    r.instance      = fields[0];
    r.seed          = std::stoull(fields[1]);
    r.feasible      = fields[2] == "1" || fields[2] == "true";
    r.objective     = std::stod(fields[3]);
    if (fields[4] != "n/a") r.gap_value = std::stod(fields[4]);
    r.time_to_first = std::stod(fields[5]);
    r.total_time    = std::stod(fields[6]);
    records.push_back(std::move(r));
  }
  return records;
}

// Benchmark-table text summary.
inline std::string format_summary(const Aggregate& agg, const std::string& method)
{
  std::ostringstream out;
  out << "Method                                   Avg. #Feasible  Primal gap\n";
  out << method;
  for (size_t i = method.size(); i < 41; ++i) out << ' ';
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-16.2f", agg.avg_feasible);
  out << buf;
  if (agg.mean_gap) {
    std::snprintf(buf, sizeof(buf), "%.2f", *agg.mean_gap);
    out << buf;
  } else {
    out << "n/a";
  }
  out << "\n";
  return out.str();
}

}  // namespace pulse
