/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "pulse/propagation.hpp"

namespace pulse {

// The two branches of a probed variable partition its current domain:
//   boxed integer:      x <= ceil((l+u)/2) - 1   |   x >= ceil((l+u)/2)
//   lower bound only:   x = l                    |   x >= l + 1
//   upper bound only:   x <= u - 1               |   x = u
// Binaries are the boxed case with branches {0} and {1}.
enum class BranchKind { BoxedSplit, AtLowerBound, AtUpperBound };

struct BranchSpec {
  int var = -1;
  BranchKind kind = BranchKind::BoxedSplit;
  double down_lower = 0.0, down_upper = 0.0;  // induced interval, down branch
  double up_lower = 0.0, up_upper = 0.0;      // induced interval, up branch
};

inline std::optional<BranchSpec> make_branch_spec(const BoundsState& root, int v)
{
  const double lo = root.lower(v);
  const double up = root.upper(v);
  if (lo == up) return std::nullopt;  // fixed
  BranchSpec s;
  s.var = v;
  if (is_finite(lo) && is_finite(up)) {
    s.kind           = BranchKind::BoxedSplit;
    const double mid = std::ceil((lo + up) / 2.0);  // first value of the up branch
    s.down_lower     = lo;
    s.down_upper     = mid - 1.0;
    s.up_lower       = mid;
    s.up_upper       = up;
  } else if (is_finite(lo)) {
    s.kind       = BranchKind::AtLowerBound;
    s.down_lower = lo;
    s.down_upper = lo;
    s.up_lower   = lo + 1.0;
    s.up_upper   = up;
  } else if (is_finite(up)) {
    s.kind       = BranchKind::AtUpperBound;
    s.down_lower = lo;
    s.down_upper = up - 1.0;
    s.up_lower   = up;
    s.up_upper   = up;
  } else {
    return std::nullopt;  // free integer: nothing to split on
  }
  return s;
}

struct BoundDelta {
  int var;
  double new_lower;
  double new_upper;
};

struct ProbeBranch {
  bool feasible = true;
  double branch_lower = 0.0;
  double branch_upper = 0.0;
  std::vector<BoundDelta> deltas;  // tightenings vs the root bounds, sorted by var
};

struct ProbeEntry {
  int var = -1;
  BranchKind kind = BranchKind::BoxedSplit;
  ProbeBranch down;
  ProbeBranch up;

  // Set when exactly one branch is infeasible: the other branch holds at the
  // root, a root-level tightening candidate.
  bool forces_down = false;
  bool forces_up   = false;
};

struct ProbingCache {
  std::vector<std::optional<ProbeEntry>> entries;  // indexed by variable
  BoundsState root;
  int n_probed = 0;
  int n_infeasible_branches = 0;

  bool has(int v) const
  {
    return v >= 0 && v < static_cast<int>(entries.size()) && entries[v].has_value();
  }
  const ProbeEntry& at(int v) const { return *entries[v]; }
};

// Lexicographic probing priority. The first two keys apply to variables that
// appear with both coefficient signs: flipping such a variable's activity
// contribution (lower <-> upper) in each containing row exposes the rows it
// can violate when pushed to a bound. Third key is the unit slack consumption
// of the rounding order, minimized over containing rows.
inline std::vector<int> prioritize_probe_vars(const ProblemDef& p)
{
  BoundsState b(p);
  ActivityState a;
  compute_activities(p, b, nullptr, a);

  struct Key {
    int violated = 0;
    double max_violation = 0.0;
    double min_unit_slack = kInf;
    int var = -1;
  };
  std::vector<Key> keys;

  for (int i = 0; i < p.n_vars; ++i) {
    if (!p.is_integer[i]) continue;
    Key key;
    key.var = i;

    const auto rows = p.col_rows(i);
    const auto vals = p.col_vals(i);
    bool pos = false, neg = false;
    for (double v : vals) (v > 0 ? pos : neg) = true;

    for (size_t e = 0; e < rows.size(); ++e) {
      const int k       = rows[e];
      const double a_ki = vals[e];
      const double lo = b.lower(i), up = b.upper(i);

      if (pos && neg) {
        // Flip this variable's contribution in row k: min side takes the max
        // contribution and vice versa.
        const double min_contrib = a_ki > 0 ? a_ki * lo : a_ki * up;
        const double max_contrib = a_ki > 0 ? a_ki * up : a_ki * lo;
        const bool min_inf = a_ki > 0 ? lo == -kInf : up == kInf;
        const bool max_inf = a_ki > 0 ? up == kInf : lo == -kInf;

        if (is_finite(p.cons_upper[k])) {
          const int others_inf = a.n_inf_min[k] - (min_inf ? 1 : 0);
          if (others_inf == 0) {
            const double flipped_min =
                max_inf ? kInf : a.min_finite_part(k) - (min_inf ? 0.0 : min_contrib) + max_contrib;
            if (flipped_min > p.cons_upper[k] + kFeasTol) {
              key.violated++;
              key.max_violation = std::max(key.max_violation, flipped_min - p.cons_upper[k]);
            }
          }
        }
        if (is_finite(p.cons_lower[k])) {
          const int others_inf = a.n_inf_max[k] - (max_inf ? 1 : 0);
          if (others_inf == 0) {
            const double flipped_max =
                min_inf ? -kInf
                        : a.max_finite_part(k) - (max_inf ? 0.0 : max_contrib) + min_contrib;
            if (flipped_max < p.cons_lower[k] - kFeasTol) {
              key.violated++;
              key.max_violation = std::max(key.max_violation, p.cons_lower[k] - flipped_max);
            }
          }
        }
      }

      // Unit slack consumption |a| / slack; non-positive slack counts as +inf.
      if (is_finite(p.cons_upper[k]) && !a.min_unbounded(k)) {
        const double slack = p.cons_upper[k] - a.min_activity(k);
        if (slack > 0.0) key.min_unit_slack = std::min(key.min_unit_slack, std::abs(a_ki) / slack);
      }
      if (is_finite(p.cons_lower[k]) && !a.max_unbounded(k)) {
        const double slack = a.max_activity(k) - p.cons_lower[k];
        if (slack > 0.0) key.min_unit_slack = std::min(key.min_unit_slack, std::abs(a_ki) / slack);
      }
    }
    keys.push_back(key);
  }

  std::stable_sort(keys.begin(), keys.end(), [](const Key& x, const Key& y) {
    if (x.violated != y.violated) return x.violated > y.violated;
    if (x.max_violation != y.max_violation) return x.max_violation > y.max_violation;
    return x.min_unit_slack < y.min_unit_slack;
  });

  std::vector<int> order;
  order.reserve(keys.size());
  for (const auto& k : keys) order.push_back(k.var);
  return order;
}

namespace detail {

inline ProbeBranch probe_branch(const ProblemDef& p, const BoundsState& root, int v,
                                double branch_lo, double branch_up, const WorkPlan* plan)
{
  ProbeBranch br;
  br.branch_lower = branch_lo;
  br.branch_upper = branch_up;

  BoundsState b = root;
  b.set_lower(v, std::max(root.lower(v), branch_lo));
  b.set_upper(v, std::min(root.upper(v), branch_up));
  if (b.lower(v) > b.upper(v)) {
    br.feasible = false;
    return br;
  }
  const auto res = propagate(p, b, {}, plan);
  if (res.status == PropagationStatus::Infeasible) {
    br.feasible = false;
    return br;  // an infeasible branch stores no deltas
  }
  for (int i = 0; i < p.n_vars; ++i) {
    if (b.lower(i) != root.lower(i) || b.upper(i) != root.upper(i)) {
      br.deltas.push_back({i, b.lower(i), b.upper(i)});
    }
  }
  return br;
}

}  // namespace detail

// Propagates both branches of v from the root bounds and records the implied
// tightenings. Infeasibility of a branch is data, not an error.
inline ProbeEntry probe_variable(const ProblemDef& p, const BoundsState& root, int v,
                                 const WorkPlan* plan = nullptr)
{
  const auto spec = make_branch_spec(root, v);
  ProbeEntry entry;
  entry.var = v;
  if (!spec) return entry;
  entry.kind = spec->kind;
  entry.down = detail::probe_branch(p, root, v, spec->down_lower, spec->down_upper, plan);
  entry.up   = detail::probe_branch(p, root, v, spec->up_lower, spec->up_upper, plan);
  entry.forces_up   = !entry.down.feasible && entry.up.feasible;
  entry.forces_down = !entry.up.feasible && entry.down.feasible;
  return entry;
}

// Probes integer variables in priority order until the time budget runs out.
// Probe workers run concurrently on private bounds states; the cache is
// frozen after this returns.
inline ProbingCache build_cache(const ProblemDef& p, double budget_sec)
{
  ProbingCache cache;
  cache.root = BoundsState(p);
  cache.entries.resize(p.n_vars);
  if (budget_sec <= 0.0) return cache;

  const WorkPlan plan = build_work_plan(p);
  std::vector<int> order;
  for (int v : prioritize_probe_vars(p)) {
    if (!cache.root.fixed(v)) order.push_back(v);
  }

  Timer timer;
  std::atomic<int> cursor(0);
  std::atomic<bool> out_of_time(false);
  const int n = static_cast<int>(order.size());
  parallel_for(0, std::min(n, max_threads()), [&](int) {
    for (;;) {
      if (out_of_time.load(std::memory_order_relaxed)) return;
      const int idx = cursor.fetch_add(1);
      if (idx >= n) return;
      if (timer.elapsed_sec() >= budget_sec) {
        out_of_time.store(true, std::memory_order_relaxed);
        return;
      }
      const int v       = order[idx];
      cache.entries[v]  = probe_variable(p, cache.root, v, &plan);
    }
  }, 1);

  for (const auto& e : cache.entries) {
    if (!e) continue;
    cache.n_probed++;
    if (!e->down.feasible) cache.n_infeasible_branches++;
    if (!e->up.feasible) cache.n_infeasible_branches++;
  }
  return cache;
}

struct BulkWarmStart {
  BoundsState bounds;
  std::vector<std::pair<int, int>> conflicts;  // (kept/earlier var, evicted var)
  std::vector<int> evicted;                    // assignments dropped from the bulk
};

// Merges the cached branch deltas selected by the assignments into one warm
// bounds state. Deltas that cross flag a conflict and the later-ordered
// variable is evicted; assignments without a cache entry pass through.
inline BulkWarmStart assemble_bulk_warm_start(const ProbingCache& cache,
                                              const std::vector<std::pair<int, double>>& assignments)
{
  BulkWarmStart out;
  out.bounds = cache.root;
  const int n = out.bounds.n_vars();
  std::vector<int> last_writer(n, -1);
  std::vector<uint8_t> evicted_mark(n, 0);

  for (const auto& [v, value] : assignments) {
    if (!cache.has(v)) continue;
    const ProbeEntry& entry = cache.at(v);
    const ProbeBranch& br = (value <= entry.down.branch_upper) ? entry.down : entry.up;
    if (!br.feasible) {
      out.conflicts.push_back({v, v});
      if (!evicted_mark[v]) {
        evicted_mark[v] = 1;
        out.evicted.push_back(v);
      }
      continue;
    }
    // Tentatively merge; the undo log unwinds on a crossing.
    struct Undo {
      int var;
      double lo, up;
      int writer;
    };
    std::vector<Undo> undo;
    bool conflict   = false;
    int conflicting = -1;
    for (const auto& d : br.deltas) {
      const double nl = std::max(out.bounds.lower(d.var), d.new_lower);
      const double nu = std::min(out.bounds.upper(d.var), d.new_upper);
      if (nl > nu + 1e-9) {
        conflict    = true;
        conflicting = last_writer[d.var] >= 0 ? last_writer[d.var] : v;
        break;
      }
      if (nl != out.bounds.lower(d.var) || nu != out.bounds.upper(d.var)) {
        undo.push_back({d.var, out.bounds.lower(d.var), out.bounds.upper(d.var),
                        last_writer[d.var]});
        out.bounds.set_lower(d.var, nl);
        out.bounds.set_upper(d.var, nu);
        last_writer[d.var] = v;
      }
    }
    if (conflict) {
      for (auto it = undo.rbegin(); it != undo.rend(); ++it) {
        out.bounds.set_lower(it->var, it->lo);
        out.bounds.set_upper(it->var, it->up);
        last_writer[it->var] = it->writer;
      }
      out.conflicts.push_back({conflicting, v});
      if (!evicted_mark[v]) {
        evicted_mark[v] = 1;
        out.evicted.push_back(v);
      }
    }
  }
  return out;
}

}  // namespace pulse
