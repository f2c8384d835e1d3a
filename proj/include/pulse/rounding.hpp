/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "pulse/common.hpp"
#include "pulse/lp.hpp"
#include "pulse/probing.hpp"
#include "pulse/propagation.hpp"

namespace pulse {

struct RoundingConfig {
  // Width of the randomized band around fraction .5; fractions with
  // |f - 0.5| >= band round to nearest deterministically, inside the band the
  // value rounds up with probability f. Zero disables randomization.
  double random_band = 0.25;
  // The tail of the order is fixed and propagated one variable at a time.
  int single_var_tail = 36;
  bool repair_enabled = false;  // matches the evaluated configuration
  int repair_attempt_cap = 16;
  int repair_shift_cap   = 64;
  double polish_budget_sec = 1.0;
  double polish_tol        = 1e-6;
  int polish_max_iters     = 50000;
};

// Interval-width class then fractionality: binaries before ternaries before
// the rest, most-decided (smallest distance to integer) first, stable.
inline std::vector<int> initial_sort(const ProblemDef& p, const SolutionVector& s)
{
  struct Item {
    int var;
    int width_class;
    double frac_dist;
  };
  std::vector<Item> items;
  for (int i = 0; i < p.n_vars; ++i) {
    if (!p.is_integer[i]) continue;
    const double w = p.var_upper[i] - p.var_lower[i];
    int cls;
    if (w == 1.0) {
      cls = 0;  // binary
    } else if (w == 2.0) {
      cls = 1;  // ternary
    } else {
      cls = 2;
    }
    const double v = s.values[i];
    items.push_back({i, cls, std::abs(v - std::round(v))});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.width_class != b.width_class) return a.width_class < b.width_class;
    return a.frac_dist < b.frac_dist;
  });
  std::vector<int> order;
  order.reserve(items.size());
  for (const auto& it : items) order.push_back(it.var);
  return order;
}

// Total slack consumption S_i = sum over containing rows of (a / slack)^2,
// where slack is the room between the relevant activity envelope and the row
// bound. Tight or violated directions push the variable to the end of the
// order. Stable: the incoming order breaks ties.
inline void implied_slack_sort(const ProblemDef& p, const ActivityState& a,
                               std::vector<int>& vars)
{
  std::vector<std::pair<double, int>> keyed;  // (S, position)
  keyed.reserve(vars.size());
  for (size_t pos = 0; pos < vars.size(); ++pos) {
    const int i     = vars[pos];
    const auto rows = p.col_rows(i);
    const auto vals = p.col_vals(i);
    double total    = 0.0;
    for (size_t e = 0; e < rows.size(); ++e) {
      const int k       = rows[e];
      const double a_ki = vals[e];
      if (is_finite(p.cons_upper[k])) {
        if (!a.min_unbounded(k)) {
          const double slack = p.cons_upper[k] - a.min_activity(k);
          if (slack <= 0.0) {
            total = kInf;
            break;
          }
          const double s = a_ki / slack;
          total += s * s;
        }
      }
      if (is_finite(p.cons_lower[k])) {
        if (!a.max_unbounded(k)) {
          const double slack = a.max_activity(k) - p.cons_lower[k];
          if (slack <= 0.0) {
            total = kInf;
            break;
          }
          const double s = a_ki / slack;
          total += s * s;
        }
      }
    }
    keyed.push_back({total, static_cast<int>(pos)});
  }
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& x, const auto& y) { return x.first < y.first; });
  std::vector<int> out;
  out.reserve(vars.size());
  for (const auto& [S, pos] : keyed) out.push_back(vars[pos]);
  vars = std::move(out);
}

// Square-root bulk sizing with a single-variable tail; recovery mode always
// fixes one variable at a time.
inline int get_bulk_size(int remaining, bool recovery, int single_var_tail = 36)
{
  if (recovery || remaining <= single_var_tail) return 1;
  return static_cast<int>(std::lround(std::sqrt(double(remaining))));
}

// Two independent draws per variable from the rounding distribution, clamped
// into the current bounds.
inline std::pair<std::vector<double>, std::vector<double>> generate_candidate_values(
    const SolutionVector& s, const std::vector<int>& vars, const BoundsState& b, Rng& rng,
    double random_band = 0.25)
{
  std::vector<double> v0, v1;
  v0.reserve(vars.size());
  v1.reserve(vars.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i : vars) {
    const double v  = s.values[i];
    const double fl = std::floor(v);
    const double f  = v - fl;
    double draw[2];
    if (std::abs(f - 0.5) >= random_band) {
      draw[0] = draw[1] = std::round(v);
    } else {
      draw[0] = fl + (unit(rng) < f ? 1.0 : 0.0);
      draw[1] = fl + (unit(rng) < f ? 1.0 : 0.0);
    }
    const double lo = std::ceil(b.lower(i) - 1e-9);
    const double hi = std::floor(b.upper(i) + 1e-9);
    v0.push_back(clamp(draw[0], lo, hi));
    v1.push_back(clamp(draw[1], lo, hi));
  }
  return {std::move(v0), std::move(v1)};
}

struct ProbeResult {
  BoundsState bounds;
  int infeas_count = 0;          // 0 iff the propagation was feasible
  std::vector<int> evicted;      // bulk vars dropped by the conflict screen
  std::vector<std::pair<int, double>> fixed;  // assignments actually applied
};

struct ParallelProbeResult {
  ProbeResult probe[2];
};

namespace detail {

inline ProbeResult run_probe(const ProblemDef& p, const BoundsState& base,
                             const std::vector<int>& vars, const std::vector<double>& values,
                             const ProbingCache* cache, const WorkPlan& plan)
{
  ProbeResult out;
  out.bounds = base;

  std::vector<std::pair<int, double>> assignments;
  assignments.reserve(vars.size());
  for (size_t j = 0; j < vars.size(); ++j) assignments.push_back({vars[j], values[j]});

  std::vector<uint8_t> evicted_mark(p.n_vars, 0);
  if (cache) {
    auto ws = assemble_bulk_warm_start(*cache, assignments);
    for (int v : ws.evicted) evicted_mark[v] = 1;
    out.evicted = std::move(ws.evicted);
    out.bounds.meet(ws.bounds);
  }

  int crossings = out.bounds.infeasible() ? 1 : 0;
  for (const auto& [v, val] : assignments) {
    if (evicted_mark[v]) continue;
    if (val < out.bounds.lower(v) - 1e-9 || val > out.bounds.upper(v) + 1e-9) {
      ++crossings;  // value excluded by commitments or merged implications
      continue;
    }
    out.bounds.fix(v, val);
    out.fixed.push_back({v, val});
  }
  if (crossings > 0) {
    out.bounds.mark_infeasible();
    out.infeas_count = crossings;
    return out;
  }

  const auto res = propagate(p, out.bounds, {}, &plan);
  if (res.status == PropagationStatus::Infeasible) {
    out.infeas_count = std::max(1, res.crossed_vars);
  }
  return out;
}

}  // namespace detail

// Conflict-screens and warm-starts both candidate vectors via the probing
// cache, then propagates them as two independent tasks over private bounds.
inline ParallelProbeResult parallel_propagate(const ProblemDef& p, const BoundsState& base,
                                              const std::vector<int>& vars,
                                              const std::vector<double>& probe_vec_0,
                                              const std::vector<double>& probe_vec_1,
                                              const ProbingCache* cache, const WorkPlan& plan)
{
  ParallelProbeResult out;
  parallel_invoke(
      [&] { out.probe[0] = detail::run_probe(p, base, vars, probe_vec_0, cache, plan); },
      [&] { out.probe[1] = detail::run_probe(p, base, vars, probe_vec_1, cache, plan); });
  return out;
}

struct RepairResult {
  std::vector<std::pair<int, double>> values;
  BoundsState bounds;
};

// Shifts already-fixed values one variable per violated row until propagation
// from the original bounds succeeds. Shifts stay inside the original variable
// bounds; failure to find any in-bounds shift gives up.
inline std::optional<RepairResult> repair(const ProblemDef& p,
                                          std::vector<std::pair<int, double>> fixed,
                                          const Deadline& deadline, const RoundingConfig& cfg,
                                          const WorkPlan& plan)
{
  std::vector<int> fixed_pos(p.n_vars, -1);
  for (size_t j = 0; j < fixed.size(); ++j) fixed_pos[fixed[j].first] = static_cast<int>(j);

  ActivityState acts;
  for (int iter = 0; iter < cfg.repair_shift_cap; ++iter) {
    if (deadline.expired()) return std::nullopt;

    BoundsState b(p);
    for (const auto& [v, val] : fixed) b.fix(v, val);
    compute_activities(p, b, nullptr, acts, &plan);

    // Most violated row under the fixed-value envelope.
    int worst_row      = -1;
    double worst_viol  = kFeasTol;
    bool upper_side    = true;
    for (int k = 0; k < p.n_cons; ++k) {
      if (is_finite(p.cons_upper[k]) && !acts.min_unbounded(k)) {
        const double viol = acts.min_activity(k) - p.cons_upper[k];
        if (viol > worst_viol) {
          worst_viol = viol;
          worst_row  = k;
          upper_side = true;
        }
      }
      if (is_finite(p.cons_lower[k]) && !acts.max_unbounded(k)) {
        const double viol = p.cons_lower[k] - acts.max_activity(k);
        if (viol > worst_viol) {
          worst_viol = viol;
          worst_row  = k;
          upper_side = false;
        }
      }
    }

    if (worst_row < 0) {
      const auto res = propagate(p, b, {}, &plan);
      if (res.status != PropagationStatus::Infeasible) {
        return RepairResult{std::move(fixed), std::move(b)};
      }
      return std::nullopt;  // activity-feasible but propagation still fails
    }

    // Smallest in-bounds shift of one fixed variable that restores the row.
    const auto cols = p.row_cols(worst_row);
    const auto vals = p.row_vals(worst_row);
    int best_var    = -1;
    double best_val = 0.0;
    for (size_t e = 0; e < cols.size(); ++e) {
      const int v = cols[e];
      if (fixed_pos[v] < 0) continue;
      const double a_kv = vals[e];
      const double cur  = fixed[fixed_pos[v]].second;
      // Required movement of a_kv * x to absorb the violation, rounded away
      // from the violated side for integer variables.
      double delta = worst_viol / std::abs(a_kv);
      if (p.is_integer[v]) delta = std::ceil(delta - 1e-9);
      double cand;
      if (upper_side) {
        cand = (a_kv > 0.0) ? cur - delta : cur + delta;
      } else {
        cand = (a_kv > 0.0) ? cur + delta : cur - delta;
      }
      if (cand < p.var_lower[v] - 1e-9 || cand > p.var_upper[v] + 1e-9) continue;
      if (best_var < 0 || std::abs(cand - cur) < std::abs(best_val - fixed[fixed_pos[best_var]].second)) {
        best_var = v;
        best_val = cand;
      }
    }
    if (best_var < 0) return std::nullopt;
    fixed[fixed_pos[best_var]].second = best_val;
  }
  return std::nullopt;
}

// Fixes the continuous variables by an LP over the restriction with every
// integer variable pinned, minimizing the original objective.
inline SolutionVector lp_polish(const ProblemDef& p, const std::vector<double>& values,
                                const RoundingConfig& cfg = {},
                                const Deadline& deadline = Deadline::never())
{
  bool any_continuous = false;
  for (int i = 0; i < p.n_vars; ++i) {
    if (!p.is_integer[i]) any_continuous = true;
  }
  if (!any_continuous) return make_solution(p, values);

  LpInstance inst = LpInstance::relax(p);
  for (int i = 0; i < p.n_vars; ++i) {
    if (p.is_integer[i]) {
      inst.var_lower[i] = values[i];
      inst.var_upper[i] = values[i];
    }
  }
  LpBudget budget;
  budget.time_sec  = std::min(cfg.polish_budget_sec, deadline.remaining_sec());
  budget.max_iters = cfg.polish_max_iters;
  LpWarmStart ws;
  ws.primal = values;
  ws.dual.assign(p.n_cons, 0.0);
  const auto res = solve(inst, ws, budget, cfg.polish_tol);

  std::vector<double> merged = values;
  for (int i = 0; i < p.n_vars; ++i) {
    if (!p.is_integer[i]) merged[i] = clamp(res.primal[i], p.var_lower[i], p.var_upper[i]);
  }
  return make_solution(p, merged);
}

struct RoundingOutcome {
  SolutionVector point;
  bool rounding_infeasible = false;
  bool timed_out           = false;
  bool completed           = false;  // every integer variable ended fixed
  int repair_attempts      = 0;
  int bulks_committed      = 0;
  int set_count            = 0;
};

namespace detail {

// Rows violated by the fixed-value envelope; used in the terminal phase when
// propagation is off to pick the lesser-evil candidate vector.
inline int count_envelope_violations(const ProblemDef& p, const BoundsState& base,
                                     const std::vector<int>& vars,
                                     const std::vector<double>& values, ActivityState& acts,
                                     const WorkPlan& plan)
{
  BoundsState b = base;
  for (size_t j = 0; j < vars.size(); ++j) {
    const double lo = std::max(p.var_lower[vars[j]], std::min(values[j], p.var_upper[vars[j]]));
    b.fix(vars[j], lo);
  }
  compute_activities(p, b, nullptr, acts, &plan);
  int violated = 0;
  for (int k = 0; k < p.n_cons; ++k) {
    if (is_finite(p.cons_upper[k]) && !acts.min_unbounded(k) &&
        acts.min_activity(k) > p.cons_upper[k] + kFeasTol) {
      ++violated;
    } else if (is_finite(p.cons_lower[k]) && !acts.max_unbounded(k) &&
               acts.max_activity(k) < p.cons_lower[k] - kFeasTol) {
      ++violated;
    }
  }
  return violated;
}

}  // namespace detail

// Bulk fix-and-propagate rounding. Follows the two-probe control flow: sort,
// take a bulk, draw two candidate vectors, propagate both, commit a feasible
// one (probe 0 preferred); on double failure back off to single-variable
// mode, then flag the path infeasible and repair when enabled. Once repair is
// unavailable or exhausted, the remaining variables are committed to the end
// without backtracking, taking the candidate vector that violates fewer rows.
inline RoundingOutcome propagation_round(const ProblemDef& p, const SolutionVector& s,
                                         const ProbingCache* cache, const Deadline& deadline,
                                         Rng& rng, const RoundingConfig& cfg = {})
{
  const WorkPlan plan = build_work_plan(p);
  RoundingOutcome out;

  BoundsState ws(p);  // rounding always restarts from the original bounds
  std::vector<int> unset;
  for (int v : initial_sort(p, s)) {
    if (!ws.fixed(v)) unset.push_back(v);
  }
  std::vector<std::pair<int, double>> committed;

  bool recovery = false;
  bool force    = false;
  ActivityState acts;

  auto drop_fixed = [&] {
    unset.erase(std::remove_if(unset.begin(), unset.end(),
                               [&](int v) { return ws.fixed(v); }),
                unset.end());
  };

  while (!unset.empty()) {
    if (deadline.expired()) {
      out.timed_out = true;
      break;
    }
    const int bulk_size =
        get_bulk_size(static_cast<int>(unset.size()), recovery && !force, cfg.single_var_tail);

    if (!force) {
      if (bulk_size > 1) {
        compute_activities(p, ws, nullptr, acts, &plan);
        implied_slack_sort(p, acts, unset);
      }
      std::vector<int> take(unset.begin(), unset.begin() + bulk_size);
      auto [pv0, pv1] = generate_candidate_values(s, take, ws, rng, cfg.random_band);
      const auto pr   = parallel_propagate(p, ws, take, pv0, pv1, cache, plan);

      if (pr.probe[0].infeas_count == 0 || pr.probe[1].infeas_count == 0) {
        const int sel = pr.probe[0].infeas_count == 0 ? 0 : 1;
        if (!pr.probe[sel].fixed.empty()) {
          ws = pr.probe[sel].bounds;
          for (const auto& fv : pr.probe[sel].fixed) committed.push_back(fv);
          drop_fixed();
          recovery = false;
          out.bulks_committed++;
          continue;
        }
        // Every bulk variable was evicted by the conflict screen. Apply the
        // forced branches recorded in the cache as root-level tightenings so
        // the next draws land in the live branch.
        bool narrowed = false;
        for (int v : pr.probe[sel].evicted) {
          if (!cache || !cache->has(v)) continue;
          const auto& entry = cache->at(v);
          if (entry.forces_down && ws.upper(v) > entry.down.branch_upper) {
            ws.set_upper(v, std::min(ws.upper(v), entry.down.branch_upper));
            narrowed = true;
          } else if (entry.forces_up && ws.lower(v) < entry.up.branch_lower) {
            ws.set_lower(v, std::max(ws.lower(v), entry.up.branch_lower));
            narrowed = true;
          }
          if (ws.lower(v) > ws.upper(v)) {
            out.rounding_infeasible = true;
            force                   = true;
            break;
          }
        }
        if (narrowed && !force) {
          const auto res = propagate(p, ws, {}, &plan);
          if (res.status == PropagationStatus::Infeasible) {
            out.rounding_infeasible = true;
            force                   = true;
          }
          drop_fixed();
          continue;
        }
        if (!force) {
          // No recorded force to exploit: fall through to the failure path.
          out.rounding_infeasible = true;
          force                   = true;
        }
        continue;
      }
      if (!recovery && !out.rounding_infeasible) {
        recovery = true;  // backtrack the bulk, switch to single-variable mode
        continue;
      }
      out.rounding_infeasible = true;
      // Keep the stuck variable at its first-draw value; repair may shift it.
      const int v      = take[0];
      const double val = clamp(pv0[0], p.var_lower[v], p.var_upper[v]);
      committed.push_back({v, val});
      ws.fix(v, val);
      drop_fixed();

      if (cfg.repair_enabled && out.repair_attempts < cfg.repair_attempt_cap &&
          !deadline.expired()) {
        out.repair_attempts++;
        if (auto rep = repair(p, committed, deadline, cfg, plan)) {
          committed = std::move(rep->values);
          ws        = std::move(rep->bounds);
          ws.clear_infeasible();
          out.rounding_infeasible = false;
          recovery                = false;
          drop_fixed();
        } else {
          force = true;
        }
      } else {
        force = true;
      }
      continue;
    }

    // Terminal phase: no propagation, no backtracking. Commit the candidate
    // vector that violates fewer rows under the fixed-value envelope.
    std::vector<int> take(unset.begin(), unset.begin() + bulk_size);
    auto [pv0, pv1] = generate_candidate_values(s, take, ws, rng, cfg.random_band);
    for (size_t j = 0; j < take.size(); ++j) {
      pv0[j] = clamp(pv0[j], p.var_lower[take[j]], p.var_upper[take[j]]);
      pv1[j] = clamp(pv1[j], p.var_lower[take[j]], p.var_upper[take[j]]);
    }
    const int viol0 = detail::count_envelope_violations(p, ws, take, pv0, acts, plan);
    const int viol1 = viol0 == 0
                          ? 1  // probe 0 already clean, keep it
                          : detail::count_envelope_violations(p, ws, take, pv1, acts, plan);
    const auto& pv = viol1 < viol0 ? pv1 : pv0;
    for (size_t j = 0; j < take.size(); ++j) {
      ws.fix(take[j], pv[j]);
      committed.push_back({take[j], pv[j]});
    }
    drop_fixed();
  }

  // Value extraction: fixed integer variables read their interval, leftovers
  // (time limit) fall back to nearest rounding inside the original bounds.
  std::vector<double> values = s.values;
  for (int i = 0; i < p.n_vars; ++i) {
    if (!p.is_integer[i]) {
      values[i] = clamp(values[i], p.var_lower[i], p.var_upper[i]);
      continue;
    }
    if (ws.fixed(i)) {
      values[i] = ws.lower(i);
    } else {
      values[i] = clamp(std::round(values[i]), p.var_lower[i], p.var_upper[i]);
    }
  }

  out.completed = unset.empty();
  for (int i = 0; i < p.n_vars; ++i) {
    if (p.is_integer[i] && ws.fixed(i)) out.set_count++;
  }

  const bool bounds_feasible = out.completed && !out.rounding_infeasible && !ws.infeasible();
  if (bounds_feasible) {
    out.point = lp_polish(p, values, cfg, deadline);
  } else {
    out.point = make_solution(p, values);
  }
  return out;
}

}  // namespace pulse
