/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pulse/localsearch.hpp"
#include "pulse/lp.hpp"
#include "pulse/probing.hpp"
#include "pulse/rounding.hpp"

namespace pulse {

enum class RoundingMode { Nearest, FixProp };

struct FpConfig {
  double time_limit_sec = 600.0;
  uint64_t seed         = 0;
  int cycle_window      = 5;
  RoundingMode rounding = RoundingMode::FixProp;
  bool repair_enabled   = false;
  bool two_stage        = false;
  // Objective blending of the projection LP; decays geometrically, 0 disables.
  double obj_fp_alpha = 0.1;
  double alpha_decay  = 0.9;
  bool first_feasible_stop = false;
  double feas_tol          = kFeasTol;

  double projection_budget_sec = 1.0;
  int projection_max_iters     = 100000;
  double projection_tol        = 1e-4;
  double probing_budget_sec    = 5.0;

  // Local-search budgets: a wall share of the preceding rounding plus a fixed
  // iteration cap, so short runs terminate on iterations, not the clock.
  int64_t ls_probe_iters     = 20000;
  int64_t ls_bootstrap_iters = 100000;
  double ls_probe_min_sec    = 0.02;

  // Optional early stop once the incumbent reaches this objective.
  std::optional<double> target_objective;
};

struct FpStats {
  bool feasible    = false;
  double objective = 0.0;
  double max_violation = 0.0;
  double time_to_first_feasible = -1.0;  // negative = never
  double total_time_sec = 0.0;
  int fp_iterations = 0;
  int projections   = 0;
  int cuts_added    = 0;
  int cycles_broken = 0;
};

struct FpOutcome {
  SolutionVector best;  // evaluated against the original problem
  FpStats stats;
};

enum class FpStage { Bootstrap, Pumping, Improving };

// Feasibility-pump trajectory state.
struct FpState {
  std::vector<double> point;         // current integer point (full vector)
  std::vector<double> projection;    // last projection point
  std::vector<double> proj_history;  // L1 distances per completed projection
  std::optional<SolutionVector> incumbent;
  FpStage stage = FpStage::Bootstrap;
  int iteration = 0;
  int cuts_added = 0;
  std::vector<double> ls_weights;  // lagrangian weights shared across LS calls
  double ls_obj_weight = 1.0;
};

// Stagnation test: true when the latest projection distance improves the
// average of the previous N distances by no more than 10% of that average.
inline bool cycle_detected(const std::vector<double>& history, int window)
{
  const int n = static_cast<int>(history.size());
  if (n < window + 1) return false;
  double avg = 0.0;
  for (int i = n - 1 - window; i < n - 1; ++i) avg += history[i];
  avg /= window;
  const double improvement = avg - history.back();
  return improvement <= 0.10 * avg;
}

// Appends the cutting plane c'x <= z_best - delta perpendicular to the
// objective. Delta is 1 when the objective restricted to its support is
// purely integral, else a relative epsilon.
inline ProblemDef add_objective_cut(const ProblemDef& p, double z_best, int cut_index)
{
  bool integral = true;
  std::vector<std::pair<int, double>> support;
  for (int i = 0; i < p.n_vars; ++i) {
    const double c = p.obj_coeffs[i];
    if (c == 0.0) continue;
    support.push_back({i, c});
    if (!is_integral(c) || !p.is_integer[i]) integral = false;
  }
  const double delta = integral ? 1.0 : std::max(1e-6, 1e-4 * (1.0 + std::abs(z_best)));
  return append_rows(p, {"objcut" + std::to_string(cut_index)}, {-kInf}, {z_best - delta},
                     {support});
}

namespace fpdetail {

inline std::vector<double> nearest_round(const ProblemDef& p, const std::vector<double>& x)
{
  std::vector<double> out(p.n_vars);
  for (int i = 0; i < p.n_vars; ++i) {
    double v = clamp(x[i], p.var_lower[i], p.var_upper[i]);
    if (p.is_integer[i]) v = clamp(std::round(v), p.var_lower[i], p.var_upper[i]);
    out[i] = v;
  }
  return out;
}

struct Driver {
  const ProblemDef& original;
  FpConfig cfg;
  Deadline deadline;
  Rng rng;
  ProblemDef working;
  std::optional<ProbingCache> cache;
  FpState state;
  FpStats stats;
  Timer clock;
  std::vector<double> best_effort;  // least-violating point seen, original bounds
  double best_effort_viol = kInf;
  double last_cut_obj     = kInf;
  bool stop               = false;

  Driver(const ProblemDef& p, const FpConfig& c)
      : original(p), cfg(c), deadline(c.time_limit_sec), rng(c.seed), working(p)
  {
    state.ls_weights.assign(p.n_cons, 1.0);
  }

  void track(const std::vector<double>& values)
  {
    const auto s = make_solution(original, values, cfg.feas_tol);
    if (s.max_violation < best_effort_viol) {
      best_effort_viol = s.max_violation;
      best_effort      = values;
    }
  }

  // Verifies on the original problem and keeps strictly improving incumbents.
  bool record(const std::vector<double>& values)
  {
    const auto s = make_solution(original, values, cfg.feas_tol);
    if (!check_feasibility(original, s, cfg.feas_tol).feasible) return false;
    if (state.incumbent && s.objective >= state.incumbent->objective) return false;
    if (!state.incumbent) stats.time_to_first_feasible = clock.elapsed_sec();
    state.incumbent = s;
    state.stage     = FpStage::Improving;
    if (cfg.first_feasible_stop) stop = true;
    if (cfg.target_objective && s.objective <= *cfg.target_objective + 1e-9) stop = true;
    return true;
  }

  LsLimits ls_limits(double rounding_sec, int64_t iters) const
  {
    LsLimits lim;
    lim.max_iters = iters;
    lim.time_sec  = std::min(std::max(0.2 * rounding_sec, cfg.ls_probe_min_sec),
                             deadline.remaining_sec());
    return lim;
  }

  LsResult probe_ls(const std::vector<double>& start, const LsLimits& lim)
  {
    state.ls_weights.resize(working.n_cons, 1.0);
    const auto res = run_local_search(working, make_solution(working, start, cfg.feas_tol), lim,
                                      rng, LsConfig{}, &state.ls_weights, state.ls_obj_weight);
    state.ls_weights    = res.weights;
    state.ls_obj_weight = res.obj_weight;
    return res;
  }

  // Rounds a fractional point with the configured heuristic; returns the
  // values and the wall seconds the stage took.
  std::pair<std::vector<double>, double> round_point(const std::vector<double>& x)
  {
    Timer t;
    if (cfg.rounding == RoundingMode::Nearest) {
      return {nearest_round(working, x), t.elapsed_sec()};
    }
    RoundingConfig rc;
    rc.repair_enabled  = cfg.repair_enabled;
    const auto outcome = propagation_round(working, make_solution(working, x, cfg.feas_tol),
                                           cache ? &*cache : nullptr, deadline, rng, rc);
    return {outcome.point.values, t.elapsed_sec()};
  }

  void bootstrap_stage(const std::vector<double>* start_hint)
  {
    state.stage = FpStage::Bootstrap;

    std::vector<double> lp_point;
    if (start_hint) {
      lp_point = *start_hint;
    } else {
      LpBudget budget;
      budget.time_sec  = std::min(cfg.projection_budget_sec, deadline.remaining_sec());
      budget.max_iters = cfg.projection_max_iters;
      const auto relax = solve(LpInstance::relax(working), std::nullopt, budget,
                               cfg.projection_tol);
      lp_point = relax.primal;
    }

    auto [rounded, t_round] = round_point(lp_point);
    track(rounded);
    record(rounded);

    const auto ls1 = probe_ls(rounded, ls_limits(t_round, cfg.ls_bootstrap_iters));
    track(ls1.min_violation_point.values);
    if (ls1.feasible) record(ls1.best.values);

    std::vector<double> trajectory = ls1.feasible ? ls1.best.values
                                                  : ls1.min_violation_point.values;
    if (!state.incumbent && !stop && !deadline.expired()) {
      // All-zero fallback exploits mostly-zero structure.
      std::vector<double> zero(working.n_vars, 0.0);
      zero = nearest_round(working, zero);
      const auto ls2 = probe_ls(zero, ls_limits(t_round, cfg.ls_bootstrap_iters));
      track(ls2.min_violation_point.values);
      if (ls2.feasible) {
        record(ls2.best.values);
        trajectory = ls2.best.values;
      } else if (ls2.min_violation_point.max_violation <
                 make_solution(working, trajectory, cfg.feas_tol).max_violation) {
        trajectory = ls2.min_violation_point.values;
      }
    }
    if (state.incumbent) trajectory = state.incumbent->values;
    state.point = nearest_round(working, trajectory);
    if (!state.incumbent) state.stage = FpStage::Pumping;
  }

  void maybe_add_cut()
  {
    if (!state.incumbent) return;
    const double z = state.incumbent->objective;
    if (z >= last_cut_obj) return;
    working = add_objective_cut(working, z, state.cuts_added);
    state.cuts_added++;
    stats.cuts_added++;
    last_cut_obj = z;
    state.ls_weights.resize(working.n_cons, 1.0);
  }

  FpOutcome run(const std::vector<double>* start_hint = nullptr)
  {
    if (cfg.rounding == RoundingMode::FixProp) {
      cache = build_cache(working, std::min(cfg.probing_budget_sec,
                                            std::max(0.0, deadline.remaining_sec())));
    }
    bootstrap_stage(start_hint);

    std::optional<LpResult> prev_res;
    std::optional<ProjectionMap> prev_map;
    double alpha = cfg.obj_fp_alpha;

    while (!stop && !deadline.expired()) {
      state.iteration++;
      stats.fp_iterations++;

      maybe_add_cut();

      // Projection onto the (possibly cut) polytope, warm started.
      auto [inst, map] = build_projection_lp(working, make_solution(working, state.point,
                                                                    cfg.feas_tol),
                                             alpha);
      std::optional<LpWarmStart> warm;
      if (prev_res && prev_map) warm = transfer_warm_start(*prev_res, *prev_map, map);
      LpBudget budget;
      budget.time_sec  = std::min(cfg.projection_budget_sec, deadline.remaining_sec());
      budget.max_iters = cfg.projection_max_iters;
      auto res = solve(inst, warm, budget, cfg.projection_tol);
      stats.projections++;
      alpha *= cfg.alpha_decay;

      state.projection.assign(res.primal.begin(), res.primal.begin() + working.n_vars);
      double dist = 0.0;
      for (int i = 0; i < working.n_vars; ++i) {
        if (working.is_integer[i]) dist += std::abs(state.projection[i] - state.point[i]);
      }
      state.proj_history.push_back(dist);
      prev_res = std::move(res);
      prev_map = std::move(map);

      // Distance zero: the projection itself is integral, a feasible point.
      if (dist <= 1e-9) {
        RoundingConfig rc;
        const auto polished =
            lp_polish(working, nearest_round(working, state.projection), rc, deadline);
        track(polished.values);
        if (record(polished.values)) {
          state.point = nearest_round(working, state.incumbent->values);
          continue;
        }
      }
      if (stop || deadline.expired()) break;

      // Round every integer variable from the projected point.
      auto [rounded, t_round] = round_point(state.projection);
      track(rounded);
      const bool rounded_feasible =
          check_feasibility(working, make_solution(working, rounded, cfg.feas_tol),
                            cfg.feas_tol)
              .feasible;
      if (rounded_feasible) record(rounded);
      if (stop || deadline.expired()) break;

      // Local search probe around the rounded point, 20% of the rounding time.
      const auto probe = probe_ls(rounded, ls_limits(t_round, cfg.ls_probe_iters));
      track(probe.min_violation_point.values);
      bool found = rounded_feasible;
      if (probe.feasible) {
        record(probe.best.values);
        if (check_feasibility(original, probe.best, cfg.feas_tol).feasible) found = true;
      }
      if (stop) break;

      if (found && state.incumbent) {
        // Continue in improvement mode from the best point.
        state.point = nearest_round(working, state.incumbent->values);
        continue;
      }

      // Infeasible probe: discard it, keep the pump trajectory.
      if (cycle_detected(state.proj_history, cfg.cycle_window)) {
        stats.cycles_broken++;
        const auto esc = probe_ls(state.point, ls_limits(t_round, cfg.ls_probe_iters));
        track(esc.min_violation_point.values);
        if (esc.feasible && record(esc.best.values)) {
          state.point = nearest_round(working, state.incumbent->values);
        } else {
          state.point = nearest_round(working, esc.min_violation_point.values);
        }
      } else {
        state.point = nearest_round(working, state.projection);
      }
    }

    FpOutcome out;
    if (state.incumbent) {
      out.best           = *state.incumbent;
      stats.feasible     = true;
    } else if (!best_effort.empty()) {
      out.best = make_solution(original, best_effort, cfg.feas_tol);
    } else {
      out.best = make_solution(original, nearest_round(original, std::vector<double>(
                                             original.n_vars, 0.0)),
                               cfg.feas_tol);
    }
    stats.objective      = out.best.objective;
    stats.max_violation  = out.best.max_violation;
    stats.total_time_sec = clock.elapsed_sec();
    out.stats            = stats;
    return out;
  }
};

}  // namespace fpdetail

// Bootstrap only: approximate relaxation, rounding, local search, and the
// all-zero fallback. Exposed for inspection; fused_heuristic runs it first.
inline std::pair<FpState, std::optional<SolutionVector>> bootstrap(const ProblemDef& p,
                                                                   const FpConfig& cfg)
{
  fpdetail::Driver driver(p, cfg);
  if (cfg.rounding == RoundingMode::FixProp) {
    driver.cache = build_cache(p, std::min(cfg.probing_budget_sec,
                                           std::max(0.0, driver.deadline.remaining_sec())));
  }
  driver.bootstrap_stage(nullptr);
  return {driver.state, driver.state.incumbent};
}

// The fused driver: bootstrap, then the pump loop of projection, full
// rounding, local-search probing, cycle breaking and objective cuts.
inline FpOutcome fused_heuristic(const ProblemDef& p, const FpConfig& cfg)
{
  if (cfg.two_stage) {
    bool has_general_int = false;
    for (int i = 0; i < p.n_vars; ++i) {
      if (p.is_integer[i] && p.var_upper[i] - p.var_lower[i] != 1.0) has_general_int = true;
    }
    if (has_general_int) {
      // Stage one pumps with only the binaries integral.
      ProblemBuilder b;
      b.set_name(p.name);
      b.set_objective_name(p.objective_name);
      for (int i = 0; i < p.n_vars; ++i) {
        const bool binary = p.is_integer[i] && p.var_upper[i] - p.var_lower[i] == 1.0;
        b.add_var(p.var_names[i], p.var_lower[i], p.var_upper[i], binary, p.obj_coeffs[i]);
      }
      for (int k = 0; k < p.n_cons; ++k) {
        b.add_row(p.cons_names[k], p.cons_lower[k], p.cons_upper[k]);
        const auto cols = p.row_cols(k);
        const auto vals = p.row_vals(k);
        for (size_t e = 0; e < cols.size(); ++e) b.add_entry(k, cols[e], vals[e]);
      }
      const ProblemDef relaxed = b.build();

      FpConfig stage1          = cfg;
      stage1.two_stage          = false;
      stage1.first_feasible_stop = true;
      stage1.time_limit_sec      = 0.3 * cfg.time_limit_sec;
      Timer stage_clock;
      const auto partial = fused_heuristic(relaxed, stage1);

      FpConfig stage2     = cfg;
      stage2.two_stage     = false;
      stage2.time_limit_sec = std::max(0.0, cfg.time_limit_sec - stage_clock.elapsed_sec());
      fpdetail::Driver driver(p, stage2);
      return driver.run(&partial.best.values);
    }
  }
  fpdetail::Driver driver(p, cfg);
  return driver.run();
}

}  // namespace pulse
