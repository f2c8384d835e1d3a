/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pulse/common.hpp"
#include "pulse/parallel.hpp"
#include "pulse/problem.hpp"

namespace pulse {

// Variable bound intervals. Lower and upper bounds of variable i live at
// slots 2i and 2i+1 of one buffer so a tightening pass touches one cache
// line per variable.
class BoundsState {
 public:
  BoundsState() = default;
  explicit BoundsState(const ProblemDef& p) : n_(p.n_vars)
  {
    b_.resize(2 * n_);
    for (int i = 0; i < n_; ++i) {
      b_[2 * i]     = p.var_lower[i];
      b_[2 * i + 1] = p.var_upper[i];
    }
  }

  int n_vars() const { return n_; }
  double lower(int i) const { return b_[2 * i]; }
  double upper(int i) const { return b_[2 * i + 1]; }
  void set_lower(int i, double v) { b_[2 * i] = v; }
  void set_upper(int i, double v) { b_[2 * i + 1] = v; }
  void fix(int i, double v)
  {
    b_[2 * i]     = v;
    b_[2 * i + 1] = v;
  }
  bool fixed(int i) const { return b_[2 * i] == b_[2 * i + 1]; }
  double width(int i) const { return b_[2 * i + 1] - b_[2 * i]; }

  bool infeasible() const { return infeasible_; }
  void mark_infeasible() { infeasible_ = true; }
  void clear_infeasible() { infeasible_ = false; }

  // Componentwise tightest of the two states.
  void meet(const BoundsState& other)
  {
    for (int i = 0; i < n_; ++i) {
      b_[2 * i]     = std::max(b_[2 * i], other.b_[2 * i]);
      b_[2 * i + 1] = std::min(b_[2 * i + 1], other.b_[2 * i + 1]);
      if (b_[2 * i] > b_[2 * i + 1]) infeasible_ = true;
    }
  }

  bool operator==(const BoundsState& o) const
  {
    return n_ == o.n_ && b_ == o.b_ && infeasible_ == o.infeasible_;
  }

  const std::vector<double>& raw() const { return b_; }

 private:
  int n_ = 0;
  std::vector<double> b_;
  bool infeasible_ = false;
};

// Per-constraint activity envelope. Finite contributions are accumulated
// separately from the count of infinite contributors per direction, so a
// single infinite term can still be corrected away during tightening.
struct ActivityState {
  // slot 2k = finite part of the minimal activity, 2k+1 = maximal.
  std::vector<double> act;
  std::vector<int32_t> n_inf_min;
  std::vector<int32_t> n_inf_max;

  void resize(int n_cons)
  {
    act.assign(2 * n_cons, 0.0);
    n_inf_min.assign(n_cons, 0);
    n_inf_max.assign(n_cons, 0);
  }

  bool min_unbounded(int k) const { return n_inf_min[k] > 0; }
  bool max_unbounded(int k) const { return n_inf_max[k] > 0; }
  double min_activity(int k) const { return min_unbounded(k) ? -kInf : act[2 * k]; }
  double max_activity(int k) const { return max_unbounded(k) ? kInf : act[2 * k + 1]; }
  double min_finite_part(int k) const { return act[2 * k]; }
  double max_finite_part(int k) const { return act[2 * k + 1]; }
};

// Constraints (and, mirrored over the CSC view, variables) binned by
// ceil(log2(nnz)) so tasks inside a bin carry similar work.
struct WorkPlan {
  struct Bin {
    int size_class = 0;
    std::vector<int> items;
  };
  std::vector<Bin> row_bins;
  std::vector<Bin> var_bins;

  // nnz above which a row is split into fixed segments with a two-pass sum.
  static constexpr int kHeavyNnz = 16384;
  // nnz below which many rows share one task.
  static constexpr int kSmallNnz = 32;
};

inline int size_class_of(int nnz)
{
  if (nnz <= 1) return 0;
  int c = 0;
  int v = 1;
  while (v < nnz) {
    v <<= 1;
    ++c;
  }
  return c;  // ceil(log2(nnz))
}

inline WorkPlan build_work_plan(const ProblemDef& p)
{
  WorkPlan plan;
  auto fill = [](std::vector<WorkPlan::Bin>& bins, int n, auto nnz_of) {
    std::vector<std::vector<int>> by_class;
    for (int k = 0; k < n; ++k) {
      const int c = size_class_of(nnz_of(k));
      if (c >= static_cast<int>(by_class.size())) by_class.resize(c + 1);
      by_class[c].push_back(k);
    }
    for (int c = 0; c < static_cast<int>(by_class.size()); ++c) {
      if (by_class[c].empty()) continue;
      bins.push_back({c, std::move(by_class[c])});
    }
  };
  fill(plan.row_bins, p.n_cons, [&](int k) { return p.row_nnz(k); });
  fill(plan.var_bins, p.n_vars, [&](int i) { return p.col_nnz(i); });
  return plan;
}

namespace detail {

struct ActivityPart {
  double min_part = 0.0;
  double max_part = 0.0;
  int32_t inf_min = 0;
  int32_t inf_max = 0;
};

// Partial activity of entries [e_lo, e_hi) of row k under the given bounds.
inline ActivityPart activity_segment(const ProblemDef& p, const BoundsState& b, int k, int e_lo,
                                     int e_hi)
{
  const auto cols = p.row_cols(k);
  const auto vals = p.row_vals(k);
  ActivityPart part;
  for (int e = e_lo; e < e_hi; ++e) {
    const double a_ki = vals[e];
    const double lo   = b.lower(cols[e]);
    const double up   = b.upper(cols[e]);
    if (a_ki > 0.0) {
      if (lo == -kInf) ++part.inf_min; else part.min_part += a_ki * lo;
      if (up == kInf)  ++part.inf_max; else part.max_part += a_ki * up;
    } else {
      if (up == kInf)  ++part.inf_min; else part.min_part += a_ki * up;
      if (lo == -kInf) ++part.inf_max; else part.max_part += a_ki * lo;
    }
  }
  return part;
}

// Activity of one row. Segment boundaries are fixed, so the arithmetic tree
// (and therefore the bits of the result) does not depend on how rows are
// assigned to tasks and matches the split two-pass path for heavy rows.
inline void row_activity(const ProblemDef& p, const BoundsState& b, int k, ActivityState& a)
{
  const int n = p.row_nnz(k);
  double min_total = 0.0, max_total = 0.0;
  int32_t inf_min = 0, inf_max = 0;
  for (int s = 0; s < n; s += kSumSegment) {
    const auto part = activity_segment(p, b, k, s, std::min(n, s + kSumSegment));
    min_total += part.min_part;
    max_total += part.max_part;
    inf_min   += part.inf_min;
    inf_max   += part.inf_max;
  }
  a.act[2 * k]     = min_total;
  a.act[2 * k + 1] = max_total;
  a.n_inf_min[k]   = inf_min;
  a.n_inf_max[k]   = inf_max;
}

// Heavy rows: segments computed as independent tasks, combined in segment
// order by a second pass. Identical result to row_activity by construction.
inline void heavy_row_activity(const ProblemDef& p, const BoundsState& b, int k, ActivityState& a)
{
  const int n          = p.row_nnz(k);
  const int n_segments = (n + kSumSegment - 1) / kSumSegment;
  std::vector<ActivityPart> parts(n_segments);
  parallel_for(0, n_segments, [&](int s) {
    const int lo = s * kSumSegment;
    parts[s]     = activity_segment(p, b, k, lo, std::min(n, lo + kSumSegment));
  }, 1);
  double min_total = 0.0, max_total = 0.0;
  int32_t inf_min = 0, inf_max = 0;
  for (const auto& part : parts) {
    min_total += part.min_part;
    max_total += part.max_part;
    inf_min   += part.inf_min;
    inf_max   += part.inf_max;
  }
  a.act[2 * k]     = min_total;
  a.act[2 * k + 1] = max_total;
  a.n_inf_min[k]   = inf_min;
  a.n_inf_max[k]   = inf_max;
}

}  // namespace detail

// Recomputes activities for the given rows (all rows when `rows` is null).
// Parallel over rows; bounds are read-only during this phase. With a plan,
// full sweeps are scheduled by size bin: small rows many per task, medium
// rows one per task, heavy rows split across tasks with a two-pass sum.
inline void compute_activities(const ProblemDef& p, const BoundsState& b,
                               const std::vector<int>* rows, ActivityState& a,
                               const WorkPlan* plan = nullptr)
{
  if (static_cast<int>(a.n_inf_min.size()) != p.n_cons) a.resize(p.n_cons);
  if (rows != nullptr) {
    const auto& r = *rows;
    parallel_for(0, static_cast<int>(r.size()),
                 [&](int idx) { detail::row_activity(p, b, r[idx], a); }, 64);
    return;
  }
  if (plan == nullptr) {
    parallel_for(0, p.n_cons, [&](int k) { detail::row_activity(p, b, k, a); }, 64);
    return;
  }
  for (const auto& bin : plan->row_bins) {
    const int n = static_cast<int>(bin.items.size());
    const int max_nnz = 1 << bin.size_class;
    if (max_nnz > WorkPlan::kHeavyNnz) {
      for (int k : bin.items) detail::heavy_row_activity(p, b, k, a);
    } else {
      const int grain = max_nnz < WorkPlan::kSmallNnz ? 512 : 1;
      parallel_for(0, n, [&](int idx) { detail::row_activity(p, b, bin.items[idx], a); }, grain);
    }
  }
}

struct PropagationLimits {
  int max_rounds       = 64;
  double time_limit    = kInf;   // seconds
  double abs_threshold = 1e-7;   // continuous improvement floor
  double rel_threshold = 1e-4;   // relative to the interval width
  bool incremental     = true;   // re-propagate changed constraints only
};

enum class PropagationStatus { Tightened, Infeasible, Unchanged };

struct PropagationResult {
  PropagationStatus status = PropagationStatus::Unchanged;
  int rounds               = 0;
  int crossed_vars         = 0;  // variables with crossing bounds when Infeasible
};

namespace detail {

// A continuous bound move counts only when it clears the improvement
// threshold; integral tightenings always count.
inline bool counts_as_change(double improvement, bool integer, double width,
                             const PropagationLimits& lim)
{
  if (improvement <= 0.0) return false;
  if (improvement == kInf) return true;
  if (integer) return improvement >= 1.0 - 1e-9;
  double thr = lim.abs_threshold;
  if (is_finite(width)) thr = std::max(thr, lim.rel_threshold * width);
  return improvement > thr;
}

// Tightens the bounds of variable i from the activities of its rows.
// Returns 1 if a bound changed, -1 on crossing bounds, 0 otherwise.
inline int tighten_variable(const ProblemDef& p, BoundsState& b, const ActivityState& a, int i,
                            const PropagationLimits& lim)
{
  const auto rows = p.col_rows(i);
  const auto vals = p.col_vals(i);
  const double lo = b.lower(i);
  const double up = b.upper(i);
  double new_lo   = lo;
  double new_up   = up;
  const bool integer = p.is_integer[i] != 0;

  for (size_t e = 0; e < rows.size(); ++e) {
    const int k       = rows[e];
    const double a_ki = vals[e];

    // Against the row upper bound, via the minimal activity.
    const double g = p.cons_upper[k];
    if (is_finite(g)) {
      const bool my_inf = (a_ki > 0.0) ? (lo == -kInf) : (up == kInf);
      const int n_inf   = a.n_inf_min[k];
      double rest;
      bool usable = false;
      if (n_inf == 0) {
        rest   = a.min_finite_part(k) - (a_ki > 0.0 ? a_ki * lo : a_ki * up);
        usable = true;
      } else if (n_inf == 1 && my_inf) {
        rest   = a.min_finite_part(k);  // own infinite term excluded symbolically
        usable = true;
      } else {
        rest = 0.0;
      }
      if (usable) {
        const double cand = (g - rest) / a_ki;
        if (a_ki > 0.0) {
          new_up = std::min(new_up, integer ? floor_eps(cand) : cand);
        } else {
          new_lo = std::max(new_lo, integer ? ceil_eps(cand) : cand);
        }
      }
    }

    // Against the row lower bound, via the maximal activity (mirror rule).
    const double h = p.cons_lower[k];
    if (is_finite(h)) {
      const bool my_inf = (a_ki > 0.0) ? (up == kInf) : (lo == -kInf);
      const int n_inf   = a.n_inf_max[k];
      double rest;
      bool usable = false;
      if (n_inf == 0) {
        rest   = a.max_finite_part(k) - (a_ki > 0.0 ? a_ki * up : a_ki * lo);
        usable = true;
      } else if (n_inf == 1 && my_inf) {
        rest   = a.max_finite_part(k);
        usable = true;
      } else {
        rest = 0.0;
      }
      if (usable) {
        const double cand = (h - rest) / a_ki;
        if (a_ki > 0.0) {
          new_lo = std::max(new_lo, integer ? ceil_eps(cand) : cand);
        } else {
          new_up = std::min(new_up, integer ? floor_eps(cand) : cand);
        }
      }
    }
  }

  if (new_lo > new_up + 1e-9) return -1;
  if (new_lo > new_up) new_lo = new_up;  // numeric hair-crossing collapses

  const double width = up - lo;
  bool changed       = false;
  const double lo_improvement = (lo == -kInf && new_lo > -kInf) ? kInf : new_lo - lo;
  if (counts_as_change(lo_improvement, integer, width, lim)) {
    b.set_lower(i, new_lo);
    changed = true;
  }
  const double up_improvement = (up == kInf && new_up < kInf) ? kInf : up - new_up;
  if (counts_as_change(up_improvement, integer, width, lim)) {
    b.set_upper(i, new_up);
    changed = true;
  }
  return changed ? 1 : 0;
}

}  // namespace detail

// One tightening sweep over `vars` (all variables when null). Activities must
// be current for every row touching the swept variables. Reads activities,
// writes bounds; each variable's slots are written by exactly one task.
// Returns the changed variables; crossings mark the state Infeasible.
inline std::vector<int> tighten_bounds(const ProblemDef& p, BoundsState& b,
                                       const ActivityState& a, const std::vector<int>* vars,
                                       const PropagationLimits& lim, int* crossed_out = nullptr,
                                       const WorkPlan* plan = nullptr)
{
  std::vector<int8_t> result(p.n_vars, 0);
  if (vars != nullptr) {
    const auto& v = *vars;
    parallel_for(0, static_cast<int>(v.size()), [&](int idx) {
      result[v[idx]] = static_cast<int8_t>(detail::tighten_variable(p, b, a, v[idx], lim));
    }, 128);
  } else if (plan != nullptr) {
    for (const auto& bin : plan->var_bins) {
      const int grain = (1 << bin.size_class) < WorkPlan::kSmallNnz ? 512 : 1;
      parallel_for(0, static_cast<int>(bin.items.size()), [&](int idx) {
        const int i = bin.items[idx];
        result[i]   = static_cast<int8_t>(detail::tighten_variable(p, b, a, i, lim));
      }, grain);
    }
  } else {
    parallel_for(0, p.n_vars, [&](int i) {
      result[i] = static_cast<int8_t>(detail::tighten_variable(p, b, a, i, lim));
    }, 128);
  }

  std::vector<int> changed;
  int crossed = 0;
  for (int i = 0; i < p.n_vars; ++i) {
    if (result[i] > 0) changed.push_back(i);
    if (result[i] < 0) ++crossed;
  }
  if (crossed > 0) b.mark_infeasible();
  if (crossed_out) *crossed_out = crossed;
  return changed;
}

// Iterates activity computation and bound tightening to a fixpoint (up to the
// improvement threshold) or until a limit stops it. The first round computes
// every activity; later rounds only revisit constraints containing a changed
// variable. Bounds only ever tighten.
inline PropagationResult propagate(const ProblemDef& p, BoundsState& b,
                                   const PropagationLimits& lim = {},
                                   const WorkPlan* plan = nullptr)
{
  PropagationResult res;
  if (b.infeasible()) {
    res.status = PropagationStatus::Infeasible;
    return res;
  }
  Timer timer;
  ActivityState acts;
  acts.resize(p.n_cons);

  std::vector<int> dirty_rows;   // rows to recompute this round; empty = all
  std::vector<int> dirty_vars;   // variables to tighten this round; empty = all
  std::vector<uint8_t> row_mark(p.n_cons, 0);
  std::vector<uint8_t> var_mark(p.n_vars, 0);
  bool first = true;
  bool any_change = false;

  while (res.rounds < lim.max_rounds) {
    if (timer.elapsed_sec() >= lim.time_limit) break;
    ++res.rounds;

    compute_activities(p, b, first || !lim.incremental ? nullptr : &dirty_rows, acts, plan);

    int crossed = 0;
    const std::vector<int>* sweep =
        (first || !lim.incremental) ? nullptr : &dirty_vars;
    std::vector<int> changed = tighten_bounds(p, b, acts, sweep, lim, &crossed, plan);
    if (b.infeasible()) {
      res.status       = PropagationStatus::Infeasible;
      res.crossed_vars = crossed;
      return res;
    }
    if (changed.empty()) break;
    any_change = true;

    // Rows containing a changed variable drive the next round; variables in
    // those rows are the tightening candidates.
    std::fill(row_mark.begin(), row_mark.end(), 0);
    std::fill(var_mark.begin(), var_mark.end(), 0);
    dirty_rows.clear();
    dirty_vars.clear();
    for (int i : changed) {
      for (int k : p.col_rows(i)) {
        if (!row_mark[k]) {
          row_mark[k] = 1;
          dirty_rows.push_back(k);
        }
      }
    }
    std::sort(dirty_rows.begin(), dirty_rows.end());
    for (int k : dirty_rows) {
      for (int i : p.row_cols(k)) {
        if (!var_mark[i]) {
          var_mark[i] = 1;
          dirty_vars.push_back(i);
        }
      }
    }
    std::sort(dirty_vars.begin(), dirty_vars.end());
    first = false;
    if (dirty_rows.empty()) break;
  }

  res.status = any_change ? PropagationStatus::Tightened : PropagationStatus::Unchanged;
  return res;
}

}  // namespace pulse
