/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "pulse/parallel.hpp"
#include "pulse/problem.hpp"

namespace pulse {

// LP relaxation data: same sparse layout as ProblemDef, integrality dropped.
struct LpInstance {
  int n_vars = 0;
  int n_rows = 0;
  std::vector<double> obj;
  std::vector<int> row_start, row_col;
  std::vector<double> row_val;
  std::vector<int> col_start, col_row;
  std::vector<double> col_val;
  std::vector<double> row_lower, row_upper;
  std::vector<double> var_lower, var_upper;

  static LpInstance relax(const ProblemDef& p)
  {
    LpInstance s;
    s.n_vars    = p.n_vars;
    s.n_rows    = p.n_cons;
    s.obj       = p.obj_coeffs;
    s.row_start = p.row_start;
    s.row_col   = p.row_col;
    s.row_val   = p.row_val;
    s.col_start = p.col_start;
    s.col_row   = p.col_row;
    s.col_val   = p.col_val;
    s.row_lower = p.cons_lower;
    s.row_upper = p.cons_upper;
    s.var_lower = p.var_lower;
    s.var_upper = p.var_upper;
    return s;
  }
};

enum class LpStatus { Optimal, Approximate, TimeLimit, InfeasibleSignal };

struct LpResult {
  std::vector<double> primal;
  std::vector<double> dual;
  LpStatus status = LpStatus::Approximate;
  double primal_residual = 0.0;  // max row violation of the reported primal
  double dual_residual   = 0.0;  // max reduced-cost cone violation
  double gap             = 0.0;  // |primal obj - dual obj| / (1 + |p| + |d|)
  double primal_obj      = 0.0;
  double dual_obj        = 0.0;
  int iterations         = 0;
};

struct LpBudget {
  double time_sec = 1.0;
  int max_iters   = 100000;
};

struct LpWarmStart {
  std::vector<double> primal;
  std::vector<double> dual;
};

namespace lpdetail {

inline void spmv_rows(const LpInstance& s, const std::vector<double>& x, std::vector<double>& out)
{
  parallel_for(0, s.n_rows, [&](int k) {
    const int lo = s.row_start[k], hi = s.row_start[k + 1];
    double total = 0.0;
    for (int seg = lo; seg < hi; seg += kSumSegment) {
      const int end = std::min(hi, seg + kSumSegment);
      double part   = 0.0;
      for (int e = seg; e < end; ++e) part += s.row_val[e] * x[s.row_col[e]];
      total += part;
    }
    out[k] = total;
  }, 128);
}

inline void spmv_cols(const LpInstance& s, const std::vector<double>& y, std::vector<double>& out)
{
  parallel_for(0, s.n_vars, [&](int i) {
    const int lo = s.col_start[i], hi = s.col_start[i + 1];
    double total = 0.0;
    for (int seg = lo; seg < hi; seg += kSumSegment) {
      const int end = std::min(hi, seg + kSumSegment);
      double part   = 0.0;
      for (int e = seg; e < end; ++e) part += s.col_val[e] * y[s.col_row[e]];
      total += part;
    }
    out[i] = total;
  }, 128);
}

// Spectral norm estimate by power iteration on A'A, inflated for step safety.
inline double matrix_norm_estimate(const LpInstance& s)
{
  if (s.n_rows == 0 || s.n_vars == 0) return 0.0;
  std::vector<double> v(s.n_vars, 1.0 / std::sqrt(double(s.n_vars)));
  std::vector<double> u(s.n_rows), w(s.n_vars);
  double lambda = 0.0;
  for (int it = 0; it < 30; ++it) {
    spmv_rows(s, v, u);
    spmv_cols(s, u, w);
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-300) return 0.0;
    lambda = norm;  // approaches lambda_max(A'A)
    for (int i = 0; i < s.n_vars; ++i) v[i] = w[i] / norm;
  }
  return std::sqrt(lambda) * 1.05;
}

struct KktInfo {
  double primal_res = 0.0;
  double dual_res   = 0.0;
  double gap        = 0.0;
  double primal_obj = 0.0;
  double dual_obj   = 0.0;
  double x_norm     = 0.0;
  double score      = kInf;  // max of the relative criteria
};

inline KktInfo evaluate_kkt(const LpInstance& s, const std::vector<double>& x,
                            const std::vector<double>& y, std::vector<double>& ax,
                            std::vector<double>& aty)
{
  KktInfo info;
  spmv_rows(s, x, ax);
  spmv_cols(s, y, aty);

  double rhs_scale = 0.0;
  for (int k = 0; k < s.n_rows; ++k) {
    double v = 0.0;
    if (is_finite(s.row_upper[k])) {
      v         = std::max(v, ax[k] - s.row_upper[k]);
      rhs_scale = std::max(rhs_scale, std::abs(s.row_upper[k]));
    }
    if (is_finite(s.row_lower[k])) {
      v         = std::max(v, s.row_lower[k] - ax[k]);
      rhs_scale = std::max(rhs_scale, std::abs(s.row_lower[k]));
    }
    info.primal_res = std::max(info.primal_res, v);
  }

  double obj_scale = 0.0;
  KahanAccumulator pobj, dobj;
  for (int i = 0; i < s.n_vars; ++i) {
    pobj.add(s.obj[i] * x[i]);
    obj_scale = std::max(obj_scale, std::abs(s.obj[i]));
    info.x_norm = std::max(info.x_norm, std::abs(x[i]));

    const double r = s.obj[i] + aty[i];
    const bool lo_fin = is_finite(s.var_lower[i]);
    const bool hi_fin = is_finite(s.var_upper[i]);
    double viol = 0.0;
    double term = 0.0;
    if (r > 0.0) {
      if (lo_fin) term = r * s.var_lower[i]; else viol = r;
    } else if (r < 0.0) {
      if (hi_fin) term = r * s.var_upper[i]; else viol = -r;
    }
    info.dual_res = std::max(info.dual_res, viol);
    dobj.add(term);
  }
  // Row contribution of the dual objective, -sup_{s in [cl,cu]} y_k s.
  // Positive duals pair with the row upper bound under this convention;
  // sign-infeasible parts count as dual residual instead of poisoning the
  // value.
  for (int k = 0; k < s.n_rows; ++k) {
    const double yk = y[k];
    if (yk > 0.0) {
      if (is_finite(s.row_upper[k])) {
        dobj.add(-yk * s.row_upper[k]);
      } else {
        info.dual_res = std::max(info.dual_res, yk);
      }
    } else if (yk < 0.0) {
      if (is_finite(s.row_lower[k])) {
        dobj.add(-yk * s.row_lower[k]);
      } else {
        info.dual_res = std::max(info.dual_res, -yk);
      }
    }
  }

  info.primal_obj = pobj.value();
  info.dual_obj   = dobj.value();
  info.gap = std::abs(info.primal_obj - info.dual_obj) /
             (1.0 + std::abs(info.primal_obj) + std::abs(info.dual_obj));
  const double pr = info.primal_res / (1.0 + rhs_scale);
  const double dr = info.dual_res / (1.0 + obj_scale);
  info.score      = std::max({pr, dr, info.gap});
  return info;
}

}  // namespace lpdetail

// Restarted primal-dual hybrid gradient with adaptive primal weight.
// Steps satisfy tau * sigma * ||A||^2 <= 1; restarts jump to the better of
// the current and the averaged iterate once its score halves. Termination at
// tol on (primal residual, dual residual, relative gap) reports Optimal;
// otherwise the best iterate seen is returned with a budget status.
inline LpResult solve(const LpInstance& s, const std::optional<LpWarmStart>& warm,
                      const LpBudget& budget, double tol)
{
  if (warm) {
    if (static_cast<int>(warm->primal.size()) != s.n_vars ||
        static_cast<int>(warm->dual.size()) != s.n_rows) {
      throw std::invalid_argument("warm start dimension mismatch");
    }
  }
  Timer timer;
  const double norm_a = lpdetail::matrix_norm_estimate(s);
  const double safe_a = std::max(norm_a, 1e-8);

  std::vector<double> x(s.n_vars, 0.0), y(s.n_rows, 0.0);
  for (int i = 0; i < s.n_vars; ++i) {
    double v = warm ? warm->primal[i] : 0.0;
    x[i]     = clamp(v, s.var_lower[i], s.var_upper[i]);
  }
  if (warm) y = warm->dual;

  std::vector<double> x_bar = x, x_next(s.n_vars), ax(s.n_rows), aty(s.n_vars);
  std::vector<double> x_sum(s.n_vars, 0.0), y_sum(s.n_rows, 0.0);
  std::vector<double> x_restart = x, y_restart = y;
  std::vector<double> best_x = x, best_y = y;

  double omega = 1.0;
  double best_score = kInf;
  double restart_score = kInf;
  int avg_count = 0;
  int iter = 0;
  LpStatus status = LpStatus::Approximate;
  constexpr int kCheckEvery = 16;

  std::vector<double> x_avg(s.n_vars), y_avg(s.n_rows);
  auto consider = [&](const std::vector<double>& cx, const std::vector<double>& cy,
                      const lpdetail::KktInfo& info) {
    if (info.score < best_score) {
      best_score = info.score;
      best_x     = cx;
      best_y     = cy;
    }
  };

  for (;;) {
    if (iter % kCheckEvery == 0 || iter >= budget.max_iters) {
      const auto info = lpdetail::evaluate_kkt(s, x, y, ax, aty);
      consider(x, y, info);
      if (info.x_norm > 1e12) {
        status = LpStatus::InfeasibleSignal;
        break;
      }
      lpdetail::KktInfo avg_info;
      bool have_avg = false;
      if (avg_count > 0) {
        for (int i = 0; i < s.n_vars; ++i) x_avg[i] = x_sum[i] / avg_count;
        for (int k = 0; k < s.n_rows; ++k) y_avg[k] = y_sum[k] / avg_count;
        avg_info = lpdetail::evaluate_kkt(s, x_avg, y_avg, ax, aty);
        consider(x_avg, y_avg, avg_info);
        have_avg = true;
      }
      if (best_score <= tol) {
        status = LpStatus::Optimal;
        break;
      }
      if (iter >= budget.max_iters) {
        status = LpStatus::Approximate;
        break;
      }
      if (timer.elapsed_sec() >= budget.time_sec) {
        status = LpStatus::TimeLimit;
        break;
      }

      // Restart to the better of (current, average) when its score halved.
      const bool avg_better = have_avg && avg_info.score < info.score;
      const double cand     = avg_better ? avg_info.score : info.score;
      const int since       = avg_count;
      if ((cand <= 0.5 * restart_score && since >= kCheckEvery) || since >= 1024) {
        if (avg_better) {
          x = x_avg;
          y = y_avg;
        }
        // Primal weight balancing from the movement since the last restart.
        double dx = 0.0, dy = 0.0;
        for (int i = 0; i < s.n_vars; ++i) dx += (x[i] - x_restart[i]) * (x[i] - x_restart[i]);
        for (int k = 0; k < s.n_rows; ++k) dy += (y[k] - y_restart[k]) * (y[k] - y_restart[k]);
        if (dx > 1e-20 && dy > 1e-20) {
          omega = std::exp(0.5 * std::log(std::sqrt(dy / dx)) + 0.5 * std::log(omega));
          omega = clamp(omega, 1e-4, 1e4);
        }
        x_bar = x;
        std::fill(x_sum.begin(), x_sum.end(), 0.0);
        std::fill(y_sum.begin(), y_sum.end(), 0.0);
        avg_count     = 0;
        restart_score = cand;
        x_restart     = x;
        y_restart     = y;
      }
    }

    const double tau   = omega / safe_a;
    const double sigma = 1.0 / (omega * safe_a);

    // Dual ascent on y + sigma * A x_bar, prox of the row-interval support.
    lpdetail::spmv_rows(s, x_bar, ax);
    parallel_for(0, s.n_rows, [&](int k) {
      const double v    = y[k] + sigma * ax[k];
      const double proj = clamp(v / sigma, s.row_lower[k], s.row_upper[k]);
      y[k]              = v - sigma * proj;
    }, 512);

    // Primal descent with over-relaxation memory.
    lpdetail::spmv_cols(s, y, aty);
    parallel_for(0, s.n_vars, [&](int i) {
      const double v = x[i] - tau * (s.obj[i] + aty[i]);
      x_next[i]      = clamp(v, s.var_lower[i], s.var_upper[i]);
      x_bar[i]       = 2.0 * x_next[i] - x[i];
    }, 512);
    std::swap(x, x_next);

    for (int i = 0; i < s.n_vars; ++i) x_sum[i] += x[i];
    for (int k = 0; k < s.n_rows; ++k) y_sum[k] += y[k];
    ++avg_count;
    ++iter;
  }

  LpResult res;
  res.primal     = std::move(best_x);
  res.dual       = std::move(best_y);
  res.status     = status;
  res.iterations = iter;
  const auto info = lpdetail::evaluate_kkt(s, res.primal, res.dual, ax, aty);
  res.primal_residual = info.primal_res;
  res.dual_residual   = info.dual_res;
  res.gap             = info.gap;
  res.primal_obj      = info.primal_obj;
  res.dual_obj        = info.dual_obj;
  return res;
}

// Index bookkeeping for the projection LP: original variables first, then one
// distance variable per integer variable; original rows first, then the two
// distance rows (x - d <= t, x + d >= t) per integer variable.
struct ProjectionMap {
  int n_orig_vars = 0;
  int n_orig_rows = 0;
  std::vector<int> int_vars;     // integer variable ids, in order
  std::vector<double> targets;   // target value per entry of int_vars
};

// L1 projection of the integer variables onto the polytope:
//   minimize sum_i d_i  (+ alpha * c'x / ||c||_1 when alpha > 0)
//   s.t. original rows,  d_i >= x_i - t_i,  d_i >= t_i - x_i,  d_i >= 0.
inline std::pair<LpInstance, ProjectionMap> build_projection_lp(const ProblemDef& p,
                                                                const SolutionVector& target,
                                                                double alpha = 0.0)
{
  ProjectionMap map;
  map.n_orig_vars = p.n_vars;
  map.n_orig_rows = p.n_cons;
  for (int i = 0; i < p.n_vars; ++i) {
    if (p.is_integer[i]) {
      map.int_vars.push_back(i);
      map.targets.push_back(target.values[i]);
    }
  }
  const int n_int = static_cast<int>(map.int_vars.size());

  LpInstance s;
  s.n_vars = p.n_vars + n_int;
  s.n_rows = p.n_cons + 2 * n_int;

  s.obj.assign(s.n_vars, 0.0);
  double c_norm1 = 0.0;
  for (double c : p.obj_coeffs) c_norm1 += std::abs(c);
  if (alpha > 0.0 && c_norm1 > 0.0) {
    for (int i = 0; i < p.n_vars; ++i) s.obj[i] = alpha * p.obj_coeffs[i] / c_norm1;
  }
  for (int d = 0; d < n_int; ++d) s.obj[p.n_vars + d] = 1.0;

  s.var_lower = p.var_lower;
  s.var_upper = p.var_upper;
  s.var_lower.resize(s.n_vars, 0.0);
  s.var_upper.resize(s.n_vars, kInf);

  s.row_lower = p.cons_lower;
  s.row_upper = p.cons_upper;
  s.row_start = p.row_start;
  s.row_col   = p.row_col;
  s.row_val   = p.row_val;
  for (int d = 0; d < n_int; ++d) {
    const int i    = map.int_vars[d];
    const double t = map.targets[d];
    // x_i - d_i <= t_i
    s.row_col.push_back(i);
    s.row_val.push_back(1.0);
    s.row_col.push_back(p.n_vars + d);
    s.row_val.push_back(-1.0);
    s.row_start.push_back(static_cast<int>(s.row_col.size()));
    s.row_lower.push_back(-kInf);
    s.row_upper.push_back(t);
    // x_i + d_i >= t_i
    s.row_col.push_back(i);
    s.row_val.push_back(1.0);
    s.row_col.push_back(p.n_vars + d);
    s.row_val.push_back(1.0);
    s.row_start.push_back(static_cast<int>(s.row_col.size()));
    s.row_lower.push_back(t);
    s.row_upper.push_back(kInf);
  }

  // CSC of the augmented matrix.
  s.col_start.assign(s.n_vars + 1, 0);
  for (int c : s.row_col) s.col_start[c + 1]++;
  for (int i = 0; i < s.n_vars; ++i) s.col_start[i + 1] += s.col_start[i];
  s.col_row.resize(s.row_col.size());
  s.col_val.resize(s.row_col.size());
  std::vector<int> cursor(s.col_start.begin(), s.col_start.end() - 1);
  for (int k = 0; k < s.n_rows; ++k) {
    for (int e = s.row_start[k]; e < s.row_start[k + 1]; ++e) {
      const int dst  = cursor[s.row_col[e]]++;
      s.col_row[dst] = k;
      s.col_val[dst] = s.row_val[e];
    }
  }
  return {std::move(s), std::move(map)};
}

// Carries a previous projection solve into the next one. Original variables
// and rows copy over; distance variables are re-seeded at |x - t|; duals of
// distance rows whose target moved (and of rows that did not exist before)
// start cold at zero.
inline LpWarmStart transfer_warm_start(const LpResult& prev, const ProjectionMap& prev_map,
                                       const ProjectionMap& new_map)
{
  LpWarmStart ws;
  const int n_int = static_cast<int>(new_map.int_vars.size());
  ws.primal.assign(new_map.n_orig_vars + n_int, 0.0);
  ws.dual.assign(new_map.n_orig_rows + 2 * n_int, 0.0);

  for (int i = 0; i < new_map.n_orig_vars && i < prev_map.n_orig_vars; ++i) {
    ws.primal[i] = prev.primal[i];
  }
  for (int k = 0; k < new_map.n_orig_rows && k < prev_map.n_orig_rows; ++k) {
    ws.dual[k] = prev.dual[k];
  }
  for (int d = 0; d < n_int; ++d) {
    const int i = new_map.int_vars[d];
    ws.primal[new_map.n_orig_vars + d] =
        (i < prev_map.n_orig_vars) ? std::abs(prev.primal[i] - new_map.targets[d]) : 0.0;
    // Same integer variable order across iterations; copy distance-row duals
    // only when the target did not move.
    if (d < static_cast<int>(prev_map.int_vars.size()) && prev_map.int_vars[d] == i &&
        prev_map.targets[d] == new_map.targets[d]) {
      ws.dual[new_map.n_orig_rows + 2 * d]     = prev.dual[prev_map.n_orig_rows + 2 * d];
      ws.dual[new_map.n_orig_rows + 2 * d + 1] = prev.dual[prev_map.n_orig_rows + 2 * d + 1];
    }
  }
  return ws;
}

}  // namespace pulse
