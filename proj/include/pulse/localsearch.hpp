/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "pulse/common.hpp"
#include "pulse/parallel.hpp"
#include "pulse/problem.hpp"

namespace pulse {

struct Move {
  int var = -1;
  double new_value = 0.0;
  double score1 = 0.0;  // weighted violation + objective progress
  double score2 = 0.0;  // feasible-row flips and the bonus term
};

struct LsLimits {
  double time_sec   = kInf;
  int64_t max_iters = 100000;
};

struct LsConfig {
  double feas_tol         = kFeasTol;
  int refresh_period      = 10000;  // exact LHS recompute interval
  double walk_probability = 0.15;   // random-walk escape at local optima
  double weight_renorm    = 1e6;
  // Relative objective improvement that earns the second-level bonus.
  double bonus_rel = 1e-4;
};

struct LsResult {
  SolutionVector best;                 // best feasible, or the start when none
  bool feasible = false;
  SolutionVector min_violation_point;  // least total violation seen
  int64_t iterations = 0;
  std::vector<double> weights;         // final constraint weights
  double obj_weight = 1.0;
};

// Violation-weighted local search over MTM, lift and breakthrough moves with
// hierarchical scoring. LHS values are maintained incrementally with
// compensated summation and recomputed exactly every refresh_period
// iterations.
class LocalSearch {
 public:
  LocalSearch(const ProblemDef& p, const std::vector<double>& start, LsConfig cfg = {},
              const std::vector<double>* initial_weights = nullptr,
              double initial_obj_weight = 1.0)
      : p_(p), cfg_(cfg)
  {
    x_.resize(p.n_vars);
    for (int i = 0; i < p.n_vars; ++i) {
      double v = clamp(start[i], p.var_lower[i], p.var_upper[i]);
      if (p.is_integer[i]) v = clamp(std::round(v), p.var_lower[i], p.var_upper[i]);
      x_[i] = v;
    }
    weight_.assign(p.n_cons, 1.0);
    if (initial_weights && static_cast<int>(initial_weights->size()) == p.n_cons) {
      weight_ = *initial_weights;
    }
    obj_weight_ = std::max(1.0, initial_obj_weight);
    lhs_.assign(p.n_cons, 0.0);
    lhs_comp_.assign(p.n_cons, 0.0);
    viol_.assign(p.n_cons, 0.0);
    refresh_exact();
    best_obj_ = kInf;
    min_total_viol_ = kInf;
    note_state();
  }

  double lhs_value(int k) const { return lhs_[k] + lhs_comp_[k]; }
  double objective() const { return obj_ + obj_comp_; }
  const std::vector<double>& assignment() const { return x_; }
  const std::vector<double>& weights() const { return weight_; }
  double obj_weight() const { return obj_weight_; }
  double best_objective() const { return best_obj_; }
  bool has_incumbent() const { return best_.has_value(); }
  int64_t iteration() const { return iteration_; }
  const std::set<int>& violated_rows() const { return violated_; }

  double max_incremental_error() const
  {
    double err = 0.0;
    for (int k = 0; k < p_.n_cons; ++k) {
      const double exact = row_lhs(p_, k, x_);
      err = std::max(err, std::abs(lhs_value(k) - exact) / (1.0 + std::abs(exact)));
    }
    return err;
  }

  // Tight values that pull each violated row back to its violated bound.
  std::vector<Move> generate_mtm_moves(const std::set<int>& violated) const
  {
    std::vector<Move> moves;
    for (int k : violated) {
      const double lhs = lhs_value(k);
      double target;
      bool need_decrease;
      if (is_finite(p_.cons_upper[k]) && lhs > p_.cons_upper[k] + cfg_.feas_tol) {
        target        = p_.cons_upper[k];
        need_decrease = true;
      } else if (is_finite(p_.cons_lower[k]) && lhs < p_.cons_lower[k] - cfg_.feas_tol) {
        target        = p_.cons_lower[k];
        need_decrease = false;
      } else {
        continue;
      }
      const auto cols = p_.row_cols(k);
      const auto vals = p_.row_vals(k);
      for (size_t e = 0; e < cols.size(); ++e) {
        const int i       = cols[e];
        const double a_ki = vals[e];
        double t;
        if (is_binary(i)) {
          t = p_.var_lower[i] + p_.var_upper[i] - x_[i];  // flip
        } else {
          t = x_[i] + (target - lhs) / a_ki;
          if (p_.is_integer[i]) {
            const bool move_down = (a_ki > 0.0) == need_decrease;
            t = move_down ? std::floor(t + 1e-9) : std::ceil(t - 1e-9);
          }
          t = clamp(t, p_.var_lower[i], p_.var_upper[i]);
        }
        if (t != x_[i]) moves.push_back({i, t, 0.0, 0.0});
      }
    }
    dedup(moves);
    return moves;
  }

  // Feasibility-preserving objective steps limited by row slacks.
  std::vector<Move> generate_lift_moves() const
  {
    std::vector<Move> moves;
    for (int i = 0; i < p_.n_vars; ++i) {
      const double c = p_.obj_coeffs[i];
      if (c == 0.0) continue;
      const double d = c > 0.0 ? -1.0 : 1.0;
      double step    = d > 0.0 ? p_.var_upper[i] - x_[i] : x_[i] - p_.var_lower[i];
      if (step <= 0.0) continue;
      const auto rows = p_.col_rows(i);
      const auto vals = p_.col_vals(i);
      for (size_t e = 0; e < rows.size() && step > 0.0; ++e) {
        const int k     = rows[e];
        const double ad = vals[e] * d;
        const double lhs = lhs_value(k);
        if (ad > 0.0 && is_finite(p_.cons_upper[k])) {
          step = std::min(step, std::max(0.0, p_.cons_upper[k] - lhs) / ad);
        } else if (ad < 0.0 && is_finite(p_.cons_lower[k])) {
          step = std::min(step, std::max(0.0, lhs - p_.cons_lower[k]) / (-ad));
        }
      }
      if (p_.is_integer[i]) {
        step = std::floor(step + 1e-9);
        if (step < 1.0) continue;
      } else if (step < cfg_.feas_tol) {
        continue;
      }
      moves.push_back({i, x_[i] + d * step, 0.0, 0.0});
    }
    return moves;
  }

  // Minimal integral step that beats the incumbent objective, bounds
  // permitting; violations are priced by the scoring, not filtered here.
  std::vector<Move> generate_breakthrough_moves() const
  {
    std::vector<Move> moves;
    if (!best_) return moves;
    const double obj = objective();
    for (int i = 0; i < p_.n_vars; ++i) {
      const double c = p_.obj_coeffs[i];
      if (c == 0.0) continue;
      const double d    = c > 0.0 ? -1.0 : 1.0;
      const double need = (obj - best_obj_) / std::abs(c);
      double step       = std::floor(need + 1e-9) + 1.0;
      if (step < 1.0) step = 1.0;
      const double t = x_[i] + d * step;
      if (t < p_.var_lower[i] - 1e-9 || t > p_.var_upper[i] + 1e-9) continue;
      moves.push_back({i, t, 0.0, 0.0});
    }
    return moves;
  }

  // Two-level score: weighted violation and objective progress first, then
  // the count of rows flipping to satisfied minus newly violated, plus a
  // bonus for a substantial objective improvement.
  void score_move(Move& m) const
  {
    const double delta = m.new_value - x_[m.var];
    const auto rows    = p_.col_rows(m.var);
    const auto vals    = p_.col_vals(m.var);
    double s1 = 0.0;
    double s2 = 0.0;
    for (size_t e = 0; e < rows.size(); ++e) {
      const int k        = rows[e];
      const double before = viol_[k];
      const double after  = violation(k, lhs_value(k) + vals[e] * delta);
      s1 += weight_[k] * (before - after);
      const bool was_ok = before <= cfg_.feas_tol;
      const bool is_ok  = after <= cfg_.feas_tol;
      if (!was_ok && is_ok) s2 += 1.0;
      if (was_ok && !is_ok) s2 -= 1.0;
    }
    const double obj_gain = -p_.obj_coeffs[m.var] * delta;  // before - after
    s1 += obj_weight_ * obj_gain;
    if (best_ && obj_gain >= cfg_.bonus_rel * (1.0 + std::abs(best_obj_))) s2 += 1.0;
    m.score1 = s1;
    m.score2 = s2;
  }

  void score_all(std::vector<Move>& moves) const
  {
    parallel_for(0, static_cast<int>(moves.size()), [&](int j) { score_move(moves[j]); }, 64);
  }

  // Applies the lexicographically best positive move; otherwise bumps the
  // violated-row weights and, with a small probability, walks a random
  // violated row's best move regardless of score.
  std::optional<Move> select_and_apply(std::vector<Move>& moves, Rng& rng)
  {
    score_all(moves);
    const Move* chosen = nullptr;
    for (const auto& m : moves) {
      if (!chosen || better(m, *chosen)) chosen = &m;
    }
    if (chosen && chosen->score1 > 0.0) {
      const Move applied = *chosen;
      apply(applied);
      return applied;
    }
    update_weights();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (!violated_.empty() && unit(rng) < cfg_.walk_probability) {
      std::uniform_int_distribution<size_t> pick(0, violated_.size() - 1);
      auto it = violated_.begin();
      std::advance(it, pick(rng));
      std::set<int> one{*it};
      auto walk_moves = generate_mtm_moves(one);
      if (!walk_moves.empty()) {
        score_all(walk_moves);
        const Move* best = &walk_moves[0];
        for (const auto& m : walk_moves) {
          if (better(m, *best)) best = &m;
        }
        const Move applied = *best;
        apply(applied);
        return applied;
      }
    }
    return std::nullopt;
  }

  // Additive violation weights; the objective weight grows at feasible local
  // optima that fail to improve the incumbent.
  void update_weights()
  {
    for (int k : violated_) {
      weight_[k] += 1.0;
      max_weight_ = std::max(max_weight_, weight_[k]);
    }
    if (violated_.empty() && best_ && objective() >= best_obj_) {
      obj_weight_ += 1.0;
      max_weight_ = std::max(max_weight_, obj_weight_);
    }
    if (max_weight_ > cfg_.weight_renorm) {
      max_weight_ = 1.0;
      for (auto& w : weight_) {
        w           = std::max(1.0, w / 2.0);
        max_weight_ = std::max(max_weight_, w);
      }
      obj_weight_ = std::max(1.0, obj_weight_ / 2.0);
      max_weight_ = std::max(max_weight_, obj_weight_);
    }
  }

  // One move-generation / selection / application cycle.
  void step(Rng& rng)
  {
    ++iteration_;
    if (cfg_.refresh_period > 0 && iteration_ % cfg_.refresh_period == 0) refresh_exact();

    if (violated_.empty()) {
      record_incumbent();
      auto moves = generate_lift_moves();
      auto bt    = generate_breakthrough_moves();
      moves.insert(moves.end(), bt.begin(), bt.end());
      select_and_apply(moves, rng);
    } else {
      auto moves = generate_mtm_moves(violated_);
      auto bt    = generate_breakthrough_moves();
      moves.insert(moves.end(), bt.begin(), bt.end());
      select_and_apply(moves, rng);
    }
    note_state();
  }

  LsResult run(const LsLimits& limits, Rng& rng, const std::vector<double>& start_copy)
  {
    Timer timer;
    while (iteration_ < limits.max_iters) {
      if (timer.elapsed_sec() >= limits.time_sec) break;
      step(rng);
    }
    if (violated_.empty()) record_incumbent();

    LsResult res;
    res.feasible   = best_.has_value();
    res.iterations = iteration_;
    res.weights    = weight_;
    res.obj_weight = obj_weight_;
    res.best = best_ ? make_solution(p_, *best_, cfg_.feas_tol)
                     : make_solution(p_, start_copy, cfg_.feas_tol);
    res.min_violation_point =
        make_solution(p_, min_viol_x_.empty() ? start_copy : min_viol_x_, cfg_.feas_tol);
    return res;
  }

 private:
  bool is_binary(int i) const
  {
    return p_.is_integer[i] && p_.var_upper[i] - p_.var_lower[i] == 1.0;
  }

  double violation(int k, double lhs) const
  {
    double v = 0.0;
    if (is_finite(p_.cons_upper[k])) v = std::max(v, lhs - p_.cons_upper[k]);
    if (is_finite(p_.cons_lower[k])) v = std::max(v, p_.cons_lower[k] - lhs);
    return v;
  }

  static bool better(const Move& a, const Move& b)
  {
    if (a.score1 != b.score1) return a.score1 > b.score1;
    if (a.score2 != b.score2) return a.score2 > b.score2;
    if (a.var != b.var) return a.var < b.var;
    return std::abs(a.new_value) < std::abs(b.new_value);
  }

  static void dedup(std::vector<Move>& moves)
  {
    std::sort(moves.begin(), moves.end(), [](const Move& a, const Move& b) {
      return a.var != b.var ? a.var < b.var : a.new_value < b.new_value;
    });
    moves.erase(std::unique(moves.begin(), moves.end(),
                            [](const Move& a, const Move& b) {
                              return a.var == b.var && a.new_value == b.new_value;
                            }),
                moves.end());
  }

  void apply(const Move& m)
  {
    const double delta = m.new_value - x_[m.var];
    const auto rows    = p_.col_rows(m.var);
    const auto vals    = p_.col_vals(m.var);
    for (size_t e = 0; e < rows.size(); ++e) {
      const int k = rows[e];
      kahan_add(lhs_[k], lhs_comp_[k], vals[e] * delta);
      set_violation(k, violation(k, lhs_value(k)));
    }
    kahan_add(obj_, obj_comp_, p_.obj_coeffs[m.var] * delta);
    x_[m.var] = m.new_value;
  }

  void set_violation(int k, double v)
  {
    total_viol_ += v - viol_[k];
    viol_[k] = v;
    if (v > cfg_.feas_tol) {
      violated_.insert(k);
    } else {
      violated_.erase(k);
    }
  }

  void refresh_exact()
  {
    KahanAccumulator obj_acc;
    for (int i = 0; i < p_.n_vars; ++i) obj_acc.add(p_.obj_coeffs[i] * x_[i]);
    obj_      = obj_acc.value();
    obj_comp_ = 0.0;
    total_viol_ = 0.0;
    violated_.clear();
    for (int k = 0; k < p_.n_cons; ++k) {
      lhs_[k]      = row_lhs(p_, k, x_);
      lhs_comp_[k] = 0.0;
      viol_[k]     = violation(k, lhs_[k]);
      total_viol_ += viol_[k];
      if (viol_[k] > cfg_.feas_tol) violated_.insert(k);
    }
  }

  void record_incumbent()
  {
    const double obj = objective();
    if (!best_ || obj < best_obj_) {
      best_     = x_;
      best_obj_ = obj;
    }
  }

  void note_state()
  {
    if (total_viol_ < min_total_viol_ - 1e-12) {
      min_total_viol_ = total_viol_;
      min_viol_x_     = x_;
    }
  }

  const ProblemDef& p_;
  LsConfig cfg_;
  std::vector<double> x_;
  std::vector<double> lhs_, lhs_comp_;
  std::vector<double> viol_;
  std::set<int> violated_;
  std::vector<double> weight_;
  double obj_weight_ = 1.0;
  double obj_ = 0.0, obj_comp_ = 0.0;
  double total_viol_ = 0.0;
  std::optional<std::vector<double>> best_;
  double best_obj_ = kInf;
  std::vector<double> min_viol_x_;
  double min_total_viol_ = kInf;
  double max_weight_ = 1.0;
  int64_t iteration_ = 0;
};

// Runs local search from a start point (clamped into bounds, integers
// rounded). Returns the best feasible point found, or the start with
// feasible=false when none.
inline LsResult run_local_search(const ProblemDef& p, const SolutionVector& start,
                                 const LsLimits& limits, Rng& rng, LsConfig cfg = {},
                                 const std::vector<double>* initial_weights = nullptr,
                                 double initial_obj_weight = 1.0)
{
  LocalSearch engine(p, start.values, cfg, initial_weights, initial_obj_weight);
  return engine.run(limits, rng, start.values);
}

}  // namespace pulse
