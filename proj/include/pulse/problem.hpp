/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pulse/common.hpp"

namespace pulse {

// Immutable sparse MILP instance:
//   minimize c'x  subject to  cons_lower <= Ax <= cons_upper,
//   var_lower <= x <= var_upper,  x_i integral where is_integer[i].
// The matrix is stored twice (CSR and CSC) so both row-wise and column-wise
// passes are cache friendly. Construction goes through ProblemBuilder, which
// establishes the invariants (sorted indices, no duplicates, no explicit
// zeros, integral bounds on integer variables).
struct ProblemDef {
  int n_vars = 0;
  int n_cons = 0;

  std::vector<double> obj_coeffs;
  std::vector<double> var_lower;
  std::vector<double> var_upper;
  std::vector<uint8_t> is_integer;

  // CSR view.
  std::vector<int> row_start;  // size n_cons + 1
  std::vector<int> row_col;
  std::vector<double> row_val;

  // CSC view of the same matrix.
  std::vector<int> col_start;  // size n_vars + 1
  std::vector<int> col_row;
  std::vector<double> col_val;

  std::vector<double> cons_lower;
  std::vector<double> cons_upper;

  std::vector<std::string> var_names;
  std::vector<std::string> cons_names;
  std::string name;
  std::string objective_name;

  int nnz() const { return static_cast<int>(row_col.size()); }

  int row_nnz(int k) const { return row_start[k + 1] - row_start[k]; }
  int col_nnz(int i) const { return col_start[i + 1] - col_start[i]; }

  std::span<const int> row_cols(int k) const
  {
    return {row_col.data() + row_start[k], static_cast<size_t>(row_nnz(k))};
  }
  std::span<const double> row_vals(int k) const
  {
    return {row_val.data() + row_start[k], static_cast<size_t>(row_nnz(k))};
  }
  std::span<const int> col_rows(int i) const
  {
    return {col_row.data() + col_start[i], static_cast<size_t>(col_nnz(i))};
  }
  std::span<const double> col_vals(int i) const
  {
    return {col_val.data() + col_start[i], static_cast<size_t>(col_nnz(i))};
  }

  bool var_fixed(int i) const { return var_lower[i] == var_upper[i]; }

  std::vector<int> integer_vars() const
  {
    std::vector<int> ids;
    for (int i = 0; i < n_vars; ++i) {
      if (is_integer[i]) ids.push_back(i);
    }
    return ids;
  }
};

// A candidate point together with cached evaluation results.
struct SolutionVector {
  std::vector<double> values;
  double objective = 0.0;
  double max_violation = 0.0;
  int n_violated = 0;
};

struct ViolationReport {
  std::vector<double> cons_violation;         // max(0, lhs - ub, lb - lhs) per row
  std::vector<double> bound_violation;        // per variable
  std::vector<double> integrality_violation;  // distance to nearest integer, 0 for continuous
  double max_violation = 0.0;
  int n_violated_cons = 0;
  bool feasible = true;
};

class ProblemBuilder {
 public:
  // Returns the variable index. Infinite bounds are passed as +-kInf.
  int add_var(std::string name, double lower, double upper, bool integer, double obj = 0.0)
  {
    var_names_.push_back(std::move(name));
    lower_.push_back(lower);
    upper_.push_back(upper);
    integer_.push_back(integer ? 1 : 0);
    obj_.push_back(obj);
    return static_cast<int>(var_names_.size()) - 1;
  }

  int add_row(std::string name, double lower, double upper)
  {
    cons_names_.push_back(std::move(name));
    cons_lower_.push_back(lower);
    cons_upper_.push_back(upper);
    return static_cast<int>(cons_names_.size()) - 1;
  }

  void add_entry(int row, int col, double val) { entries_.push_back({row, col, val}); }

  void set_objective(int var, double coeff) { obj_[var] = coeff; }
  void add_to_objective(int var, double coeff) { obj_[var] += coeff; }
  void set_var_lower(int var, double v) { lower_[var] = v; }
  void set_var_upper(int var, double v) { upper_[var] = v; }
  void set_var_integer(int var) { integer_[var] = 1; }
  void set_row_lower(int row, double v) { cons_lower_[row] = v; }
  void set_row_upper(int row, double v) { cons_upper_[row] = v; }
  double row_lower(int row) const { return cons_lower_[row]; }
  double row_upper(int row) const { return cons_upper_[row]; }
  void set_name(std::string n) { name_ = std::move(n); }
  void set_objective_name(std::string n) { obj_name_ = std::move(n); }

  int n_vars() const { return static_cast<int>(var_names_.size()); }
  int n_rows() const { return static_cast<int>(cons_names_.size()); }

  ProblemDef build() const
  {
    ProblemDef p;
    p.n_vars         = n_vars();
    p.n_cons         = n_rows();
    p.var_names      = var_names_;
    p.cons_names     = cons_names_;
    p.obj_coeffs     = obj_;
    p.cons_lower     = cons_lower_;
    p.cons_upper     = cons_upper_;
    p.name           = name_;
    p.objective_name = obj_name_;
    p.var_lower      = lower_;
    p.var_upper      = upper_;
    p.is_integer     = integer_;

    // Integral tightening at load; the heuristics assume integer variables
    // carry integral bounds.
    for (int i = 0; i < p.n_vars; ++i) {
      if (!p.is_integer[i]) continue;
      if (is_finite(p.var_lower[i])) p.var_lower[i] = ceil_eps(p.var_lower[i], 1e-9);
      if (is_finite(p.var_upper[i])) p.var_upper[i] = floor_eps(p.var_upper[i], 1e-9);
    }
    for (int i = 0; i < p.n_vars; ++i) {
      if (p.var_lower[i] > p.var_upper[i]) {
        throw std::runtime_error("variable '" + p.var_names[i] + "' has empty domain after bound tightening");
      }
    }
    for (int k = 0; k < p.n_cons; ++k) {
      if (p.cons_lower[k] > p.cons_upper[k]) {
        throw std::runtime_error("constraint '" + p.cons_names[k] + "' has crossed bounds");
      }
    }

    // Coalesce duplicate (row, col) entries and drop zeros.
    std::vector<std::tuple<int, int, double>> tr;
    tr.reserve(entries_.size());
    for (const auto& e : entries_) {
      if (e.row < 0 || e.row >= p.n_cons) throw std::out_of_range("entry row out of range");
      if (e.col < 0 || e.col >= p.n_vars) throw std::out_of_range("entry col out of range");
      tr.emplace_back(e.row, e.col, e.val);
    }
    std::sort(tr.begin(), tr.end(), [](const auto& a, const auto& b) {
      return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b)
                                              : std::get<1>(a) < std::get<1>(b);
    });
    std::vector<std::tuple<int, int, double>> merged;
    merged.reserve(tr.size());
    for (const auto& t : tr) {
      if (!merged.empty() && std::get<0>(merged.back()) == std::get<0>(t) &&
          std::get<1>(merged.back()) == std::get<1>(t)) {
        std::get<2>(merged.back()) += std::get<2>(t);
      } else {
        merged.push_back(t);
      }
    }
    merged.erase(std::remove_if(merged.begin(), merged.end(),
                                [](const auto& t) { return std::get<2>(t) == 0.0; }),
                 merged.end());

    p.row_start.assign(p.n_cons + 1, 0);
    for (const auto& t : merged) p.row_start[std::get<0>(t) + 1]++;
    for (int k = 0; k < p.n_cons; ++k) p.row_start[k + 1] += p.row_start[k];
    p.row_col.resize(merged.size());
    p.row_val.resize(merged.size());
    for (size_t e = 0; e < merged.size(); ++e) {
      p.row_col[e] = std::get<1>(merged[e]);
      p.row_val[e] = std::get<2>(merged[e]);
    }

    // CSC by stable transpose.
    p.col_start.assign(p.n_vars + 1, 0);
    for (int c : p.row_col) p.col_start[c + 1]++;
    for (int i = 0; i < p.n_vars; ++i) p.col_start[i + 1] += p.col_start[i];
    p.col_row.resize(merged.size());
    p.col_val.resize(merged.size());
    std::vector<int> cursor(p.col_start.begin(), p.col_start.end() - 1);
    for (int k = 0; k < p.n_cons; ++k) {
      for (int e = p.row_start[k]; e < p.row_start[k + 1]; ++e) {
        const int i   = p.row_col[e];
        const int dst = cursor[i]++;
        p.col_row[dst] = k;
        p.col_val[dst] = p.row_val[e];
      }
    }
    return p;
  }

 private:
  struct Entry {
    int row;
    int col;
    double val;
  };
  std::vector<std::string> var_names_;
  std::vector<double> lower_, upper_, obj_;
  std::vector<uint8_t> integer_;
  std::vector<std::string> cons_names_;
  std::vector<double> cons_lower_, cons_upper_;
  std::vector<Entry> entries_;
  std::string name_;
  std::string obj_name_ = "OBJ";
};

// Rebuilds a ProblemDef with extra rows appended (used for objective cuts).
inline ProblemDef append_rows(const ProblemDef& p,
                              const std::vector<std::string>& names,
                              const std::vector<double>& lowers,
                              const std::vector<double>& uppers,
                              const std::vector<std::vector<std::pair<int, double>>>& rows)
{
  ProblemBuilder b;
  b.set_name(p.name);
  b.set_objective_name(p.objective_name);
  for (int i = 0; i < p.n_vars; ++i) {
    b.add_var(p.var_names[i], p.var_lower[i], p.var_upper[i], p.is_integer[i] != 0,
              p.obj_coeffs[i]);
  }
  for (int k = 0; k < p.n_cons; ++k) {
    b.add_row(p.cons_names[k], p.cons_lower[k], p.cons_upper[k]);
    const auto cols = p.row_cols(k);
    const auto vals = p.row_vals(k);
    for (size_t e = 0; e < cols.size(); ++e) b.add_entry(k, cols[e], vals[e]);
  }
  for (size_t r = 0; r < rows.size(); ++r) {
    const int k = b.add_row(names[r], lowers[r], uppers[r]);
    for (const auto& [col, val] : rows[r]) b.add_entry(k, col, val);
  }
  return b.build();
}

// Row left-hand side at a point. Fixed segment size keeps the summation tree
// identical no matter how the work is partitioned.
inline constexpr int kSumSegment = 16384;

inline double row_lhs(const ProblemDef& p, int k, const std::vector<double>& x)
{
  const auto cols = p.row_cols(k);
  const auto vals = p.row_vals(k);
  const int n     = static_cast<int>(cols.size());
  double total    = 0.0;
  for (int s = 0; s < n; s += kSumSegment) {
    const int hi = std::min(n, s + kSumSegment);
    double part  = 0.0;
    for (int e = s; e < hi; ++e) part += vals[e] * x[cols[e]];
    total += part;
  }
  return total;
}

inline double evaluate_objective(const ProblemDef& p, const SolutionVector& s)
{
  if (static_cast<int>(s.values.size()) != p.n_vars) {
    throw std::invalid_argument("solution dimension mismatch");
  }
  KahanAccumulator acc;
  for (int i = 0; i < p.n_vars; ++i) acc.add(p.obj_coeffs[i] * s.values[i]);
  return acc.value();
}

inline ViolationReport check_feasibility(const ProblemDef& p, const SolutionVector& s,
                                         double tol = kFeasTol)
{
  if (static_cast<int>(s.values.size()) != p.n_vars) {
    throw std::invalid_argument("solution dimension mismatch");
  }
  ViolationReport r;
  r.cons_violation.resize(p.n_cons, 0.0);
  r.bound_violation.resize(p.n_vars, 0.0);
  r.integrality_violation.resize(p.n_vars, 0.0);

  for (int k = 0; k < p.n_cons; ++k) {
    const double lhs = row_lhs(p, k, s.values);
    double v         = 0.0;
    if (is_finite(p.cons_upper[k])) v = std::max(v, lhs - p.cons_upper[k]);
    if (is_finite(p.cons_lower[k])) v = std::max(v, p.cons_lower[k] - lhs);
    r.cons_violation[k] = v;
    if (v > tol) r.n_violated_cons++;
    r.max_violation = std::max(r.max_violation, v);
  }
  for (int i = 0; i < p.n_vars; ++i) {
    const double x = s.values[i];
    double v       = 0.0;
    if (is_finite(p.var_lower[i])) v = std::max(v, p.var_lower[i] - x);
    if (is_finite(p.var_upper[i])) v = std::max(v, x - p.var_upper[i]);
    r.bound_violation[i] = v;
    r.max_violation      = std::max(r.max_violation, v);
    if (p.is_integer[i]) {
      const double iv             = std::abs(x - std::round(x));
      r.integrality_violation[i]  = iv;
      r.max_violation             = std::max(r.max_violation, iv);
    }
  }
  r.feasible = r.max_violation <= tol;
  return r;
}

// Evaluates a raw point into a SolutionVector with cached statistics.
inline SolutionVector make_solution(const ProblemDef& p, std::vector<double> values,
                                    double tol = kFeasTol)
{
  SolutionVector s;
  s.values = std::move(values);
  if (static_cast<int>(s.values.size()) != p.n_vars) {
    throw std::invalid_argument("solution dimension mismatch");
  }
  s.objective        = evaluate_objective(p, s);
  const auto report  = check_feasibility(p, s, tol);
  s.max_violation    = report.max_violation;
  s.n_violated       = report.n_violated_cons;
  return s;
}

}  // namespace pulse
