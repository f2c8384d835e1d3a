/* SPDX-License-Identifier: Apache-2.0 */

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "lp_oracle.hpp"
#include "pulse/lp.hpp"
#include "testkit.hpp"

using namespace pulse;
using testkit::make_problem;

namespace {

LpBudget generous()
{
  LpBudget b;
  b.time_sec  = 30.0;
  b.max_iters = 200000;
  return b;
}

}  // namespace

TEST_CASE("solve finds simple LP optima")
{
  SECTION("min x s.t. x >= 1, x in [0,10]")
  {
    const ProblemDef p =
        make_problem({{0, 10, false, 1.0}}, {{{{0, 1.0}}, 1.0, kInf}});
    const auto res = solve(LpInstance::relax(p), std::nullopt, generous(), 1e-6);
    CHECK(res.status == LpStatus::Optimal);
    CHECK(res.primal[0] == Catch::Approx(1.0).margin(1e-4));
  }
  SECTION("warm start at the optimum verifies immediately")
  {
    const ProblemDef p =
        make_problem({{0, 10, false, 1.0}}, {{{{0, 1.0}}, 1.0, kInf}});
    const auto inst = LpInstance::relax(p);
    const auto cold = solve(inst, std::nullopt, generous(), 1e-6);
    REQUIRE(cold.status == LpStatus::Optimal);
    LpWarmStart ws{cold.primal, cold.dual};
    const auto hot = solve(inst, ws, generous(), 1e-6);
    CHECK(hot.status == LpStatus::Optimal);
    CHECK(hot.iterations <= 10);
  }
  SECTION("divergence on an unbounded direction signals infeasibility")
  {
    const ProblemDef p = make_problem({{0, kInf, false, -1.0}}, {});
    LpBudget b;
    b.time_sec  = 5.0;
    b.max_iters = 100000;
    const auto res = solve(LpInstance::relax(p), std::nullopt, b, 1e-6);
    CHECK(res.status == LpStatus::InfeasibleSignal);
  }
  SECTION("dimension mismatch in the warm start throws")
  {
    const ProblemDef p = make_problem({{0, 1, false, 1.0}}, {});
    LpWarmStart ws{{1.0, 2.0}, {}};
    CHECK_THROWS_AS(solve(LpInstance::relax(p), ws, generous(), 1e-6), std::invalid_argument);
  }
}

TEST_CASE("solve handles two-sided rows and boxes")
{
  // min -x - 2y s.t. 1 <= x + y <= 2, x,y in [0, 1.5]: optimum x=0.5, y=1.5.
  const ProblemDef p = make_problem({{0, 1.5, false, -1.0}, {0, 1.5, false, -2.0}},
                                    {{{{0, 1.0}, {1, 1.0}}, 1.0, 2.0}});
  const auto res = solve(LpInstance::relax(p), std::nullopt, generous(), 1e-7);
  CHECK(res.status == LpStatus::Optimal);
  CHECK(res.primal_obj == Catch::Approx(-3.5).margin(1e-3));
  CHECK(res.primal[1] == Catch::Approx(1.5).margin(1e-3));
}

TEST_CASE("reported residuals are exact recomputations")
{
  std::mt19937_64 rng(42);
  for (int t = 0; t < 50; ++t) {
    testkit::RandomInstanceOptions opt;
    opt.allow_continuous = true;
    opt.force_feasible   = true;
    const ProblemDef p = testkit::random_instance(rng, opt);
    LpBudget b;
    b.time_sec  = 1.0;
    b.max_iters = 500;  // often stops early: residuals still must be honest
    const auto res = solve(LpInstance::relax(p), std::nullopt, b, 1e-6);

    double pr = 0.0;
    for (int k = 0; k < p.n_cons; ++k) {
      const double lhs = row_lhs(p, k, res.primal);
      if (is_finite(p.cons_upper[k])) pr = std::max(pr, lhs - p.cons_upper[k]);
      if (is_finite(p.cons_lower[k])) pr = std::max(pr, p.cons_lower[k] - lhs);
    }
    CHECK(res.primal_residual == Catch::Approx(pr).margin(1e-10));

    double dr = 0.0;
    for (int i = 0; i < p.n_vars; ++i) {
      double r        = p.obj_coeffs[i];
      const auto rows = p.col_rows(i);
      const auto vals = p.col_vals(i);
      for (size_t e = 0; e < rows.size(); ++e) r += vals[e] * res.dual[rows[e]];
      double viol = 0.0;
      if (r > 0.0 && !is_finite(p.var_lower[i])) viol = r;
      if (r < 0.0 && !is_finite(p.var_upper[i])) viol = -r;
      dr = std::max(dr, viol);
    }
    for (int k = 0; k < p.n_cons; ++k) {
      if (res.dual[k] > 0.0 && !is_finite(p.cons_upper[k])) dr = std::max(dr, res.dual[k]);
      if (res.dual[k] < 0.0 && !is_finite(p.cons_lower[k])) dr = std::max(dr, -res.dual[k]);
    }
    CHECK(res.dual_residual == Catch::Approx(dr).margin(1e-10));
  }
}

TEST_CASE("self warm start never needs more iterations than cold start")
{
  std::mt19937_64 rng(7);
  int tested = 0;
  for (int t = 0; t < 400 && tested < 200; ++t) {
    testkit::RandomInstanceOptions opt;
    opt.allow_continuous = true;
    opt.force_feasible   = true;
    const ProblemDef p = testkit::random_instance(rng, opt);
    const auto inst    = LpInstance::relax(p);
    const auto cold    = solve(inst, std::nullopt, generous(), 1e-5);
    if (cold.status != LpStatus::Optimal) continue;
    LpWarmStart ws{cold.primal, cold.dual};
    const auto hot = solve(inst, ws, generous(), 1e-5);
    CHECK(hot.iterations <= cold.iterations);
    ++tested;
  }
  CHECK(tested == 200);
}

TEST_CASE("build_projection_lp prices integer distance only")
{
  const ProblemDef p = testkit::tiny_knapsack();

  SECTION("target (1,1) is distance 1 from the facet")
  {
    SolutionVector target;
    target.values = {1.0, 1.0};
    auto [inst, map] = build_projection_lp(p, target);
    REQUIRE(map.int_vars == std::vector<int>{0, 1});
    const auto res = solve(inst, std::nullopt, generous(), 1e-7);
    REQUIRE(res.status == LpStatus::Optimal);
    CHECK(res.primal_obj == Catch::Approx(1.0).margin(1e-3));
  }
  SECTION("target inside the polytope is distance 0")
  {
    SolutionVector target;
    target.values = {1.0, 0.0};
    auto [inst, map] = build_projection_lp(p, target);
    const auto res   = solve(inst, std::nullopt, generous(), 1e-7);
    REQUIRE(res.status == LpStatus::Optimal);
    CHECK(res.primal_obj == Catch::Approx(0.0).margin(1e-3));
  }
  SECTION("no integer variables: empty distance objective")
  {
    const ProblemDef q = make_problem({{0, 5, false}, {0, 5, false}},
                                      {{{{0, 1.0}, {1, 1.0}}, -kInf, 4.0}});
    SolutionVector target;
    target.values = {9.0, 9.0};
    auto [inst, map] = build_projection_lp(q, target);
    CHECK(map.int_vars.empty());
    CHECK(inst.n_vars == 2);
    CHECK(inst.n_rows == 1);
    const auto res = solve(inst, std::nullopt, generous(), 1e-7);
    CHECK(res.primal_obj == Catch::Approx(0.0).margin(1e-6));
  }
}

TEST_CASE("transfer_warm_start bookkeeping")
{
  const ProblemDef p = testkit::tiny_knapsack();
  SolutionVector t1;
  t1.values = {1.0, 1.0};
  auto [inst1, map1] = build_projection_lp(p, t1);
  const auto res1    = solve(inst1, std::nullopt, generous(), 1e-7);
  REQUIRE(res1.status == LpStatus::Optimal);

  SECTION("identical consecutive targets reproduce the previous solution")
  {
    auto [inst2, map2] = build_projection_lp(p, t1);
    const auto ws      = transfer_warm_start(res1, map1, map2);
    CHECK(ws.dual == res1.dual);
    for (int i = 0; i < 2; ++i) CHECK(ws.primal[i] == res1.primal[i]);
    // d re-seeded at |x - t| which is the optimal distance value
    CHECK(ws.primal[2] == Catch::Approx(std::abs(res1.primal[0] - 1.0)).margin(1e-12));
  }
  SECTION("one flipped target zeroes only its distance-row duals")
  {
    SolutionVector t2;
    t2.values = {1.0, 0.0};  // y's target flipped
    auto [inst2, map2] = build_projection_lp(p, t2);
    const auto ws      = transfer_warm_start(res1, map1, map2);
    CHECK(ws.dual[map2.n_orig_rows + 0] == res1.dual[map1.n_orig_rows + 0]);
    CHECK(ws.dual[map2.n_orig_rows + 1] == res1.dual[map1.n_orig_rows + 1]);
    CHECK(ws.dual[map2.n_orig_rows + 2] == 0.0);
    CHECK(ws.dual[map2.n_orig_rows + 3] == 0.0);
  }
  SECTION("first iteration has no warm start")
  {
    // Cold start is the absence of the optional; nothing to transfer.
    const auto res = solve(inst1, std::nullopt, generous(), 1e-7);
    CHECK(res.status == LpStatus::Optimal);
  }
}

TEST_CASE("projection distance matches the vertex-enumeration oracle")
{
  std::mt19937_64 rng(99);
  int tested = 0;
  for (int t = 0; t < 100 && tested < 25; ++t) {
    testkit::RandomInstanceOptions opt;
    opt.max_vars       = 4;
    opt.max_rows       = 3;
    opt.force_feasible = true;
    const ProblemDef p = testkit::random_instance(rng, opt);

    std::vector<double> target(p.n_vars);
    for (int i = 0; i < p.n_vars; ++i) {
      std::uniform_int_distribution<int> pick(int(p.var_lower[i]) - 2, int(p.var_upper[i]) + 2);
      target[i] = pick(rng);
    }
    const auto oracle = testkit::l1_projection_oracle(p, target);
    REQUIRE(oracle.has_value());

    SolutionVector tv;
    tv.values = target;
    auto [inst, map] = build_projection_lp(p, tv);
    const auto res   = solve(inst, std::nullopt, generous(), 1e-7);
    if (res.status != LpStatus::Optimal) continue;
    CHECK(res.primal_obj == Catch::Approx(*oracle).margin(1e-3));
    CHECK(res.primal_obj >= *oracle - 1e-5);  // lower-bound property
    ++tested;
  }
  CHECK(tested == 25);
}
