/* SPDX-License-Identifier: Apache-2.0 */

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "pulse/fp.hpp"
#include "testkit.hpp"

using namespace pulse;
using testkit::make_problem;

TEST_CASE("cycle_detected truth table")
{
  SECTION("stagnating history triggers")
  {
    // avg(9.5, 9.4, 9.35) = 9.4167; improvement to 9.3 is 0.1167 <= 0.94167
    const std::vector<double> h{10.0, 9.5, 9.4, 9.35, 9.3};
    CHECK(cycle_detected(h, 3));
  }
  SECTION("a zero-distance projection does not trigger")
  {
    // The driver exits on distance zero before the test runs; the predicate
    // itself also sees a full improvement and stays quiet.
    const std::vector<double> h{10.0, 9.5, 9.4, 9.35, 0.0};
    CHECK_FALSE(cycle_detected(h, 3));
  }
  SECTION("short history cannot cycle")
  {
    CHECK_FALSE(cycle_detected({5.0, 4.0, 3.0}, 3));
    CHECK_FALSE(cycle_detected({}, 3));
  }
  SECTION("strong improvement does not trigger")
  {
    const std::vector<double> h{10.0, 9.0, 8.0, 7.0, 2.0};
    CHECK_FALSE(cycle_detected(h, 3));
  }
}

TEST_CASE("add_objective_cut tightens monotonically")
{
  SECTION("integral objective cuts by one")
  {
    const ProblemDef p = testkit::tiny_knapsack();
    const ProblemDef q = add_objective_cut(p, -1.0, 0);
    REQUIRE(q.n_cons == 2);
    CHECK(q.cons_upper[1] == -2.0);
    CHECK(q.cons_lower[1] == -kInf);
    CHECK(q.row_vals(1)[0] == -1.0);
  }
  SECTION("real objective cuts by a relative epsilon")
  {
    const ProblemDef p = make_problem({{0, 5, false, 1.5}}, {{{{0, 1.0}}, -kInf, 100.0}});
    const ProblemDef q = add_objective_cut(p, 10.0, 0);
    CHECK(q.cons_upper[1] == Catch::Approx(10.0 - 1.1e-3));
  }
  SECTION("successive cuts have strictly decreasing right-hand sides")
  {
    const ProblemDef p = testkit::tiny_knapsack();
    const ProblemDef q1 = add_objective_cut(p, -1.0, 0);
    const ProblemDef q2 = add_objective_cut(q1, -2.0, 1);
    CHECK(q2.cons_upper[2] < q2.cons_upper[1]);
  }
}

TEST_CASE("bootstrap finds easy feasible points")
{
  FpConfig cfg;
  cfg.time_limit_sec = 10.0;
  cfg.seed           = 5;

  SECTION("rounded relaxation feasible at bootstrap")
  {
    const ProblemDef p = testkit::tiny_knapsack();
    const auto [state, incumbent] = bootstrap(p, cfg);
    REQUIRE(incumbent.has_value());
    CHECK(state.stage == FpStage::Improving);
    CHECK(incumbent->objective <= -1.0 + 1e-9);
  }
  SECTION("all-zero feasible instance is caught by the fallback")
  {
    // Row x + y >= -1 is satisfied at zero; LP relax pulls toward -infinity
    // objective... keep the objective pushing away from zero.
    const ProblemDef p = make_problem(
        {{-2, 2, true, 1.0}, {-2, 2, true, 1.0}},
        {{{{0, 1.0}, {1, 1.0}}, -1.0, kInf}});
    const auto [state, incumbent] = bootstrap(p, cfg);
    REQUIRE(incumbent.has_value());
  }
  SECTION("infeasible model yields no incumbent and stays pumping")
  {
    const ProblemDef p = make_problem(
        {{0, 1, true}},
        {{{{0, 1.0}}, 1.0, kInf}, {{{0, 1.0}}, -kInf, 0.0}});
    FpConfig c2 = cfg;
    c2.time_limit_sec = 2.0;
    const auto [state, incumbent] = bootstrap(p, c2);
    CHECK_FALSE(incumbent.has_value());
    CHECK(state.stage == FpStage::Pumping);
  }
}

TEST_CASE("fused_heuristic solves toy instances to optimality")
{
  SECTION("tiny knapsack reaches objective -1")
  {
    const ProblemDef p = testkit::tiny_knapsack();
    FpConfig cfg;
    cfg.time_limit_sec   = 10.0;
    cfg.seed             = 1;
    cfg.target_objective = -1.0;
    const auto out = fused_heuristic(p, cfg);
    CHECK(out.stats.feasible);
    CHECK(out.best.objective == -1.0);
    CHECK(check_feasibility(p, out.best).feasible);
  }
  SECTION("equality row forcing a unique solution returns it")
  {
    // 3x = 9 forces x = 3.
    const ProblemDef p = make_problem({{0, 10, true, 1.0}}, {{{{0, 3.0}}, 9.0, 9.0}});
    FpConfig cfg;
    cfg.time_limit_sec   = 10.0;
    cfg.seed             = 2;
    cfg.target_objective = 3.0;
    const auto out = fused_heuristic(p, cfg);
    REQUIRE(out.stats.feasible);
    CHECK(out.best.values[0] == 3.0);
  }
  SECTION("time limit zero returns the bootstrap-stage best without looping")
  {
    const ProblemDef p = testkit::tiny_knapsack();
    FpConfig cfg;
    cfg.time_limit_sec = 0.0;
    cfg.seed           = 3;
    const auto out = fused_heuristic(p, cfg);
    CHECK(out.stats.fp_iterations == 0);
  }
}

TEST_CASE("fused_heuristic with nearest rounding also works")
{
  const ProblemDef p = testkit::tiny_knapsack();
  FpConfig cfg;
  cfg.time_limit_sec   = 10.0;
  cfg.seed             = 4;
  cfg.rounding         = RoundingMode::Nearest;
  cfg.target_objective = -1.0;
  const auto out = fused_heuristic(p, cfg);
  CHECK(out.stats.feasible);
  CHECK(out.best.objective == -1.0);
}

TEST_CASE("incumbents strictly improve and always verify on the original problem")
{
  // min -x - 2y - 3z over x+y+z <= 2 binaries; optimum -5 (y=z=1).
  const ProblemDef p = make_problem(
      {{0, 1, true, -1.0}, {0, 1, true, -2.0}, {0, 1, true, -3.0}},
      {{{{0, 1.0}, {1, 1.0}, {2, 1.0}}, -kInf, 2.0}});
  FpConfig cfg;
  cfg.time_limit_sec   = 15.0;
  cfg.seed             = 11;
  cfg.target_objective = -5.0;
  const auto out = fused_heuristic(p, cfg);
  REQUIRE(out.stats.feasible);
  CHECK(check_feasibility(p, out.best).feasible);
  CHECK(out.best.objective == -5.0);

  // Without a target the driver keeps improving: the loop cuts the incumbent
  // off and still never reports anything worse.
  FpConfig improving = cfg;
  improving.target_objective.reset();
  improving.time_limit_sec = 1.5;
  const auto out2 = fused_heuristic(p, improving);
  REQUIRE(out2.stats.feasible);
  CHECK(out2.stats.cuts_added >= 1);
  CHECK(out2.best.objective <= out.best.objective + 1e-9);
  CHECK(check_feasibility(p, out2.best).feasible);
}

TEST_CASE("first_feasible_stop halts at the first incumbent")
{
  const ProblemDef p = testkit::tiny_knapsack();
  FpConfig cfg;
  cfg.time_limit_sec      = 30.0;
  cfg.seed                = 8;
  cfg.first_feasible_stop = true;
  const auto out = fused_heuristic(p, cfg);
  CHECK(out.stats.feasible);
  CHECK(out.stats.total_time_sec < 5.0);
}

TEST_CASE("two-stage mode relaxes general integers first")
{
  // Mixed binaries and a general integer; optimum uses the general integer.
  const ProblemDef p = make_problem(
      {{0, 1, true, -1.0}, {0, 4, true, -1.0}},
      {{{{0, 1.0}, {1, 1.0}}, -kInf, 3.0}});
  FpConfig cfg;
  cfg.time_limit_sec   = 15.0;
  cfg.seed             = 21;
  cfg.two_stage        = true;
  cfg.target_objective = -3.0;
  const auto out = fused_heuristic(p, cfg);
  REQUIRE(out.stats.feasible);
  CHECK(out.best.objective <= -3.0 + 1e-9);
}

TEST_CASE("wall clock compliance within one stage budget")
{
  // An infeasible model burns the whole budget; total time must stay within
  // the limit plus one stage budget and slack.
  const ProblemDef p = make_problem(
      {{0, 1, true}, {0, 1, true}},
      {{{{0, 1.0}, {1, 1.0}}, 2.0, kInf}, {{{0, 1.0}, {1, 1.0}}, -kInf, 1.0}});
  FpConfig cfg;
  cfg.time_limit_sec = 2.0;
  cfg.seed           = 9;
  Timer t;
  const auto out = fused_heuristic(p, cfg);
  CHECK_FALSE(out.stats.feasible);
  CHECK(t.elapsed_sec() <= 2.0 + cfg.projection_budget_sec + 1.0);
  CHECK(out.best.max_violation > 0.0);  // best-effort point with violations
}

TEST_CASE("determinism: same instance, seed and config reproduce the solution")
{
  std::mt19937_64 gen(123);
  for (int t = 0; t < 5; ++t) {
    testkit::RandomInstanceOptions opt;
    opt.force_feasible = true;
    const ProblemDef p = testkit::random_instance(gen, opt);
    FpConfig cfg;
    cfg.time_limit_sec      = 20.0;
    cfg.seed                = 1000 + t;
    cfg.first_feasible_stop = true;
    const auto a = fused_heuristic(p, cfg);
    const auto b = fused_heuristic(p, cfg);
    REQUIRE(a.stats.feasible == b.stats.feasible);
    REQUIRE(a.best.values == b.best.values);
  }
}

TEST_CASE("projection warm starts accumulate: unchanged targets never cost more")
{
  // Repeated projections of the same target must not need more iterations
  // than their predecessor once the warm start carries over.
  const ProblemDef p = testkit::make_problem(
      {{0, 1, true, -1.0}, {0, 1, true, -1.0}, {0, 3, true, 1.0}},
      {{{{0, 1.0}, {1, 1.0}, {2, 1.0}}, -kInf, 2.0}});
  SolutionVector target;
  target.values = {1.0, 1.0, 3.0};

  std::optional<LpResult> prev;
  std::optional<ProjectionMap> prev_map;
  int last_iters = 1 << 30;
  for (int k = 0; k < 6; ++k) {
    auto [inst, map] = build_projection_lp(p, target);
    std::optional<LpWarmStart> warm;
    if (prev) warm = transfer_warm_start(*prev, *prev_map, map);
    LpBudget budget;
    budget.time_sec  = 10.0;
    budget.max_iters = 100000;
    auto res = solve(inst, warm, budget, 1e-6);
    REQUIRE(res.status == LpStatus::Optimal);
    if (k > 0) CHECK(res.iterations <= last_iters);
    last_iters = res.iterations;
    prev       = std::move(res);
    prev_map   = std::move(map);
  }
  CHECK(last_iters <= 16);  // the fixpoint seed verifies almost immediately
}
