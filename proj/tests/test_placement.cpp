#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "test_support.hpp"

using namespace pmuplace;
using pmuplace::testing::make_instance;

namespace {

pmuplace::testing::Instance clean_instance(int n_bus, std::uint64_t seed) {
  pmuplace::testing::InstanceOpts opts;
  opts.feeder.zero_injection_frac = 0.0;
  return make_instance(n_bus, seed, opts);
}

// Scalar problem: prior variance v, one unit-row candidate with weight w.
// Relaxed objective f_A(x) = 1 / (1/v + w x); with budget >= 1 the optimum
// sits at x = 1.
PlacementProblem scalar_problem(double v, double w) {
  PlacementProblem p;
  p.sigma_prior = CMatrix::Constant(1, 1, Complex(v, 0));
  p.sigma_prior_inv = CMatrix::Constant(1, 1, Complex(1.0 / v, 0));
  p.c.resize(1, 1);
  p.c.insert(0, 0) = Complex(1, 0);
  p.c.makeCompressed();
  p.meas_weight = RVector::Constant(1, w);
  p.cost = RVector::Ones(1);
  p.n_x = 1;
  p.n_state = 1;
  return p;
}

}  // namespace

TEST(ProjectedSubgradient, ScalarConvergesToBudgetCap) {
  // with budget 0.5 the relaxed optimum is the boundary point x = 0.5
  const PlacementProblem p = scalar_problem(1.0, 1.0);
  DescentConfig cfg;
  cfg.max_iter = 200;
  cfg.rel_tol = 0.0;  // run the full schedule
  const DescentResult res = projected_subgradient(Metric::A, p, 0.5, cfg);
  EXPECT_NEAR(res.x_best(0), 0.5, 1e-3);
  EXPECT_NEAR(res.f_convex_best, 1.0 / 1.5, 1e-3);
  EXPECT_LE(res.f_lb, res.f_convex_best + 1e-12);
}

TEST(ProjectedSubgradient, LowerBoundIsValid) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto inst = clean_instance(8, seed);
    const double b = 0.4 * inst.problem.cost.sum();
    for (Metric metric : {Metric::A, Metric::D, Metric::E, Metric::M}) {
      const DescentResult res = projected_subgradient(metric, inst.problem, b);
      EXPECT_LE(res.f_lb, res.f_convex_best + 1e-12)
          << "metric " << to_string(metric) << " seed " << seed;
      EXPECT_TRUE(std::isfinite(res.f_lb));
      // the relaxed iterate stays feasible
      EXPECT_LE(inst.problem.cost.dot(res.x_best), b + 1e-8);
    }
  }
}

TEST(ProjectedSubgradient, GenerousBudgetSelectsEverything) {
  const auto inst = clean_instance(6, 4);
  const double b = 2.0 * inst.problem.cost.sum();
  DescentConfig cfg;
  cfg.max_iter = 100;
  const DescentResult res = projected_subgradient(Metric::A, inst.problem, b, cfg);
  // x0 = min(1, b / sum c) = 1 is already optimal for a monotone objective
  EXPECT_LT((res.x_best - RVector::Ones(inst.problem.n_x)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ProjectedSubgradient, DeterministicAcrossRuns) {
  const auto inst = clean_instance(10, 5);
  const double b = 0.3 * inst.problem.cost.sum();
  const DescentResult a = projected_subgradient(Metric::D, inst.problem, b);
  const DescentResult c = projected_subgradient(Metric::D, inst.problem, b);
  EXPECT_EQ(a.f_convex_best, c.f_convex_best);
  EXPECT_EQ(a.f_lb, c.f_lb);
  EXPECT_EQ(a.iterations, c.iterations);
  EXPECT_EQ(a.x_best, c.x_best);
}

TEST(ProjectedSubgradient, RejectsBadConfig) {
  const auto inst = clean_instance(5, 6);
  EXPECT_THROW(projected_subgradient(Metric::A, inst.problem, 0.0), InvalidConfig);
  DescentConfig cfg;
  cfg.x0_policy = DescentConfig::custom;
  cfg.x0 = RVector::Zero(1);
  EXPECT_THROW(projected_subgradient(Metric::A, inst.problem, 1.0, cfg), InvalidConfig);
}

TEST(RoundConvex, PicksHighestWeightsWithinBudget) {
  RVector x(4), cost(4);
  x << 0.9, 0.2, 0.8, 0.4;
  cost << 1.0, 1.0, 1.0, 1.0;
  const RVector r = round_convex(x, cost, 2.0);
  RVector expect(4);
  expect << 1, 0, 1, 0;
  EXPECT_EQ(r, expect);
}

TEST(RoundConvex, TieBreaksByCostThenIndex) {
  RVector x(3), cost(3);
  x << 0.5, 0.5, 0.5;
  cost << 2.0, 1.0, 1.0;
  const RVector r = round_convex(x, cost, 1.0);
  RVector expect(3);
  expect << 0, 1, 0;  // same weight: cheaper wins, then the lower index
  EXPECT_EQ(r, expect);
}

TEST(RoundConvex, MaximalWithinBudget) {
  // keeps adding affordable candidates even after the top picks
  RVector x(3), cost(3);
  x << 0.9, 0.8, 0.1;
  cost << 2.0, 2.0, 0.5;
  const RVector r = round_convex(x, cost, 2.6);
  RVector expect(3);
  expect << 1, 0, 1;  // second pick unaffordable, third still fits
  EXPECT_EQ(r, expect);
}

TEST(Greedy, StopsAtBudget) {
  const auto inst = clean_instance(10, 7);
  const double b = 3.0;  // unit costs: exactly three sensors
  const GreedyResult res = greedy_cost_effective(Metric::A, inst.problem, b);
  EXPECT_EQ(res.selected.size(), 3u);
  EXPECT_EQ(res.x.sum(), 3.0);
  EXPECT_LE(inst.problem.cost.dot(res.x), b + 1e-12);
}

TEST(Greedy, BudgetBelowCheapestSelectsNothing) {
  const auto inst = clean_instance(6, 8);
  const GreedyResult res = greedy_cost_effective(Metric::A, inst.problem, 0.5);
  EXPECT_TRUE(res.selected.empty());
  const double f_prior =
      metric_value(posterior_cov(inst.problem, RVector::Zero(inst.problem.n_x)), Metric::A);
  EXPECT_EQ(res.value, f_prior);
}

TEST(Greedy, VariantsAgreeWithEqualCosts) {
  // with c_i = 1 the two rankings order candidates identically
  for (std::uint64_t seed : {9u, 10u}) {
    const auto inst = clean_instance(10, seed);
    const double b = 4.0;
    for (Metric metric : {Metric::A, Metric::D}) {
      const GreedyResult a = greedy_cost_effective(metric, inst.problem, b,
                                                   GreedyVariant::as_written);
      const GreedyResult r = greedy_cost_effective(metric, inst.problem, b,
                                                   GreedyVariant::improvement_ratio);
      EXPECT_EQ(a.selected, r.selected) << "metric " << to_string(metric) << " seed " << seed;
    }
  }
}

TEST(Greedy, TrajectoryValuesDecrease) {
  const auto inst = make_instance(12, 11);
  const GreedyResult res = greedy_cost_effective(Metric::D, inst.problem, 5.0);
  PosteriorCovariance cov = posterior_cov(inst.problem, RVector::Zero(inst.problem.n_x));
  double prev = metric_value(cov, Metric::D);
  for (int i : res.selected) {
    cov = rank_one_add(inst.problem, cov, i);
    const double cur = metric_value(cov, Metric::D);
    EXPECT_LE(cur, prev + 1e-9 * std::max(1.0, std::abs(prev)));
    prev = cur;
  }
}

TEST(Greedy, IncrementalScoresMatchFullEvaluation) {
  // one greedy step ranked against direct f(x + e_i) recomputation
  const auto inst = clean_instance(8, 12);
  const PlacementProblem& p = inst.problem;
  for (Metric metric : {Metric::A, Metric::D, Metric::E, Metric::M}) {
    const GreedyResult res = greedy_cost_effective(metric, p, 1.0);
    ASSERT_EQ(res.selected.size(), 1u);
    int best = -1;
    double best_f = 0.0;
    for (int i = 0; i < p.n_x; ++i) {
      RVector x = RVector::Zero(p.n_x);
      x(i) = 1.0;
      const double f = metric_value(posterior_cov(p, x), metric);
      if (best < 0 || f < best_f - 1e-12 * std::abs(best_f)) {
        best = i;
        best_f = f;
      }
    }
    EXPECT_EQ(res.selected[0], best) << "metric " << to_string(metric);
  }
}

TEST(BruteForce, MatchesExhaustiveExpectations) {
  const PlacementProblem p = scalar_problem(1.0, 4.0);
  const auto [x, f] = brute_force_opt(Metric::A, p, 1.0);
  EXPECT_EQ(x(0), 1.0);
  EXPECT_NEAR(f, 0.2, 1e-14);
}

TEST(BruteForce, RejectsLargeInstances) {
  const auto inst = clean_instance(15, 13);
  ASSERT_GT(inst.problem.n_x, 22);
  EXPECT_THROW(brute_force_opt(Metric::A, inst.problem, 3.0), TooLarge);
}

TEST(ComputeBounds, SandwichHoldsOnSmallInstances) {
  pmuplace::testing::InstanceOpts opts;
  opts.feeder.zero_injection_frac = 0.0;
  opts.filter.bus_current = false;
  opts.filter.branch_current = false;  // voltage rows only keeps n_x small
  for (std::uint64_t seed : {14u, 15u, 16u}) {
    const auto inst = make_instance(5, seed, opts);
    ASSERT_LE(inst.problem.n_x, 12);
    const double b = std::max(1.0, 0.4 * inst.problem.cost.sum());
    for (Metric metric : {Metric::A, Metric::D, Metric::E, Metric::M}) {
      const BoundsReport rep = compute_bounds(metric, inst.problem, b);
      const auto [x_opt, f_opt] = brute_force_opt(metric, inst.problem, b);
      const double scale = std::max(1.0, std::abs(f_opt));
      EXPECT_LE(rep.f_lb, f_opt + 1e-8 * scale)
          << "metric " << to_string(metric) << " seed " << seed;
      EXPECT_GE(rep.min_upper(), f_opt - 1e-8 * scale)
          << "metric " << to_string(metric) << " seed " << seed;
      EXPECT_GE(rep.gap(), -1e-8 * scale);
      EXPECT_GE(rep.seconds, 0.0);
    }
  }
}

TEST(ComputeBounds, BudgetSweepImprovesMonotonically) {
  const auto inst = clean_instance(8, 17);
  double prev = std::numeric_limits<double>::infinity();
  for (double b : {1.0, 2.0, 3.0, 4.0}) {
    const BoundsReport rep = compute_bounds(Metric::A, inst.problem, b);
    EXPECT_LE(rep.f_greedy, prev + 1e-9);
    prev = rep.f_greedy;
  }
}

TEST(ComputeBounds, ReportRowFormat) {
  const auto inst = clean_instance(6, 18);
  const BoundsReport rep = compute_bounds(Metric::D, inst.problem, 2.0);
  std::ostringstream os;
  write_bounds_header(os);
  write_bounds_row(os, rep);
  const std::string text = os.str();
  EXPECT_NE(text.find("metric\tbudget\tf_lb"), std::string::npos);
  EXPECT_EQ(text.substr(text.find('\n') + 1, 2), "D\t");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(ComputeBounds, NumericColumnsAreDeterministic) {
  const auto inst = clean_instance(8, 19);
  const BoundsReport a = compute_bounds(Metric::E, inst.problem, 2.0);
  const BoundsReport b = compute_bounds(Metric::E, inst.problem, 2.0);
  EXPECT_EQ(a.f_lb, b.f_lb);
  EXPECT_EQ(a.f_convex_best, b.f_convex_best);
  EXPECT_EQ(a.f_feas, b.f_feas);
  EXPECT_EQ(a.f_greedy, b.f_greedy);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(a.feas_selected, b.feas_selected);
  EXPECT_EQ(a.greedy_selected, b.greedy_selected);
}
