#pragma once

#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <vector>

#include "pmuplace/covariance.hpp"
#include "pmuplace/projection.hpp"

namespace pmuplace {

struct DescentConfig {
  double alpha = 1.0;       // step scale in alpha^(k) = alpha / (k ||grad||)
  int max_iter = 500;
  double rel_tol = 1e-6;    // stop when the best objective stalls over the window
  int stall_window = 50;
  enum X0Policy { uniform_budget, zero, custom } x0_policy = uniform_budget;
  RVector x0;               // custom only
};

struct DescentResult {
  RVector x_best;           // fractional, feasible for the relaxed problem
  double f_convex_best = 0.0;
  double f_lb = 0.0;        // certified linearization lower bound
  int iterations = 0;
};

namespace detail {

// Exact minimum of g^T x' over { c^T x' <= b, 0 <= x' <= 1 } for g <= 0:
// fractional knapsack on the most negative gradient-to-cost ratio.
inline double knapsack_min(const RVector& g, const RVector& c, double b) {
  std::vector<int> order(g.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    const double ri = g(i) / c(i), rj = g(j) / c(j);
    if (ri != rj) return ri < rj;
    return i < j;
  });
  double remaining = b, value = 0.0;
  for (int i : order) {
    if (g(i) >= 0 || remaining <= 0) break;
    const double take = std::min(1.0, remaining / c(i));
    value += take * g(i);
    remaining -= take * c(i);
  }
  return value;
}

}  // namespace detail

// Projected subgradient descent on the relaxed problem in y = x .* c space,
// tracking the best iterate and the linearization lower bound
// f(x) + min_{x' in X} grad f(x)^T (x' - x), which is valid at every iterate.
inline DescentResult projected_subgradient(Metric metric, const PlacementProblem& p, double b,
                                           const DescentConfig& cfg = {}) {
  if (b <= 0) throw InvalidConfig("projected_subgradient: budget must be positive");
  if (p.n_x == 0) throw InvalidConfig("projected_subgradient: empty candidate set");
  if (b < p.cost.minCoeff())
    std::cerr << "warning: budget " << b
              << " is below the cheapest sensor; the binary problem is empty\n";

  RVector x0;
  switch (cfg.x0_policy) {
    case DescentConfig::uniform_budget:
      x0 = RVector::Constant(p.n_x, std::min(1.0, b / p.cost.sum()));
      break;
    case DescentConfig::zero:
      x0 = RVector::Zero(p.n_x);
      break;
    case DescentConfig::custom:
      if (cfg.x0.size() != p.n_x) throw InvalidConfig("custom x0 has wrong length");
      x0 = cfg.x0;
      break;
  }

  const BoxSimplex set{b, p.cost};
  RVector y = x0.cwiseProduct(p.cost);
  DescentResult res;
  res.f_convex_best = std::numeric_limits<double>::infinity();
  res.f_lb = -std::numeric_limits<double>::infinity();
  std::vector<double> best_trace;

  for (int k = 1; k <= cfg.max_iter; ++k) {
    const RVector x = y.cwiseQuotient(p.cost);
    const PosteriorCovariance cov = posterior_cov(p, x.cwiseMin(1.0).cwiseMax(0.0));
    const double f = metric_value(cov, metric);
    if (!std::isfinite(f)) throw NonFiniteObjective("objective is not finite at iteration " +
                                                    std::to_string(k));
    if (f < res.f_convex_best) {
      res.f_convex_best = f;
      res.x_best = x;
    }
    const RVector g = metric_gradient(p, x, cov, metric);
    const double lb = f + detail::knapsack_min(g, p.cost, b) - g.dot(x);
    if (lb > res.f_lb) res.f_lb = lb;
    res.iterations = k;
    best_trace.push_back(res.f_convex_best);

    if (static_cast<int>(best_trace.size()) > cfg.stall_window) {
      const double before = best_trace[best_trace.size() - 1 - cfg.stall_window];
      if (before - res.f_convex_best < cfg.rel_tol * std::max(1.0, std::abs(res.f_convex_best)))
        break;
    }

    const RVector gy = g.cwiseQuotient(p.cost);
    const double gn = gy.norm();
    if (gn < 1e-15) break;  // stationary
    const double step = cfg.alpha / (static_cast<double>(k) * gn);
    y = project((y - step * gy).cwiseMax(0.0), set);
  }
  return res;
}

// Feasible rounding: repeatedly pick the affordable unselected candidate with
// the highest relaxed weight; ties by lower cost, then lower index.
inline RVector round_convex(const RVector& x_convex, const RVector& cost, double b) {
  const Eigen::Index n = x_convex.size();
  RVector x = RVector::Zero(n);
  double remaining = b;
  while (true) {
    int best = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (x(i) != 0.0 || cost(i) > remaining) continue;
      if (best < 0 || x_convex(i) > x_convex(best) ||
          (x_convex(i) == x_convex(best) &&
           (cost(i) < cost(best) || (cost(i) == cost(best) && i < best))))
        best = static_cast<int>(i);
    }
    if (best < 0) break;
    x(best) = 1.0;
    remaining -= cost(best);
  }
  return x;
}

enum class GreedyVariant { as_written, improvement_ratio };

struct GreedyResult {
  RVector x;
  double value = 0.0;
  std::vector<int> selected;  // in pick order
};

namespace detail {

// Metric value after adding candidate i at full weight, from the cached
// Sherman-Morrison quantities. h = Sigma C_i^H, q = C_i Sigma C_i^H.
inline double updated_metric(const PlacementProblem& p, const PosteriorCovariance& cov,
                             Metric metric, int i, const CVector& h, double q, double trace_now) {
  const double w = p.meas_weight(i);
  const double beta = w / (1.0 + w * q);
  switch (metric) {
    case Metric::A:
      return trace_now - beta * h.squaredNorm();
    case Metric::D:
      return cov.log_det_sigma - std::log1p(w * q);
    case Metric::M: {
      const RVector d = cov.sigma.diagonal().real() - beta * h.cwiseAbs2();
      return d.maxCoeff();
    }
    case Metric::E: {
      // warm-started power iteration on Sigma' = Sigma - beta h h^H
      solve_top_eigenpair(cov);
      CVector u = cov.u_max;
      double lam = cov.lambda_max;
      for (int it = 0; it < 200; ++it) {
        CVector v = cov.sigma * u - beta * h * (h.dot(u));
        const double vn = v.norm();
        if (vn == 0) return 0.0;
        v /= vn;
        const double lam_new = (v.adjoint() * (cov.sigma * v - beta * h * (h.dot(v))))(0).real();
        const bool done = std::abs(lam_new - lam) < 1e-10 * std::max(1.0, std::abs(lam_new));
        u = v;
        lam = lam_new;
        if (done) break;
      }
      return lam;
    }
  }
  return 0.0;
}

}  // namespace detail

// Cost-effective forward greedy. as_written ranks by f(x + e_i) / c_i, the
// improvement_ratio variant by (f(x) - f(x + e_i)) / c_i.
inline GreedyResult greedy_cost_effective(Metric metric, const PlacementProblem& p, double b,
                                          GreedyVariant variant = GreedyVariant::as_written) {
  if (b <= 0) throw InvalidConfig("greedy_cost_effective: budget must be positive");
  GreedyResult res;
  PosteriorCovariance cov = posterior_cov(p, RVector::Zero(p.n_x));
  double remaining = b;
  double f_cur = metric_value(cov, metric);

  while (true) {
    const CMatrix gs = p.c * cov.sigma;  // row i = C_i Sigma
    int best = -1;
    double best_score = 0.0;
    for (int i = 0; i < p.n_x; ++i) {
      if (cov.x(i) != 0.0 || p.cost(i) > remaining) continue;
      const CVector h = gs.row(i).adjoint();
      double q = 0.0;
      for (SparseCMatrix::InnerIterator it(p.c, i); it; ++it)
        q += (it.value() * h(it.col())).real();
      const double f_new = detail::updated_metric(p, cov, metric, i, h, q, f_cur);
      const double score = variant == GreedyVariant::as_written
                               ? f_new / p.cost(i)
                               : -(f_cur - f_new) / p.cost(i);
      if (best < 0 || score < best_score) {
        best = i;
        best_score = score;
      }
    }
    if (best < 0) break;
    cov = rank_one_add(p, cov, best);
    remaining -= p.cost(best);
    res.selected.push_back(best);
    f_cur = metric_value(cov, metric);
  }

  res.x = cov.x;
  // full recompute guards rank-one drift in the reported value
  res.value = metric_value(posterior_cov(p, res.x), metric);
  return res;
}

// Exact minimizer by enumeration; test-scale oracle.
inline std::pair<RVector, double> brute_force_opt(Metric metric, const PlacementProblem& p,
                                                  double b) {
  if (p.n_x > 22) throw TooLarge("brute_force_opt: candidate count above enumeration bound");
  RVector best_x = RVector::Zero(p.n_x);
  double best_f = metric_value(posterior_cov(p, best_x), metric);
  const std::uint32_t lim = 1u << p.n_x;
  for (std::uint32_t mask = 1; mask < lim; ++mask) {
    RVector x(p.n_x);
    double cost = 0.0;
    for (int i = 0; i < p.n_x; ++i) {
      x(i) = (mask >> i) & 1 ? 1.0 : 0.0;
      cost += x(i) * p.cost(i);
    }
    if (cost > b) continue;
    const double f = metric_value(posterior_cov(p, x), metric);
    if (f < best_f ||
        (f == best_f && std::lexicographical_compare(x.data(), x.data() + p.n_x, best_x.data(),
                                                     best_x.data() + p.n_x))) {
      best_f = f;
      best_x = x;
    }
  }
  return {best_x, best_f};
}

struct BoundsReport {
  Metric metric = Metric::A;
  double budget = 0.0;
  double f_lb = 0.0;
  double f_convex_best = 0.0;
  double f_feas = 0.0;
  double f_greedy = 0.0;
  std::vector<int> feas_selected;
  std::vector<int> greedy_selected;
  int iterations = 0;
  double seconds = 0.0;

  double min_upper() const { return std::min(f_feas, f_greedy); }
  double gap() const { return min_upper() - f_lb; }
};

inline BoundsReport compute_bounds(Metric metric, const PlacementProblem& p, double b,
                                   const DescentConfig& cfg = {},
                                   GreedyVariant variant = GreedyVariant::as_written) {
  const auto t0 = std::chrono::steady_clock::now();
  BoundsReport rep;
  rep.metric = metric;
  rep.budget = b;

  const DescentResult dr = projected_subgradient(metric, p, b, cfg);
  rep.f_lb = dr.f_lb;
  rep.f_convex_best = dr.f_convex_best;
  rep.iterations = dr.iterations;

  const RVector x_feas = round_convex(dr.x_best, p.cost, b);
  rep.f_feas = metric_value(posterior_cov(p, x_feas), metric);
  for (int i = 0; i < p.n_x; ++i)
    if (x_feas(i) != 0.0) rep.feas_selected.push_back(i);

  const GreedyResult gr = greedy_cost_effective(metric, p, b, variant);
  rep.f_greedy = gr.value;
  rep.greedy_selected = gr.selected;

  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline void write_bounds_header(std::ostream& out) {
  out << "metric\tbudget\tf_lb\tf_convex_best\tf_feas\tf_greedy\titers\tseconds\n";
}

inline void write_bounds_row(std::ostream& out, const BoundsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s\t%.6g\t%.9g\t%.9g\t%.9g\t%.9g\t%d\t%.3f\n",
                to_string(r.metric).c_str(), r.budget, r.f_lb, r.f_convex_best, r.f_feas,
                r.f_greedy, r.iterations, r.seconds);
  out << buf;
}

}  // namespace pmuplace
