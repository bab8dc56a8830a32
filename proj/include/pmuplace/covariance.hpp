#pragma once

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "pmuplace/measurement.hpp"
#include "pmuplace/state_estimation.hpp"

namespace pmuplace {

enum class Metric { A, D, E, M };

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::A: return "A";
    case Metric::D: return "D";
    case Metric::E: return "E";
    case Metric::M: return "M";
  }
  return "?";
}

inline Metric metric_from_string(const std::string& s) {
  if (s == "A") return Metric::A;
  if (s == "D") return Metric::D;
  if (s == "E") return Metric::E;
  if (s == "M") return Metric::M;
  throw InvalidConfig("unknown metric '" + s + "' (expected A, D, E or M)");
}

struct PlacementVector {
  RVector x;
  bool binary = true;
  RVector cost;
  double budget = 0.0;

  bool feasible(double tol = 1e-9) const { return cost.dot(x) <= budget + tol; }
};

// Immutable per-instance data shared by all covariance evaluations.
struct PlacementProblem {
  CMatrix sigma_prior;
  CMatrix sigma_prior_inv;
  SparseCMatrix c;       // n_x x N candidate measurement matrix
  RVector meas_weight;   // (Sigma_meas^-1)_{ii}
  RVector cost;
  int n_x = 0;
  int n_state = 0;
};

inline PlacementProblem make_problem(const PriorState& prior, const CandidateSet& set) {
  PlacementProblem p;
  p.sigma_prior = prior.sigma;
  p.sigma_prior_inv = prior.sigma_inv;
  p.c = set.c;
  p.meas_weight = set.sigma_meas_diag.cwiseInverse();
  p.cost = set.cost;
  p.n_x = set.size();
  p.n_state = static_cast<int>(prior.v.size());
  return p;
}

struct PosteriorCovariance {
  CMatrix sigma;            // Sigma_post = M(x)^-1
  double log_det_sigma = 0.0;
  RVector x;

  // lazily filled by metric_value
  mutable bool eig_valid = false;
  mutable double lambda_max = 0.0;
  mutable CVector u_max;
  mutable int max_diag_index = -1;

  void invalidate_cache() const {
    eig_valid = false;
    max_diag_index = -1;
  }
};

// Sigma_post(x) = (Sigma_prior^-1 + sum_i x_i C_i^H C_i w_i)^-1.
inline PosteriorCovariance posterior_cov(const PlacementProblem& p, const RVector& x) {
  if (x.size() != p.n_x) throw ShapeMismatch("posterior_cov: placement length != candidate count");
  if (p.n_x > 0 && (x.minCoeff() < -1e-12 || x.maxCoeff() > 1 + 1e-12))
    throw ShapeMismatch("posterior_cov: placement weights outside [0,1]");
  CMatrix m = p.sigma_prior_inv;
  SparseCMatrix scaled = p.c;
  for (int i = 0; i < p.n_x; ++i) {
    const double s = std::sqrt(std::max(0.0, x(i)) * p.meas_weight(i));
    scaled.row(i) *= s;
  }
  m += CMatrix(SparseCMatrix(scaled.adjoint() * scaled));
  m = 0.5 * (m + m.adjoint()).eval();
  Eigen::LLT<CMatrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw SingularPrior("information matrix M(x) is not positive definite");
  PosteriorCovariance cov;
  cov.sigma = llt.solve(CMatrix::Identity(p.n_state, p.n_state));
  cov.sigma = 0.5 * (cov.sigma + cov.sigma.adjoint()).eval();
  cov.log_det_sigma = -2.0 * llt.matrixL().toDenseMatrix().diagonal().real().array().log().sum();
  cov.x = x;
  return cov;
}

// Sherman-Morrison add of candidate i at full weight.
inline PosteriorCovariance rank_one_add(const PlacementProblem& p, const PosteriorCovariance& cov,
                                        int i) {
  if (i < 0 || i >= p.n_x) throw UnknownCandidate("rank_one_add: candidate index out of range");
  if (cov.x(i) != 0.0) throw AlreadySelected("candidate " + std::to_string(i) + " already selected");
  PosteriorCovariance out;
  out.x = cov.x;
  out.x(i) = 1.0;
  const double w = p.meas_weight(i);
  if (w == 0.0) {
    out.sigma = cov.sigma;
    out.log_det_sigma = cov.log_det_sigma;
    return out;
  }
  CVector h = CVector::Zero(p.n_state);  // Sigma C_i^H
  for (SparseCMatrix::InnerIterator it(p.c, i); it; ++it)
    h += cov.sigma.col(it.col()) * std::conj(it.value());
  double q = 0.0;  // C_i Sigma C_i^H
  for (SparseCMatrix::InnerIterator it(p.c, i); it; ++it)
    q += (it.value() * h(it.col())).real();
  const double beta = w / (1.0 + w * q);
  out.sigma = cov.sigma - beta * (h * h.adjoint());
  out.sigma = 0.5 * (out.sigma + out.sigma.adjoint()).eval();
  out.log_det_sigma = cov.log_det_sigma - std::log1p(w * q);
  return out;
}

namespace detail {

// Deterministic eigenvector phase: first component above threshold made real positive.
inline void fix_eigvec_sign(CVector& u) {
  const double norm = u.norm();
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    if (std::abs(u(k)) > 1e-12 * norm) {
      u *= std::conj(u(k)) / std::abs(u(k));
      return;
    }
  }
}

inline void solve_top_eigenpair(const PosteriorCovariance& cov) {
  if (cov.eig_valid) return;
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(cov.sigma);
  if (eig.info() != Eigen::Success) throw EigensolverFailure("eigendecomposition failed");
  const Eigen::Index last = cov.sigma.rows() - 1;
  cov.lambda_max = eig.eigenvalues()(last);
  cov.u_max = eig.eigenvectors().col(last);
  fix_eigvec_sign(cov.u_max);
  const double residual =
      (cov.sigma * cov.u_max - cov.lambda_max * cov.u_max).norm() / std::max(1.0, cov.lambda_max);
  if (residual > 1e-8)
    throw EigensolverFailure("eigenpair residual " + std::to_string(residual) + " above 1e-8");
  cov.eig_valid = true;
}

inline int max_diag_index(const PosteriorCovariance& cov) {
  if (cov.max_diag_index >= 0) return cov.max_diag_index;
  const RVector d = cov.sigma.diagonal().real();
  int best = 0;
  for (int k = 1; k < d.size(); ++k)
    if (d(k) > d(best)) best = k;  // ties keep the lowest index
  cov.max_diag_index = best;
  return best;
}

}  // namespace detail

inline double metric_value(const PosteriorCovariance& cov, Metric metric) {
  switch (metric) {
    case Metric::A: {
      const Complex t = cov.sigma.trace();
      if (!std::isfinite(t.real()) || std::abs(t.imag()) > 1e-10 * std::abs(t.real()) + 1e-12)
        throw NonFiniteMetric("trace of Sigma_post is not a finite real value");
      return t.real();
    }
    case Metric::D: {
      if (!std::isfinite(cov.log_det_sigma))
        throw NonFiniteMetric("log det Sigma_post is not finite");
      return cov.log_det_sigma;
    }
    case Metric::E: {
      detail::solve_top_eigenpair(cov);
      return cov.lambda_max;
    }
    case Metric::M: {
      return cov.sigma.diagonal().real()(detail::max_diag_index(cov));
    }
  }
  throw NonFiniteMetric("unknown metric");
}

// Gradients (A, D) and subgradients (E, M) of the relaxed objective; every
// component is nonpositive, which keeps the descent iterates projectable.
inline RVector metric_gradient(const PlacementProblem& p, const RVector& x,
                               const PosteriorCovariance& cov, Metric metric) {
  if (x.size() != p.n_x || cov.x.size() != p.n_x)
    throw ShapeMismatch("metric_gradient: placement length mismatch");
  RVector g(p.n_x);
  switch (metric) {
    case Metric::A: {
      const CMatrix gs = p.c * cov.sigma;  // row i = C_i Sigma
      for (int i = 0; i < p.n_x; ++i) g(i) = -gs.row(i).squaredNorm() * p.meas_weight(i);
      break;
    }
    case Metric::D: {
      const CMatrix gs = p.c * cov.sigma;
      for (int i = 0; i < p.n_x; ++i) {
        double q = 0.0;
        for (SparseCMatrix::InnerIterator it(p.c, i); it; ++it)
          q += (gs(i, it.col()) * std::conj(it.value())).real();
        g(i) = -q * p.meas_weight(i);
      }
      break;
    }
    case Metric::E: {
      detail::solve_top_eigenpair(cov);
      const CVector v = cov.sigma * cov.u_max;
      for (int i = 0; i < p.n_x; ++i) {
        Complex dot(0, 0);
        for (SparseCMatrix::InnerIterator it(p.c, i); it; ++it) dot += it.value() * v(it.col());
        g(i) = -std::norm(dot) * p.meas_weight(i);
      }
      break;
    }
    case Metric::M: {
      const int idx = detail::max_diag_index(cov);
      const CVector v = cov.sigma.col(idx);
      for (int i = 0; i < p.n_x; ++i) {
        Complex dot(0, 0);
        for (SparseCMatrix::InnerIterator it(p.c, i); it; ++it) dot += it.value() * v(it.col());
        g(i) = -std::norm(dot) * p.meas_weight(i);
      }
      break;
    }
  }
  return g.cwiseMin(0.0);
}

}  // namespace pmuplace
