#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Cholesky>

#include "pmuplace/grid.hpp"
#include "pmuplace/measurement.hpp"

namespace pmuplace {

// Pseudo-measurement load vector in state-index order.
inline CVector nominal_loads(const GridModel& grid, const NodeIndex& idx) {
  CVector s(idx.n_state);
  for (int k = 0; k < idx.n_state; ++k) {
    const auto [bus_id, phase] = idx.node_of[idx.global_of_state[k]];
    s(k) = grid.find_bus(bus_id)->load[phase];
  }
  return s;
}

inline std::vector<bool> zero_injection_mask(const GridModel& grid, const NodeIndex& idx) {
  std::vector<bool> mask(idx.n_state);
  for (int k = 0; k < idx.n_state; ++k)
    mask[k] = grid.find_bus(idx.node_of[idx.global_of_state[k]].first)->kind ==
              BusKind::zero_injection;
  return mask;
}

inline Eigen::Vector3cd source_phasors(const GridModel& grid) {
  return Eigen::Vector3cd(grid.v_source[0], grid.v_source[1], grid.v_source[2]);
}

// Fixed-point power flow V <- Y_LL^-1 (conj(S / V) - Y_Lsrc V_src), flat start.
inline CVector power_flow(const GridModel& grid, const AdmittanceMatrix& adm,
                          const CVector& s_psd, int max_iter = 100, double tol = 1e-10,
                          double residual_tol = 1e-8) {
  const int n = adm.index.n_state;
  if (s_psd.size() != n) throw ShapeMismatch("power_flow: S_psd has wrong length");
  const CVector src_term = adm.y_lsrc * source_phasors(grid);
  CVector v = adm.lu_ll.solve(-src_term);  // no-load solution
  for (int it = 0; it < max_iter; ++it) {
    CVector rhs(n);
    for (int k = 0; k < n; ++k) {
      if (std::abs(v(k)) < 1e-6)
        throw PowerFlowDiverged("voltage collapsed at state index " + std::to_string(k));
      rhs(k) = std::conj(s_psd(k) / v(k));
    }
    const CVector v_next = adm.lu_ll.solve(rhs - src_term);
    const double dv = (v_next - v).cwiseAbs().maxCoeff();
    v = v_next;
    if (dv < tol) break;
  }
  const CVector i_ns = adm.y_ll * v + src_term;
  const CVector s_chk = i_ns.conjugate().cwiseProduct(v);
  const double res = (s_chk - s_psd).cwiseAbs().maxCoeff();
  if (res > residual_tol)
    throw PowerFlowDiverged("power flow residual " + std::to_string(res) + " above tolerance");
  return v;
}

enum class PriorMethod { linearization, monte_carlo };

// Per-state pseudo-measurement variances: (sigma_psd |S_k|)^2, with
// zero-injection entries pinned to a tiny virtual variance so the prior
// stays invertible.
inline RVector pseudo_variances(const GridModel& grid, const NodeIndex& idx, const CVector& s_psd,
                                double sigma_psd, double sigma_virt = 1e-6) {
  const auto zi = zero_injection_mask(grid, idx);
  double s_ref = 0.0;
  int n_loads = 0;
  for (int k = 0; k < idx.n_state; ++k) {
    if (!zi[k] && std::abs(s_psd(k)) > 0) {
      s_ref += std::abs(s_psd(k));
      ++n_loads;
    }
  }
  s_ref = n_loads > 0 ? s_ref / n_loads : 1.0;
  RVector var(idx.n_state);
  for (int k = 0; k < idx.n_state; ++k) {
    const double sig = zi[k] ? sigma_virt * s_ref : sigma_psd * std::abs(s_psd(k));
    var(k) = sig * sig;
  }
  return var;
}

inline CMatrix prior_covariance(const GridModel& grid, const AdmittanceMatrix& adm,
                                const CVector& s_psd, PriorMethod method, double sigma_psd,
                                int n_samples = 10000, std::uint64_t seed = 0,
                                double sigma_virt = 1e-6) {
  const int n = adm.index.n_state;
  const RVector var = pseudo_variances(grid, adm.index, s_psd, sigma_psd, sigma_virt);
  CMatrix sigma = CMatrix::Zero(n, n);

  if (method == PriorMethod::linearization) {
    const CVector v_base = power_flow(grid, adm, s_psd);
    for (int k = 0; k < n; ++k) {
      if (var(k) == 0.0) continue;
      const double h = 1e-6 * std::max(std::abs(s_psd(k)), 1.0);
      CVector s_re = s_psd;
      s_re(k) += h;
      const CVector j_re = (power_flow(grid, adm, s_re) - v_base) / h;
      CVector s_im = s_psd;
      s_im(k) += Complex(0.0, h);
      const CVector j_im = (power_flow(grid, adm, s_im) - v_base) / h;
      // circular load noise: half the variance on each real axis
      sigma += (0.5 * var(k)) * (j_re * j_re.adjoint() + j_im * j_im.adjoint());
    }
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<CVector> draws;
    draws.reserve(n_samples);
    CVector mean = CVector::Zero(n);
    for (int t = 0; t < n_samples; ++t) {
      CVector s = s_psd;
      for (int k = 0; k < n; ++k) {
        const double amp = std::sqrt(0.5 * var(k));
        s(k) += Complex(amp * gauss(rng), amp * gauss(rng));
      }
      CVector v = power_flow(grid, adm, s);
      mean += v;
      draws.push_back(std::move(v));
    }
    mean /= static_cast<double>(n_samples);
    for (const auto& v : draws) {
      const CVector d = v - mean;
      sigma += d * d.adjoint();
    }
    sigma /= static_cast<double>(std::max(1, n_samples - 1));
    sigma = 0.5 * (sigma + sigma.adjoint()).eval();
    sigma += (1e-10 * sigma.real().trace() / n) * CMatrix::Identity(n, n);
  }

  sigma = 0.5 * (sigma + sigma.adjoint()).eval();
  if (sigma.norm() > 0) {
    Eigen::LLT<CMatrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
      // at large N rounding in the rank-one sum can leave eigenvalues a hair
      // below zero; one ridge restores definiteness without moving the data
      sigma += (1e-10 * sigma.real().trace() / n) * CMatrix::Identity(n, n);
      llt.compute(sigma);
      if (llt.info() != Eigen::Success)
        throw SingularPrior("prior covariance failed the positive-definiteness check");
    }
  }
  return sigma;
}

struct PriorState {
  CVector v;          // V_prior
  CMatrix sigma;      // Sigma_prior
  CMatrix sigma_inv;
};

inline PriorState make_prior(const GridModel& grid, const AdmittanceMatrix& adm,
                             const CVector& s_psd, PriorMethod method, double sigma_psd,
                             int n_samples = 10000, std::uint64_t seed = 0,
                             double sigma_virt = 1e-6) {
  PriorState prior;
  prior.v = power_flow(grid, adm, s_psd);
  prior.sigma = prior_covariance(grid, adm, s_psd, method, sigma_psd, n_samples, seed, sigma_virt);
  Eigen::LLT<CMatrix> llt(prior.sigma);
  if (llt.info() != Eigen::Success)
    throw SingularPrior("prior covariance is not positive definite");
  prior.sigma_inv = llt.solve(CMatrix::Identity(prior.sigma.rows(), prior.sigma.cols()));
  prior.sigma_inv = 0.5 * (prior.sigma_inv + prior.sigma_inv.adjoint()).eval();
  return prior;
}

struct PosteriorState {
  CVector v;      // V_post
  CMatrix gain;   // K, N x N_meas
};

// Minimum-variance gain K = Sigma_prior C^H (C Sigma_prior C^H + Sigma_meas)^-1.
inline CMatrix kalman_gain(const CMatrix& sigma_prior, const CMatrix& c_meas,
                           const RVector& sigma_meas_diag) {
  CMatrix innov = c_meas * sigma_prior * c_meas.adjoint();
  innov += sigma_meas_diag.cast<Complex>().asDiagonal();
  Eigen::LLT<CMatrix> llt(innov);
  if (llt.info() != Eigen::Success)
    throw SingularPrior("innovation matrix is not positive definite");
  return llt.solve(c_meas * sigma_prior).adjoint();
}

inline PosteriorState posterior_update(const PriorState& prior, const CMatrix& c_meas,
                                       const RVector& sigma_meas_diag, const CVector& z_meas,
                                       const CVector& offsets = {}) {
  const Eigen::Index m = c_meas.rows();
  if (c_meas.cols() != prior.v.size())
    throw ShapeMismatch("posterior_update: C_meas column count != state dimension");
  if (sigma_meas_diag.size() != m || z_meas.size() != m)
    throw ShapeMismatch("posterior_update: measurement vector lengths disagree");
  PosteriorState post;
  if (m == 0) {
    post.v = prior.v;
    post.gain.resize(prior.v.size(), 0);
    return post;
  }
  post.gain = kalman_gain(prior.sigma, c_meas, sigma_meas_diag);
  CVector predicted = c_meas * prior.v;
  if (offsets.size() == m) predicted += offsets;
  post.v = prior.v + post.gain * (z_meas - predicted);
  return post;
}

// Update-form posterior covariance (the route through the gain matrix).
inline CMatrix posterior_covariance_update_form(const CMatrix& sigma_prior, const CMatrix& c_meas,
                                                const RVector& sigma_meas_diag) {
  if (c_meas.rows() == 0) return sigma_prior;
  const CMatrix k = kalman_gain(sigma_prior, c_meas, sigma_meas_diag);
  CMatrix sigma = sigma_prior - k * c_meas * sigma_prior;
  return 0.5 * (sigma + sigma.adjoint());
}

struct ValidationReport {
  int trials = 0;
  int diverged = 0;
  double deviation = 0.0;       // relative Frobenius, empirical vs Sigma_post
  double trace = 0.0;           // metric values of Sigma_post
  double log_det = 0.0;
  double lambda_max = 0.0;
  double max_diag = 0.0;
};

// Monte-Carlo check of Eq-style posterior covariance: run the full two-step
// estimator against sampled loads and measurement noise, and compare the
// empirical error covariance of V_post with the predicted Sigma_post.
inline ValidationReport validate_posterior_covariance(
    const GridModel& grid, const AdmittanceMatrix& adm, const CandidateSet& set,
    const std::vector<int>& selected, int n_trials, std::uint64_t seed,
    PriorMethod prior_method = PriorMethod::linearization, double sigma_virt = 1e-6) {
  if (n_trials < 1) throw InvalidConfig("validate_posterior_covariance needs n_trials >= 1");
  const int n = adm.index.n_state;
  const CVector s_psd = nominal_loads(grid, adm.index);
  const PriorState prior = make_prior(grid, adm, s_psd, prior_method, set.sigma_psd, 10000, seed,
                                      sigma_virt);

  const int m = static_cast<int>(selected.size());
  CMatrix c_sel = CMatrix::Zero(m, n);
  CVector offsets(m);
  RVector sig_diag(m);
  std::vector<CandidateMeasurement> cands;
  const CMatrix c_dense = CMatrix(set.c);
  for (int r = 0; r < m; ++r) {
    const int i = selected[r];
    if (i < 0 || i >= set.size()) throw UnknownCandidate("selected candidate id out of range");
    c_sel.row(r) = c_dense.row(i);
    offsets(r) = set.offsets(i);
    sig_diag(r) = set.sigma_meas_diag(i);
    cands.push_back(set.candidates[i]);
  }

  const CMatrix sigma_post = posterior_covariance_update_form(prior.sigma, c_sel, sig_diag);
  CMatrix gain;
  if (m > 0) gain = kalman_gain(prior.sigma, c_sel, sig_diag);

  const RVector var = pseudo_variances(grid, adm.index, s_psd, set.sigma_psd, sigma_virt);
  const auto zi = zero_injection_mask(grid, adm.index);

  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CMatrix acc = CMatrix::Zero(n, n);
  CVector mean = CVector::Zero(n);
  std::vector<CVector> errors;
  errors.reserve(n_trials);
  ValidationReport report;
  for (int t = 0; t < n_trials; ++t) {
    CVector s_true = s_psd;
    for (int k = 0; k < n; ++k) {
      if (zi[k]) continue;  // zero injections hold exactly
      const double amp = std::sqrt(0.5 * var(k));
      s_true(k) += Complex(amp * gauss(rng), amp * gauss(rng));
    }
    CVector v_true;
    try {
      v_true = power_flow(grid, adm, s_true);
    } catch (const PowerFlowDiverged&) {
      ++report.diverged;
      continue;
    }
    CVector v_post = prior.v;
    if (m > 0) {
      const CVector z_true = c_sel * v_true + offsets;
      const CVector z = apply_noise(z_true, cands, rng);
      v_post += gain * (z - c_sel * prior.v - offsets);
    }
    const CVector e = v_post - v_true;
    mean += e;
    errors.push_back(e);
  }
  const int used = static_cast<int>(errors.size());
  if (used < 2) throw InvalidConfig("too few successful validation trials");
  mean /= static_cast<double>(used);
  for (const auto& e : errors) {
    const CVector d = e - mean;
    acc += d * d.adjoint();
  }
  acc /= static_cast<double>(used - 1);

  report.trials = used;
  report.deviation = (acc - sigma_post).norm() / sigma_post.norm();
  report.trace = sigma_post.real().trace();
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(sigma_post, Eigen::EigenvaluesOnly);
  report.lambda_max = eig.eigenvalues().maxCoeff();
  report.log_det = eig.eigenvalues().array().log().sum();
  report.max_diag = sigma_post.diagonal().real().maxCoeff();
  return report;
}

}  // namespace pmuplace
