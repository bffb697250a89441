#pragma once

#include <Eigen/Dense>

#include "skillrl/common.hpp"

namespace skillrl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/* Exponential-family primitives shared by the mixture model, the codec
 * losses and the agent: diagonal/full Gaussians, Normal-Inverse-Wishart
 * parameters and weighted sufficient statistics.  All values are immutable
 * in spirit; every operation returns a fresh value. */

struct DiagGaussian {
  VectorXd mean;
  VectorXd log_var;

  int dim() const { return static_cast<int>(mean.size()); }
  void validate() const;
};

struct FullGaussian {
  VectorXd mean;
  MatrixXd cov;  // SPD, symmetric within 1e-9

  int dim() const { return static_cast<int>(mean.size()); }
  void validate() const;
};

struct NIWParams {
  VectorXd m;      // location
  double kappa;    // location confidence, > 0
  double nu;       // degrees of freedom, > D - 1
  MatrixXd scatter;  // SPD scale matrix

  int dim() const { return static_cast<int>(m.size()); }
  void validate() const;
};

struct SuffStats {
  double count = 0.0;
  VectorXd sum_x;
  MatrixXd sum_xx;

  static SuffStats zero(int D);
  int dim() const { return static_cast<int>(sum_x.size()); }
  void validate() const;
};

// (A + A^T)/2, applied before every factorization
MatrixXd symmetrized(const MatrixXd& a);

// Cholesky factor of a symmetric positive definite matrix; throws NumericError
Eigen::LLT<MatrixXd> cholesky(const MatrixXd& a, const char* what);

double log_det_from_llt(const Eigen::LLT<MatrixXd>& llt);

/* KL divergences between Gaussians, closed form. */
double kl_diag_diag(const DiagGaussian& q, const DiagGaussian& p);
double kl_diag_full(const DiagGaussian& q, const FullGaussian& p);
double kl_full_full(const FullGaussian& q, const FullGaussian& p);

// entropy of a diagonal Gaussian and cross-entropy E_q[-log p], closed form
double entropy_diag(const DiagGaussian& q);
double cross_entropy_diag_diag(const DiagGaussian& q, const DiagGaussian& p);

/* Weighted sufficient statistics.  points is N x D (rows are samples),
 * weights has N entries in [0, 1]. */
SuffStats stats_from_batch(const MatrixXd& points, const VectorXd& weights);
SuffStats stats_add(const SuffStats& a, const SuffStats& b);
SuffStats stats_sub(const SuffStats& a, const SuffStats& b);  // memoized removal

/* Conjugate posterior update of an NIW prior with weighted stats:
 *   kappa' = kappa + N,  nu' = nu + N,  m' = (kappa m + sum_x) / kappa',
 *   S' = S + sum_xx + kappa m m^T - kappa' m' m'^T. */
NIWParams niw_posterior(const NIWParams& prior, const SuffStats& stats);

/* E[log N(x | mu, Sigma)] under (mu, Sigma) ~ NIW(post):
 *   0.5 E[log det Lambda] - D/2 log 2pi - 0.5 (nu (x-m)^T S^-1 (x-m) + D/kappa)
 * with E[log det Lambda] = sum_d psi((nu+1-d)/2) + D log 2 - log det S. */
double expected_log_lik(const VectorXd& x, const NIWParams& post);

// batched version: one value per row of points
VectorXd expected_log_lik_batch(const MatrixXd& points, const NIWParams& post);

double expected_log_det_precision(const NIWParams& post);

// KL(Beta(a, b) || Beta(a0, b0))
double beta_kl(double a, double b, double a0, double b0);

// KL(NIW(q) || NIW(p)), closed form via the Normal and Wishart parts
double niw_kl(const NIWParams& q, const NIWParams& p);

}  // namespace skillrl
