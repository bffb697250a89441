#include "skillrl/gauss.hpp"

#include <cmath>

#include "skillrl/special.hpp"

namespace skillrl {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_finite(const VectorXd& v, const char* what) {
  if (!v.allFinite()) throw ContractError(std::string(what) + ": non-finite entries");
}
}  // namespace

void DiagGaussian::validate() const {
  check(mean.size() == log_var.size(), "DiagGaussian: mean/log_var dims differ");
  check_finite(mean, "DiagGaussian.mean");
  check_finite(log_var, "DiagGaussian.log_var");
}

void FullGaussian::validate() const {
  check(mean.size() == cov.rows() && cov.rows() == cov.cols(),
        "FullGaussian: dimension mismatch");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw ContractError("FullGaussian: covariance not symmetric within 1e-9");
  cholesky(cov, "FullGaussian.cov");
}

void NIWParams::validate() const {
  const int D = dim();
  check(scatter.rows() == D && scatter.cols() == D, "NIWParams: dimension mismatch");
  if (!(kappa > 0.0)) throw ContractError("NIWParams: kappa must be positive");
  if (!(nu > D - 1.0)) throw ContractError("NIWParams: nu must exceed D - 1");
  cholesky(scatter, "NIWParams.scatter");
}

SuffStats SuffStats::zero(int D) {
  SuffStats s;
  s.count = 0.0;
  s.sum_x = VectorXd::Zero(D);
  s.sum_xx = MatrixXd::Zero(D, D);
  return s;
}

void SuffStats::validate() const {
  const int D = dim();
  check(sum_xx.rows() == D && sum_xx.cols() == D, "SuffStats: dimension mismatch");
  if (count < 0.0) throw ContractError("SuffStats: negative count");
  if (count == 0.0) {
    if (sum_x.cwiseAbs().maxCoeff() > 0.0 || sum_xx.cwiseAbs().maxCoeff() > 0.0)
      throw ContractError("SuffStats: zero count with nonzero moments");
    return;
  }
  // scatter about the weighted mean must be PSD within tolerance
  const MatrixXd centered = sum_xx - sum_x * sum_x.transpose() / count;
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrized(centered));
  if (es.eigenvalues().minCoeff() < -1e-8)
    throw ContractError("SuffStats: centered second moment not PSD within 1e-8");
}

MatrixXd symmetrized(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

Eigen::LLT<MatrixXd> cholesky(const MatrixXd& a, const char* what) {
  Eigen::LLT<MatrixXd> llt(symmetrized(a));
  if (llt.info() != Eigen::Success)
    throw NumericError(std::string(what) + ": Cholesky factorization failed (matrix not SPD)");
  return llt;
}

double log_det_from_llt(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double kl_diag_diag(const DiagGaussian& q, const DiagGaussian& p) {
  check(q.mean.size() == p.mean.size(), "kl_diag_diag: dimension mismatch");
  q.validate();
  p.validate();
  const Eigen::ArrayXd vq = q.log_var.array().exp();
  const Eigen::ArrayXd vp = p.log_var.array().exp();
  const Eigen::ArrayXd dm = (q.mean - p.mean).array();
  return (0.5 * (p.log_var - q.log_var).array() + (vq + dm.square()) / (2.0 * vp) - 0.5).sum();
}

double kl_diag_full(const DiagGaussian& q, const FullGaussian& p) {
  check(q.mean.size() == p.mean.size(), "kl_diag_full: dimension mismatch");
  q.validate();
  p.validate();
  const int D = q.dim();
  const auto llt = cholesky(p.cov, "kl_diag_full");
  const MatrixXd prec = llt.solve(MatrixXd::Identity(D, D));
  const VectorXd vq = q.log_var.array().exp().matrix();
  const VectorXd dm = q.mean - p.mean;
  const double trace_term = prec.diagonal().dot(vq);
  const double quad = dm.dot(prec * dm);
  return 0.5 * (log_det_from_llt(llt) - q.log_var.sum() - D + trace_term + quad);
}

double kl_full_full(const FullGaussian& q, const FullGaussian& p) {
  check(q.mean.size() == p.mean.size(), "kl_full_full: dimension mismatch");
  const int D = q.dim();
  const auto llt_q = cholesky(q.cov, "kl_full_full(q)");
  const auto llt_p = cholesky(p.cov, "kl_full_full(p)");
  const VectorXd dm = q.mean - p.mean;
  const double trace_term = llt_p.solve(q.cov).trace();
  const double quad = dm.dot(llt_p.solve(dm));
  return 0.5 * (log_det_from_llt(llt_p) - log_det_from_llt(llt_q) - D + trace_term + quad);
}

double entropy_diag(const DiagGaussian& q) {
  const int D = q.dim();
  return 0.5 * q.log_var.sum() + 0.5 * D * (1.0 + kLog2Pi);
}

double cross_entropy_diag_diag(const DiagGaussian& q, const DiagGaussian& p) {
  check(q.mean.size() == p.mean.size(), "cross_entropy_diag_diag: dimension mismatch");
  const Eigen::ArrayXd vq = q.log_var.array().exp();
  const Eigen::ArrayXd vp = p.log_var.array().exp();
  const Eigen::ArrayXd dm = (q.mean - p.mean).array();
  return 0.5 * (kLog2Pi + p.log_var.array() + (vq + dm.square()) / vp).sum();
}

SuffStats stats_from_batch(const MatrixXd& points, const VectorXd& weights) {
  check(points.rows() == weights.size(), "stats_from_batch: points/weights size mismatch");
  if (weights.size() > 0) {
    const double lo = weights.minCoeff(), hi = weights.maxCoeff();
    check(lo >= -1e-12 && hi <= 1.0 + 1e-12, "stats_from_batch: weights outside [0, 1]");
  }
  SuffStats s = SuffStats::zero(static_cast<int>(points.cols()));
  s.count = weights.sum();
  s.sum_x = points.transpose() * weights;
  s.sum_xx = points.transpose() * weights.asDiagonal() * points;
  s.sum_xx = symmetrized(s.sum_xx);
  return s;
}

SuffStats stats_add(const SuffStats& a, const SuffStats& b) {
  check(a.dim() == b.dim(), "stats_add: dimension mismatch");
  SuffStats s;
  s.count = a.count + b.count;
  s.sum_x = a.sum_x + b.sum_x;
  s.sum_xx = a.sum_xx + b.sum_xx;
  return s;
}

SuffStats stats_sub(const SuffStats& a, const SuffStats& b) {
  check(a.dim() == b.dim(), "stats_sub: dimension mismatch");
  SuffStats s;
  s.count = a.count - b.count;
  s.sum_x = a.sum_x - b.sum_x;
  s.sum_xx = a.sum_xx - b.sum_xx;
  if (s.count < -1e-6)
    throw NumericError("stats_sub: negative count after removal (memoization corrupted)");
  if (s.count < 0.0) s.count = 0.0;
  return s;
}

NIWParams niw_posterior(const NIWParams& prior, const SuffStats& stats) {
  prior.validate();
  check(prior.dim() == stats.dim(), "niw_posterior: dimension mismatch");
  if (stats.count == 0.0) return prior;
  NIWParams post;
  const double n = stats.count;
  post.kappa = prior.kappa + n;
  post.nu = prior.nu + n;
  post.m = (prior.kappa * prior.m + stats.sum_x) / post.kappa;
  post.scatter = prior.scatter + stats.sum_xx + prior.kappa * prior.m * prior.m.transpose() -
                 post.kappa * post.m * post.m.transpose();
  post.scatter = symmetrized(post.scatter);
  cholesky(post.scatter, "niw_posterior: posterior scatter");
  return post;
}

double expected_log_det_precision(const NIWParams& post) {
  const int D = post.dim();
  const auto llt = cholesky(post.scatter, "expected_log_det_precision");
  return mvdigamma(D, 0.5 * post.nu) + D * std::log(2.0) - log_det_from_llt(llt);
}

double expected_log_lik(const VectorXd& x, const NIWParams& post) {
  check(x.size() == post.m.size(), "expected_log_lik: dimension mismatch");
  const int D = post.dim();
  const auto llt = cholesky(post.scatter, "expected_log_lik");
  const double elogdet = mvdigamma(D, 0.5 * post.nu) + D * std::log(2.0) - log_det_from_llt(llt);
  const VectorXd d = x - post.m;
  const double maha = post.nu * d.dot(llt.solve(d));
  return 0.5 * elogdet - 0.5 * D * kLog2Pi - 0.5 * (maha + D / post.kappa);
}

VectorXd expected_log_lik_batch(const MatrixXd& points, const NIWParams& post) {
  check(points.cols() == post.m.size(), "expected_log_lik_batch: dimension mismatch");
  const int D = post.dim();
  const auto llt = cholesky(post.scatter, "expected_log_lik_batch");
  const double elogdet = mvdigamma(D, 0.5 * post.nu) + D * std::log(2.0) - log_det_from_llt(llt);
  const double base = 0.5 * elogdet - 0.5 * D * kLog2Pi - 0.5 * D / post.kappa;
  // Mahalanobis terms via one triangular solve for the whole batch
  MatrixXd centered = points.transpose();
  centered.colwise() -= post.m;
  const MatrixXd y = llt.matrixL().solve(centered);
  return (base - 0.5 * post.nu * y.array().square().colwise().sum().transpose()).matrix();
}

double beta_kl(double a, double b, double a0, double b0) {
  check(a > 0 && b > 0 && a0 > 0 && b0 > 0, "beta_kl: parameters must be positive");
  return -log_beta(a, b) + log_beta(a0, b0) + (a - a0) * digamma(a) + (b - b0) * digamma(b) -
         (a + b - a0 - b0) * digamma(a + b);
}

double niw_kl(const NIWParams& q, const NIWParams& p) {
  check(q.dim() == p.dim(), "niw_kl: dimension mismatch");
  const int D = q.dim();
  const auto llt_q = cholesky(q.scatter, "niw_kl(q)");
  const auto llt_p = cholesky(p.scatter, "niw_kl(p)");
  const double logdet_q = log_det_from_llt(llt_q);
  const double logdet_p = log_det_from_llt(llt_p);
  const VectorXd dm = q.m - p.m;

  // Normal part: E_q[log N(mu | m_q, Sigma/kappa_q) - log N(mu | m_p, Sigma/kappa_p)]
  const double normal_part = 0.5 * D * (std::log(q.kappa / p.kappa) - 1.0 + p.kappa / q.kappa) +
                             0.5 * p.kappa * q.nu * dm.dot(llt_q.solve(dm));

  // Inverse-Wishart part expressed through the equivalent Wishart divergence
  const double trace_term = llt_q.solve(p.scatter).trace();
  const double iw_part = -0.5 * p.nu * (logdet_p - logdet_q) + 0.5 * q.nu * (trace_term - D) +
                         lmvgamma(D, 0.5 * p.nu) - lmvgamma(D, 0.5 * q.nu) +
                         0.5 * (q.nu - p.nu) * mvdigamma(D, 0.5 * q.nu);
  return normal_part + iw_part;
}

}  // namespace skillrl
