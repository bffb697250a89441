#pragma once

/* Shared oracle machinery for the unit and acceptance tests.  Everything in
 * here is an independent route to a quantity the library also computes:
 * Monte-Carlo KL estimators, Bartlett NIW sampling, sequential Student-t
 * marginal likelihood, brute-force statistics, adjusted Rand index and
 * central finite differences. */

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "skillrl/common.hpp"
#include "skillrl/gauss.hpp"
#include "skillrl/special.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline double log_pdf_diag(const VectorXd& x, const skillrl::DiagGaussian& g) {
  const Eigen::ArrayXd v = g.log_var.array().exp();
  const Eigen::ArrayXd d = (x - g.mean).array();
  return -0.5 * (g.log_var.array() + d.square() / v + kLog2Pi).sum();
}

inline double log_pdf_full(const VectorXd& x, const skillrl::FullGaussian& g) {
  const Eigen::LLT<MatrixXd> llt(g.cov);
  const VectorXd d = x - g.mean;
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (logdet + d.dot(llt.solve(d)) + g.mean.size() * kLog2Pi);
}

inline VectorXd sample_diag(const skillrl::DiagGaussian& g, skillrl::Rng& rng) {
  VectorXd z(g.mean.size());
  for (int i = 0; i < z.size(); ++i)
    z[i] = g.mean[i] + std::exp(0.5 * g.log_var[i]) * rng.normal();
  return z;
}

// Monte-Carlo estimate of KL(q || p) for diagonal q against a log-pdf
inline double mc_kl(const skillrl::DiagGaussian& q,
                    const std::function<double(const VectorXd&)>& log_p, int n,
                    skillrl::Rng& rng) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const VectorXd z = sample_diag(q, rng);
    acc += log_pdf_diag(z, q) - log_p(z);
  }
  return acc / n;
}

/* Wishart sample W ~ W(V, nu) via Bartlett decomposition, V SPD. */
inline MatrixXd sample_wishart(const MatrixXd& V, double nu, skillrl::Rng& rng) {
  const int D = static_cast<int>(V.rows());
  const Eigen::LLT<MatrixXd> llt(V);
  const MatrixXd L = llt.matrixL();
  MatrixXd A = MatrixXd::Zero(D, D);
  for (int i = 0; i < D; ++i) {
    // chi-square draw with nu - i dof via sum of squared normals would need
    // integer dof; use the gamma-based route with shape (nu - i)/2
    std::gamma_distribution<double> gd(0.5 * (nu - i), 2.0);
    // tie the gamma draw to our deterministic stream
    std::mt19937_64 eng(rng.raw());
    A(i, i) = std::sqrt(gd(eng));
    for (int j = 0; j < i; ++j) A(i, j) = rng.normal();
  }
  const MatrixXd LA = L * A;
  return LA * LA.transpose();
}

struct NIWSample {
  VectorXd mu;
  MatrixXd sigma;
};

// draw (mu, Sigma) ~ NIW(m, kappa, nu, S): Sigma^-1 ~ W(S^-1, nu), mu ~ N(m, Sigma/kappa)
inline NIWSample sample_niw(const skillrl::NIWParams& niw, skillrl::Rng& rng) {
  const int D = niw.dim();
  const MatrixXd Sinv = niw.scatter.llt().solve(MatrixXd::Identity(D, D));
  const MatrixXd prec = sample_wishart(Sinv, niw.nu, rng);
  NIWSample out;
  out.sigma = prec.llt().solve(MatrixXd::Identity(D, D));
  const Eigen::LLT<MatrixXd> lltS(out.sigma / niw.kappa);
  VectorXd eps(D);
  for (int i = 0; i < D; ++i) eps[i] = rng.normal();
  out.mu = niw.m + lltS.matrixL() * eps;
  return out;
}

// log NIW density, used by the Monte-Carlo check of the closed-form NIW KL
inline double log_pdf_niw(const NIWSample& s, const skillrl::NIWParams& niw) {
  const int D = niw.dim();
  const Eigen::LLT<MatrixXd> llt_sig(s.sigma);
  const double logdet_sig = 2.0 * llt_sig.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Eigen::LLT<MatrixXd> llt_S(niw.scatter);
  const double logdet_S = 2.0 * llt_S.matrixL().toDenseMatrix().diagonal().array().log().sum();
  // inverse-Wishart part
  double lp = 0.5 * niw.nu * logdet_S - 0.5 * niw.nu * D * std::log(2.0) -
              skillrl::lmvgamma(D, 0.5 * niw.nu) - 0.5 * (niw.nu + D + 1) * logdet_sig -
              0.5 * llt_sig.solve(niw.scatter).trace();
  // normal part N(mu | m, Sigma/kappa)
  const VectorXd d = s.mu - niw.m;
  lp += -0.5 * D * kLog2Pi + 0.5 * D * std::log(niw.kappa) - 0.5 * logdet_sig -
        0.5 * niw.kappa * d.dot(llt_sig.solve(d));
  return lp;
}

/* Multivariate Student-t log pdf with dof df, location m, scale Sigma. */
inline double log_pdf_student_t(const VectorXd& x, double df, const VectorXd& m,
                                const MatrixXd& sigma) {
  const int D = static_cast<int>(x.size());
  const Eigen::LLT<MatrixXd> llt(sigma);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const VectorXd d = x - m;
  const double q = d.dot(llt.solve(d));
  return std::lgamma(0.5 * (df + D)) - std::lgamma(0.5 * df) - 0.5 * D * std::log(df * M_PI) -
         0.5 * logdet - 0.5 * (df + D) * std::log1p(q / df);
}

/* Exact log marginal likelihood of data under an NIW model, computed by the
 * chain rule of posterior-predictive Student-t densities — an independent
 * route to the K=1 variational bound at its optimum. */
inline double niw_log_marginal(const MatrixXd& X, const skillrl::NIWParams& prior) {
  skillrl::NIWParams cur = prior;
  const int D = static_cast<int>(X.cols());
  double total = 0.0;
  for (int n = 0; n < X.rows(); ++n) {
    const double df = cur.nu - D + 1;
    const MatrixXd scale = cur.scatter * (cur.kappa + 1) / (cur.kappa * df);
    total += log_pdf_student_t(X.row(n).transpose(), df, cur.m, scale);
    skillrl::SuffStats one = skillrl::SuffStats::zero(D);
    one.count = 1.0;
    one.sum_x = X.row(n).transpose();
    one.sum_xx = X.row(n).transpose() * X.row(n);
    cur = skillrl::niw_posterior(cur, one);
  }
  return total;
}

/* Adjusted Rand index between two hard labelings. */
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  const int n = static_cast<int>(a.size());
  int ka = 0, kb = 0;
  for (int x : a) ka = std::max(ka, x + 1);
  for (int x : b) kb = std::max(kb, x + 1);
  MatrixXd table = MatrixXd::Zero(ka, kb);
  for (int i = 0; i < n; ++i) table(a[i], b[i]) += 1.0;
  auto choose2 = [](double m) { return 0.5 * m * (m - 1.0); };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j) sum_ij += choose2(table(i, j));
  for (int i = 0; i < ka; ++i) sum_a += choose2(table.row(i).sum());
  for (int j = 0; j < kb; ++j) sum_b += choose2(table.col(j).sum());
  const double total = choose2(n);
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (std::abs(max_index - expected) < 1e-12) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

/* Central finite differences of a scalar function of a parameter vector. */
inline VectorXd finite_diff(const std::function<double(const VectorXd&)>& f, const VectorXd& at,
                            double h = 1e-5) {
  VectorXd g(at.size());
  for (int i = 0; i < at.size(); ++i) {
    VectorXd hi = at, lo = at;
    hi[i] += h;
    lo[i] -= h;
    g[i] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

inline double max_rel_err(const VectorXd& got, const VectorXd& want, double floor = 1e-4) {
  double worst = 0.0;
  for (int i = 0; i < got.size(); ++i) {
    const double denom = std::max(floor, std::abs(want[i]));
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

}  // namespace oracle
