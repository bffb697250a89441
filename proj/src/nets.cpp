#include "skillrl/nets.hpp"

#include <cmath>

#include <Eigen/QR>

namespace skillrl {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd sigmoid(const VectorXd& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

void fill_uniform(MatrixXd& m, double scale, Rng& rng) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-scale, scale);
}

/* Random matrix with orthonormal rows (rows <= cols required): thin-Q of a
 * Gaussian draw, sign-fixed against R's diagonal.  Orthogonal recurrent
 * weights keep the hidden state from contracting onto a low-rank manifold, so
 * untrained encodings of distinct inputs stay spread in every direction. */
MatrixXd random_orthogonal(int rows, int cols, Rng& rng) {
  MatrixXd g(cols, rows);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(cols, rows);
  const MatrixXd r = qr.matrixQR().topRows(rows).triangularView<Eigen::Upper>();
  for (int j = 0; j < rows; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q.transpose();
}

void push_linear(std::vector<TensorRef>& out, const std::string& prefix, LinearParams& p) {
  out.push_back({prefix + ".W", &p.W, &p.gW});
  out.push_back({prefix + ".b", &p.b, &p.gb});
}

void push_gru(std::vector<TensorRef>& out, const std::string& prefix, GRUParams& p) {
  out.push_back({prefix + ".W_r", &p.W_r, &p.gW_r});
  out.push_back({prefix + ".U_r", &p.U_r, &p.gU_r});
  out.push_back({prefix + ".b_r", &p.b_r, &p.gb_r});
  out.push_back({prefix + ".W_u", &p.W_u, &p.gW_u});
  out.push_back({prefix + ".U_u", &p.U_u, &p.gU_u});
  out.push_back({prefix + ".b_u", &p.b_u, &p.gb_u});
  out.push_back({prefix + ".W_c", &p.W_c, &p.gW_c});
  out.push_back({prefix + ".U_c", &p.U_c, &p.gU_c});
  out.push_back({prefix + ".b_c", &p.b_c, &p.gb_c});
}

}  // namespace

LinearParams LinearParams::zeros(int out, int in) {
  check(out > 0 && in > 0, "linear layer dimensions must be positive");
  LinearParams p;
  p.W = MatrixXd::Zero(out, in);
  p.b = MatrixXd::Zero(out, 1);
  p.gW = MatrixXd::Zero(out, in);
  p.gb = MatrixXd::Zero(out, 1);
  return p;
}

LinearParams LinearParams::init(int out, int in, Rng& rng) {
  LinearParams p = zeros(out, in);
  fill_uniform(p.W, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  return p;
}

VectorXd linear_forward(const LinearParams& p, const VectorXd& x) {
  return p.W * x + p.b.col(0);
}

VectorXd linear_backward(LinearParams& p, const VectorXd& x, const VectorXd& dy) {
  p.gW.noalias() += dy * x.transpose();
  p.gb.col(0) += dy;
  return p.W.transpose() * dy;
}

GRUParams GRUParams::zeros(int hidden, int in) {
  check(hidden > 0 && in > 0, "recurrent cell dimensions must be positive");
  GRUParams p;
  auto hxi = [&] { return MatrixXd::Zero(hidden, in); };
  auto hxh = [&] { return MatrixXd::Zero(hidden, hidden); };
  auto hx1 = [&] { return MatrixXd::Zero(hidden, 1); };
  p.W_r = hxi(); p.U_r = hxh(); p.b_r = hx1();
  p.W_u = hxi(); p.U_u = hxh(); p.b_u = hx1();
  p.W_c = hxi(); p.U_c = hxh(); p.b_c = hx1();
  p.gW_r = hxi(); p.gU_r = hxh(); p.gb_r = hx1();
  p.gW_u = hxi(); p.gU_u = hxh(); p.gb_u = hx1();
  p.gW_c = hxi(); p.gU_c = hxh(); p.gb_c = hx1();
  return p;
}

GRUParams GRUParams::init(int hidden, int in, Rng& rng) {
  GRUParams p = zeros(hidden, in);
  const double si = 1.0 / std::sqrt(static_cast<double>(in));
  fill_uniform(p.W_r, si, rng); p.U_r = random_orthogonal(hidden, hidden, rng);
  fill_uniform(p.W_u, si, rng); p.U_u = random_orthogonal(hidden, hidden, rng);
  // Unit-scale input drive keeps the candidate tanh in its linear range, so
  // graded input levels (not just their signs) stay resolved in the features.
  fill_uniform(p.W_c, si, rng); p.U_c = random_orthogonal(hidden, hidden, rng);
  // Low update gate at the start (the recurrent analog of the high
  // forget-gate-bias trick): the hidden state integrates input features as a
  // slow moving average instead of racing to a saturated attractor, so
  // untrained final hidden states summarize the whole input sequence and
  // distinct input patterns land in distinct regions.
  p.b_u.setConstant(-2.0);
  return p;
}

GRUStep gru_forward(const GRUParams& p, const VectorXd& x, const VectorXd& h_prev) {
  GRUStep s;
  s.x = x;
  s.h_prev = h_prev;
  s.r = sigmoid(p.W_r * x + p.U_r * h_prev + p.b_r.col(0));
  s.u = sigmoid(p.W_u * x + p.U_u * h_prev + p.b_u.col(0));
  s.c = (p.W_c * x + p.U_c * (s.r.array() * h_prev.array()).matrix() + p.b_c.col(0))
            .array()
            .tanh()
            .matrix();
  s.h = ((1.0 - s.u.array()) * h_prev.array() + s.u.array() * s.c.array()).matrix();
  return s;
}

VectorXd gru_backward(GRUParams& p, const GRUStep& s, const VectorXd& dh, VectorXd* dx_out) {
  const ArrayXd u = s.u.array(), c = s.c.array(), r = s.r.array(), hp = s.h_prev.array();
  const ArrayXd dc = dh.array() * u;
  const ArrayXd du = dh.array() * (c - hp);
  ArrayXd dh_prev = dh.array() * (1.0 - u);
  VectorXd dx = VectorXd::Zero(s.x.size());

  // candidate: c = tanh(W_c x + U_c (r .* h_prev) + b_c)
  const VectorXd da_c = (dc * (1.0 - c * c)).matrix();
  const VectorXd rh = (r * hp).matrix();
  p.gW_c.noalias() += da_c * s.x.transpose();
  p.gU_c.noalias() += da_c * rh.transpose();
  p.gb_c.col(0) += da_c;
  dx.noalias() += p.W_c.transpose() * da_c;
  const VectorXd drh = p.U_c.transpose() * da_c;
  const ArrayXd dr = drh.array() * hp;
  dh_prev += drh.array() * r;

  // update gate
  const VectorXd da_u = (du * u * (1.0 - u)).matrix();
  p.gW_u.noalias() += da_u * s.x.transpose();
  p.gU_u.noalias() += da_u * s.h_prev.transpose();
  p.gb_u.col(0) += da_u;
  dx.noalias() += p.W_u.transpose() * da_u;
  dh_prev += (p.U_u.transpose() * da_u).array();

  // reset gate
  const VectorXd da_r = (dr * r * (1.0 - r)).matrix();
  p.gW_r.noalias() += da_r * s.x.transpose();
  p.gU_r.noalias() += da_r * s.h_prev.transpose();
  p.gb_r.col(0) += da_r;
  dx.noalias() += p.W_r.transpose() * da_r;
  dh_prev += (p.U_r.transpose() * da_r).array();

  if (dx_out) *dx_out = dx;
  return dh_prev.matrix();
}

void NetDims::validate() const {
  check(D_a > 0 && D_s > 0 && D > 0 && H_e > 0 && H_d > 0 && H_p > 0 && L > 0,
        "all network dimensions must be positive");
}

NetParams NetParams::zeros(const NetDims& d) {
  d.validate();
  NetParams p;
  p.dims = d;
  p.enc_gru = GRUParams::zeros(d.H_e, d.D_a);
  p.enc_head = LinearParams::zeros(2 * d.D, d.H_e);
  p.dec_init = LinearParams::zeros(d.H_d, d.D + d.D_s);
  p.dec_gru = GRUParams::zeros(d.H_d, d.D_a);
  p.dec_head = LinearParams::zeros(d.D_a, d.H_d);
  p.prior_l1 = LinearParams::zeros(d.H_p, d.D_s);
  p.prior_l2 = LinearParams::zeros(2 * d.D, d.H_p);
  return p;
}

NetParams NetParams::init(const NetDims& d, Rng& rng) {
  d.validate();
  NetParams p;
  p.dims = d;
  p.enc_gru = GRUParams::init(d.H_e, d.D_a, rng);
  p.enc_head = LinearParams::init(2 * d.D, d.H_e, rng);
  p.dec_init = LinearParams::init(d.H_d, d.D + d.D_s, rng);
  p.dec_gru = GRUParams::init(d.H_d, d.D_a, rng);
  p.dec_head = LinearParams::init(d.D_a, d.H_d, rng);
  p.prior_l1 = LinearParams::init(d.H_p, d.D_s, rng);
  p.prior_l2 = LinearParams::init(2 * d.D, d.H_p, rng);
  // The encoder mean head projects the hidden state through orthonormal rows
  // so the initial embedding cloud keeps whatever spread the hidden states
  // carry.  That cloud is still thin in several directions (its rank is
  // limited by the variation present in the action sequences), so the
  // posterior and prior start with a standard deviation near the cloud's thin
  // scale: a posterior much wider than the first fitted component's thin
  // directions produces an enormous KL pull that collapses the cloud before
  // the reconstruction term can organize it.
  p.enc_head.W.topRows(d.D) = 2.0 * random_orthogonal(d.D, d.H_e, rng);
  p.enc_head.b.col(0).tail(d.D).setConstant(-5.0);
  p.prior_l2.b.col(0).tail(d.D).setConstant(-5.0);
  return p;
}

std::vector<TensorRef> NetParams::tensors() {
  std::vector<TensorRef> out;
  push_gru(out, "enc_gru", enc_gru);
  push_linear(out, "enc_head", enc_head);
  push_linear(out, "dec_init", dec_init);
  push_gru(out, "dec_gru", dec_gru);
  push_linear(out, "dec_head", dec_head);
  push_linear(out, "prior_l1", prior_l1);
  push_linear(out, "prior_l2", prior_l2);
  return out;
}

std::vector<TensorRef> NetParams::encoder_tensors() {
  std::vector<TensorRef> out;
  push_gru(out, "enc_gru", enc_gru);
  push_linear(out, "enc_head", enc_head);
  return out;
}

std::vector<TensorRef> NetParams::decoder_tensors() {
  std::vector<TensorRef> out;
  push_linear(out, "dec_init", dec_init);
  push_gru(out, "dec_gru", dec_gru);
  push_linear(out, "dec_head", dec_head);
  return out;
}

std::vector<TensorRef> NetParams::prior_tensors() {
  std::vector<TensorRef> out;
  push_linear(out, "prior_l1", prior_l1);
  push_linear(out, "prior_l2", prior_l2);
  return out;
}

void NetParams::zero_grads() {
  for (auto& t : tensors()) t.grad->setZero();
}

double NetParams::grad_norm() const {
  double sq = 0.0;
  for (auto& t : const_cast<NetParams*>(this)->tensors()) sq += t.grad->squaredNorm();
  return std::sqrt(sq);
}

int64_t NetParams::parameter_count() const {
  int64_t n = 0;
  for (auto& t : const_cast<NetParams*>(this)->tensors()) n += t.value->size();
  return n;
}

void NetParams::validate() const {
  dims.validate();
  auto& self = const_cast<NetParams&>(*this);
  for (auto& t : self.tensors())
    check(t.value->allFinite(), "network tensor " + t.name + " has non-finite entries");
  check(enc_gru.W_r.rows() == dims.H_e && enc_gru.W_r.cols() == dims.D_a,
        "encoder cell shape mismatch");
  check(enc_head.W.rows() == 2 * dims.D && enc_head.W.cols() == dims.H_e,
        "encoder head shape mismatch");
  check(dec_init.W.rows() == dims.H_d && dec_init.W.cols() == dims.D + dims.D_s,
        "decoder init shape mismatch");
  check(dec_gru.W_r.rows() == dims.H_d && dec_gru.W_r.cols() == dims.D_a,
        "decoder cell shape mismatch");
  check(dec_head.W.rows() == dims.D_a && dec_head.W.cols() == dims.H_d,
        "decoder head shape mismatch");
  check(prior_l1.W.rows() == dims.H_p && prior_l1.W.cols() == dims.D_s,
        "prior layer-1 shape mismatch");
  check(prior_l2.W.rows() == 2 * dims.D && prior_l2.W.cols() == dims.H_p,
        "prior layer-2 shape mismatch");
}

double clip_grad_norm(const std::vector<TensorRef>& ts, double max_norm) {
  double sq = 0.0;
  for (const auto& t : ts) sq += t.grad->squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& t : ts) *t.grad *= scale;
  }
  return norm;
}

double clip_grad_norm(NetParams& p, double max_norm) {
  return clip_grad_norm(p.tensors(), max_norm);
}

void AdamOpt::step(NetParams& p, double grad_clip) { step(p.tensors(), grad_clip); }

void AdamOpt::step(const std::vector<TensorRef>& ts, double grad_clip) {
  if (m.empty()) {
    for (auto& t : ts) {
      m.emplace_back(MatrixXd::Zero(t.value->rows(), t.value->cols()));
      v.emplace_back(MatrixXd::Zero(t.value->rows(), t.value->cols()));
    }
  }
  check(m.size() == ts.size(), "optimizer state does not match parameter list");
  clip_grad_norm(ts, grad_clip);
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < ts.size(); ++i) {
    const MatrixXd& g = *ts[i].grad;
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = (beta2 * v[i].array() + (1.0 - beta2) * g.array().square()).matrix();
    ts[i].value->array() -=
        lr * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + eps);
  }
}

}  // namespace skillrl
