#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "skillrl/common.hpp"

namespace skillrl {

// Named view of one weight tensor paired with its gradient accumulator.
struct TensorRef {
  std::string name;
  Eigen::MatrixXd* value;
  Eigen::MatrixXd* grad;
};

struct LinearParams {
  Eigen::MatrixXd W, b;    // b is out x 1
  Eigen::MatrixXd gW, gb;  // gradient accumulators, same shapes

  static LinearParams zeros(int out, int in);
  // Uniform(-s, s) weights with s = 1/sqrt(in); zero biases.
  static LinearParams init(int out, int in, Rng& rng);
};

Eigen::VectorXd linear_forward(const LinearParams& p, const Eigen::VectorXd& x);
// Accumulates into p.gW / p.gb; returns dL/dx.
Eigen::VectorXd linear_backward(LinearParams& p, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& dy);

// Gated recurrent cell. Convention used throughout:
//   r = sigmoid(W_r x + U_r h + b_r)          (reset gate)
//   u = sigmoid(W_u x + U_u h + b_u)          (update gate)
//   c = tanh(W_c x + U_c (r .* h) + b_c)      (candidate)
//   h' = (1 - u) .* h + u .* c
struct GRUParams {
  Eigen::MatrixXd W_r, U_r, b_r;
  Eigen::MatrixXd W_u, U_u, b_u;
  Eigen::MatrixXd W_c, U_c, b_c;
  Eigen::MatrixXd gW_r, gU_r, gb_r;
  Eigen::MatrixXd gW_u, gU_u, gb_u;
  Eigen::MatrixXd gW_c, gU_c, gb_c;

  static GRUParams zeros(int hidden, int in);
  static GRUParams init(int hidden, int in, Rng& rng);
};

// Everything the backward pass needs about one forward step.
struct GRUStep {
  Eigen::VectorXd x, h_prev, r, u, c, h;
};

GRUStep gru_forward(const GRUParams& p, const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev);
// dh = dL/d(this step's output). Accumulates weight gradients; returns dL/dh_prev
// and, if dx is non-null, writes dL/dx there.
Eigen::VectorXd gru_backward(GRUParams& p, const GRUStep& s, const Eigen::VectorXd& dh,
                             Eigen::VectorXd* dx = nullptr);

struct NetDims {
  int D_a = 3;   // action dimension
  int D_s = 39;  // observation dimension
  int D = 10;    // skill embedding dimension
  int H_e = 32;  // encoder hidden size
  int H_d = 32;  // decoder hidden size
  int H_p = 32;  // prior-net hidden size
  int L = 10;    // skill horizon
  void validate() const;
};

// Bounds applied to every log-variance head output.
inline constexpr double kLogVarLo = -8.0;
inline constexpr double kLogVarHi = 4.0;

struct NetParams {
  NetDims dims;
  GRUParams enc_gru;      // input D_a, hidden H_e
  LinearParams enc_head;  // H_e -> 2D (mean, log_var)
  LinearParams dec_init;  // (D + D_s) -> H_d
  GRUParams dec_gru;      // input D_a, hidden H_d
  LinearParams dec_head;  // H_d -> D_a
  LinearParams prior_l1;  // D_s -> H_p
  LinearParams prior_l2;  // H_p -> 2D

  static NetParams zeros(const NetDims& dims);
  static NetParams init(const NetDims& dims, Rng& rng);

  // Declaration-order list with stable names (serialization + optimizer order).
  std::vector<TensorRef> tensors();
  std::vector<TensorRef> encoder_tensors();
  std::vector<TensorRef> decoder_tensors();
  std::vector<TensorRef> prior_tensors();

  void zero_grads();
  double grad_norm() const;
  int64_t parameter_count() const;
  void validate() const;  // shapes consistent with dims, all values finite
};

// Scales all gradients so their global 2-norm is at most max_norm; returns the
// pre-clip norm.
double clip_grad_norm(const std::vector<TensorRef>& ts, double max_norm);
double clip_grad_norm(NetParams& p, double max_norm);

// Per-parameter adaptive gradient descent with first/second-moment
// accumulators (decay 0.9 / 0.999, epsilon 1e-8) and bias correction.
struct AdamOpt {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::vector<Eigen::MatrixXd> m, v;

  explicit AdamOpt(double lr_in = 1e-3) : lr(lr_in) {}
  // Clips the global gradient norm (if grad_clip > 0), then applies one update.
  // The tensor list must be the same (order and shapes) on every call.
  void step(const std::vector<TensorRef>& ts, double grad_clip);
  void step(NetParams& p, double grad_clip);
};

}  // namespace skillrl
