#include "skillrl/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace skillrl {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd clamp_log_var(const VectorXd& raw) {
  return raw.array().min(kLogVarHi).max(kLogVarLo).matrix();
}

// Sub-gradient mask of the clamp: 1 strictly inside the bounds, 0 outside.
ArrayXd clamp_mask(const VectorXd& raw) {
  return ((raw.array() > kLogVarLo) && (raw.array() < kLogVarHi)).cast<double>();
}

struct EncTape {
  std::vector<GRUStep> steps;
  VectorXd head_in;   // final hidden state
  VectorXd head_out;  // raw (mean, log_var) before clamping
  DiagGaussian g;
};

EncTape encode_fwd(const NetParams& p, const SkillSlice& slice) {
  const NetDims& d = p.dims;
  slice.validate(d.L, d.D_a, d.D_s);
  EncTape t;
  t.steps.reserve(d.L);
  VectorXd h = VectorXd::Zero(d.H_e);
  for (int i = 0; i < d.L; ++i) {
    t.steps.push_back(gru_forward(p.enc_gru, slice.actions[i], h));
    h = t.steps.back().h;
    if (!h.allFinite())
      throw NumericError("encoder produced a non-finite hidden state at step " +
                         std::to_string(i));
  }
  t.head_in = h;
  t.head_out = linear_forward(p.enc_head, h);
  t.g.mean = t.head_out.head(d.D);
  t.g.log_var = clamp_log_var(t.head_out.tail(d.D));
  return t;
}

void encode_bwd(NetParams& p, const EncTape& t, const VectorXd& dmean,
                const VectorXd& dlog_var) {
  const int D = p.dims.D;
  VectorXd dhead(2 * D);
  dhead.head(D) = dmean;
  dhead.tail(D) = (dlog_var.array() * clamp_mask(t.head_out.tail(D))).matrix();
  VectorXd dh = linear_backward(p.enc_head, t.head_in, dhead);
  for (int i = p.dims.L - 1; i >= 0; --i) dh = gru_backward(p.enc_gru, t.steps[i], dh);
}

struct DecTape {
  VectorXd init_in;  // z concatenated with s0
  std::vector<GRUStep> steps;
  std::vector<VectorXd> outputs;
};

DecTape decode_fwd(const NetParams& p, const VectorXd& z, const VectorXd& s0) {
  const NetDims& d = p.dims;
  check(z.size() == d.D, "latent dimension mismatch in decoder");
  check(s0.size() == d.D_s, "observation dimension mismatch in decoder");
  DecTape t;
  t.init_in.resize(d.D + d.D_s);
  t.init_in << z, s0;
  VectorXd h = linear_forward(p.dec_init, t.init_in);
  VectorXd x = VectorXd::Zero(d.D_a);
  t.steps.reserve(d.L);
  t.outputs.reserve(d.L);
  for (int i = 0; i < d.L; ++i) {
    t.steps.push_back(gru_forward(p.dec_gru, x, h));
    h = t.steps.back().h;
    t.outputs.push_back(linear_forward(p.dec_head, h));
    x = t.outputs.back();
    if (!x.allFinite())
      throw NumericError("decoder produced a non-finite action at step " + std::to_string(i));
  }
  return t;
}

// d_out holds dL/dy_t for every emitted action. Returns dL/dz; the gradient
// into s0 is discarded (observations are data).
VectorXd decode_bwd(NetParams& p, const DecTape& t, const std::vector<VectorXd>& d_out) {
  const NetDims& d = p.dims;
  VectorXd dh_next = VectorXd::Zero(d.H_d);
  VectorXd dx_carry = VectorXd::Zero(d.D_a);  // autoregressive path into y_{t-1}
  for (int i = d.L - 1; i >= 0; --i) {
    const VectorXd dy = d_out[i] + dx_carry;
    const VectorXd dh = linear_backward(p.dec_head, t.steps[i].h, dy) + dh_next;
    VectorXd dx;
    dh_next = gru_backward(p.dec_gru, t.steps[i], dh, &dx);
    dx_carry = dx;
  }
  const VectorXd dinit = linear_backward(p.dec_init, t.init_in, dh_next);
  return dinit.head(d.D);
}

struct PriorTape {
  VectorXd s0, h1, out;  // h1 after tanh, out raw before clamping
  DiagGaussian g;
};

PriorTape prior_fwd(const NetParams& p, const VectorXd& s0) {
  check(s0.size() == p.dims.D_s, "observation dimension mismatch in prior net");
  PriorTape t;
  t.s0 = s0;
  t.h1 = linear_forward(p.prior_l1, s0).array().tanh().matrix();
  t.out = linear_forward(p.prior_l2, t.h1);
  t.g.mean = t.out.head(p.dims.D);
  t.g.log_var = clamp_log_var(t.out.tail(p.dims.D));
  return t;
}

void prior_bwd(NetParams& p, const PriorTape& t, const VectorXd& dmean,
               const VectorXd& dlog_var) {
  const int D = p.dims.D;
  VectorXd dout(2 * D);
  dout.head(D) = dmean;
  dout.tail(D) = (dlog_var.array() * clamp_mask(t.out.tail(D))).matrix();
  const VectorXd dh1 = linear_backward(p.prior_l2, t.h1, dout);
  const VectorXd da1 = (dh1.array() * (1.0 - t.h1.array().square())).matrix();
  linear_backward(p.prior_l1, t.s0, da1);
}

// Per-component quantities reused across the batch for the mixture term.
struct MixtureScratch {
  std::vector<FullGaussian> comps;
  std::vector<MatrixXd> cov_inv;     // of the posterior-mean Gaussians
  std::vector<double> log_det_cov;
  std::vector<MatrixXd> scatter_inv;  // of the conjugate posteriors
  std::vector<double> nu;
  VectorXd elw;  // expected log mixture weights
};

MixtureScratch mixture_scratch(const DPMState& dpm) {
  MixtureScratch s;
  s.comps = component_gaussians(dpm);
  s.elw = expected_log_weights(dpm);
  const int D = dpm.config.D;
  const MatrixXd I = MatrixXd::Identity(D, D);
  for (int k = 0; k < dpm.K(); ++k) {
    Eigen::LLT<MatrixXd> llt(s.comps[k].cov);
    check(llt.info() == Eigen::Success, "mixture component covariance is not positive definite");
    s.cov_inv.push_back(llt.solve(I));
    s.log_det_cov.push_back(
        2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum());
    Eigen::LLT<MatrixXd> slt(dpm.components[k].niw.scatter);
    check(slt.info() == Eigen::Success, "posterior scatter is not positive definite");
    s.scatter_inv.push_back(slt.solve(I));
    s.nu.push_back(dpm.components[k].niw.nu);
  }
  return s;
}

LossBreakdown loss_impl(const NetParams& p, NetParams* grads,
                        const std::vector<SkillSlice>& batch, const DPMState& dpm,
                        const LossWeights& w, const MatrixXd& noise) {
  w.validate();
  check(!batch.empty(), "loss requires a nonempty batch");
  const NetDims& d = p.dims;
  const int B = static_cast<int>(batch.size());
  check(noise.rows() == B && noise.cols() == d.D,
        "noise matrix must hold one standard-normal row per slice");

  MixtureScratch mix;
  if (w.zeta2 > 0.0) {
    check(dpm.config.D == d.D, "mixture dimension does not match the latent dimension");
    mix = mixture_scratch(dpm);
  }
  const int K = w.zeta2 > 0.0 ? dpm.K() : 0;

  LossBreakdown out;
  // Mean squared error over batch, steps, and action dims.
  const double recon_scale = 1.0 / static_cast<double>(B) / (d.L * d.D_a);

  for (int i = 0; i < B; ++i) {
    const SkillSlice& slice = batch[i];
    const EncTape enc = encode_fwd(p, slice);
    const ArrayXd sigma = (0.5 * enc.g.log_var.array()).exp();
    const VectorXd eps = noise.row(i).transpose();
    const VectorXd z = enc.g.mean + (sigma * eps.array()).matrix();

    const DecTape dec = decode_fwd(p, z, slice.s0);
    double recon_i = 0.0;
    for (int t = 0; t < d.L; ++t) recon_i += (dec.outputs[t] - slice.actions[t]).squaredNorm();
    out.recon += recon_i * recon_scale;

    // responsibility-weighted alignment with the frozen mixture, evaluated at
    // the posterior mean
    VectorXd p_row, kl_row;
    double soft_i = 0.0;
    if (w.zeta2 > 0.0) {
      VectorXd score(K);
      for (int k = 0; k < K; ++k)
        score[k] = mix.elw[k] + expected_log_lik(enc.g.mean, dpm.components[k].niw);
      const VectorXd e = (score.array() - score.maxCoeff()).exp();
      p_row = e / e.sum();
      kl_row.resize(K);
      for (int k = 0; k < K; ++k) kl_row[k] = kl_diag_full(enc.g, mix.comps[k]);
      soft_i = p_row.dot(kl_row);
      out.soft_kl += soft_i / B;
    }

    const PriorTape prior = prior_fwd(p, slice.s0);
    out.prior_kl += kl_diag_diag(enc.g, prior.g) / B;

    if (grads == nullptr) continue;

    // reconstruction gradients through decoder, reparameterization, encoder
    std::vector<VectorXd> d_out(d.L);
    for (int t = 0; t < d.L; ++t)
      d_out[t] = w.zeta1 * 2.0 * recon_scale * (dec.outputs[t] - slice.actions[t]);
    const VectorXd dz = decode_bwd(*grads, dec, d_out);
    VectorXd dmean = dz;
    VectorXd dlog_var = (dz.array() * eps.array() * 0.5 * sigma).matrix();

    if (w.zeta2 > 0.0) {
      const double s2 = w.zeta2 / B;
      const ArrayXd var_q = enc.g.log_var.array().exp();
      for (int k = 0; k < K; ++k) {
        // through the closed-form divergence
        const VectorXd diff = enc.g.mean - mix.comps[k].mean;
        dmean += (s2 * p_row[k]) * (mix.cov_inv[k] * diff);
        dlog_var.array() +=
            (s2 * p_row[k]) * 0.5 *
            (mix.cov_inv[k].diagonal().array() * var_q - 1.0);
        // through the responsibilities (softmax over stick + likelihood scores)
        const double dscore = s2 * p_row[k] * (kl_row[k] - soft_i);
        dmean += dscore * (-mix.nu[k] * (mix.scatter_inv[k] *
                                          (enc.g.mean - dpm.components[k].niw.m)));
      }
    }

    if (w.zeta3 > 0.0) {
      // prior side only; q is constant for this term
      const double s3 = w.zeta3 / B;
      const ArrayXd var_p = prior.g.log_var.array().exp();
      const ArrayXd var_q = enc.g.log_var.array().exp();
      const ArrayXd mdiff = enc.g.mean.array() - prior.g.mean.array();
      const VectorXd dmean_p = (s3 * (-mdiff / var_p)).matrix();
      const VectorXd dlv_p = (s3 * 0.5 * (1.0 - (var_q + mdiff.square()) / var_p)).matrix();
      prior_bwd(*grads, prior, dmean_p, dlv_p);
    }

    encode_bwd(*grads, enc, dmean, dlog_var);
  }

  out.total = w.zeta1 * out.recon + w.zeta2 * out.soft_kl + w.zeta3 * out.prior_kl;
  if (!std::isfinite(out.total)) throw NumericError("loss is non-finite");
  return out;
}

}  // namespace

void SkillSlice::validate(int L, int D_a, int D_s) const {
  check(static_cast<int>(actions.size()) == L,
        "slice must contain exactly " + std::to_string(L) + " actions");
  check(s0.size() == D_s, "slice observation has the wrong dimension");
  check(s0.allFinite(), "slice observation has non-finite entries");
  for (const auto& a : actions) {
    check(a.size() == D_a, "slice action has the wrong dimension");
    check(a.allFinite(), "slice action has non-finite entries");
  }
}

void LossWeights::validate() const {
  check(zeta1 >= 0.0 && zeta2 >= 0.0 && zeta3 >= 0.0, "loss weights must be nonnegative");
  check(zeta1 > 0.0 || zeta2 > 0.0 || zeta3 > 0.0,
        "at least one loss weight must be strictly positive");
}

void TrainSchedule::validate() const {
  check(epochs > 0, "epochs must be positive");
  check(batch_size > 0, "batch_size must be positive");
  check(lr > 0.0, "learning rate must be positive");
  check(dpm_refit_every >= 1, "dpm_refit_every must be at least 1");
  check(grad_clip > 0.0, "gradient clip must be positive");
}

DiagGaussian encode(const NetParams& p, const SkillSlice& slice) {
  return encode_fwd(p, slice).g;
}

VectorXd reparam_sample(const DiagGaussian& g, const VectorXd& noise) {
  check(noise.size() == g.mean.size(), "noise dimension mismatch");
  return g.mean + ((0.5 * g.log_var.array()).exp() * noise.array()).matrix();
}

std::vector<VectorXd> decode(const NetParams& p, const VectorXd& z, const VectorXd& s0) {
  return decode_fwd(p, z, s0).outputs;
}

DiagGaussian prior_forward(const NetParams& p, const VectorXd& s0) {
  return prior_fwd(p, s0).g;
}

LossBreakdown total_loss(const NetParams& p, const std::vector<SkillSlice>& batch,
                         const DPMState& dpm, const LossWeights& w, const MatrixXd& noise) {
  return loss_impl(p, nullptr, batch, dpm, w, noise);
}

LossBreakdown total_loss_and_backward(NetParams& p, const std::vector<SkillSlice>& batch,
                                      const DPMState& dpm, const LossWeights& w,
                                      const MatrixXd& noise) {
  return loss_impl(p, &p, batch, dpm, w, noise);
}

/* The untrained recurrent map concentrates nearly all variation in one
 * direction; a mixture fit to that pancake matches it with one elongated
 * component whose thin-direction precisions pull the posterior means toward
 * the centre much faster than the reconstruction term can organize them.
 * Whitening levels that field: every direction starts at unit scale, so the
 * first component is near-spherical and cluster structure built by the
 * reconstruction term survives long enough to be split off. */
void whiten_encoder_head(NetParams& params, const std::vector<SkillSlice>& data) {
  const NetDims& d = params.dims;
  const int N = static_cast<int>(data.size());
  MatrixXd H(N, d.H_e);
  for (int i = 0; i < N; ++i) H.row(i) = encode_fwd(params, data[i]).head_in.transpose();
  const VectorXd mu = H.colwise().mean().transpose();
  H.rowwise() -= mu.transpose();
  const MatrixXd C = (H.transpose() * H) / std::max(1, N - 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(C);
  const int M = std::min(d.D, d.H_e);
  const double lead = std::max(eig.eigenvalues().maxCoeff(), 1e-12);
  MatrixXd W = MatrixXd::Zero(M, d.H_e);
  for (int j = 0; j < M; ++j) {
    const int idx = d.H_e - 1 - j;  // eigenvalues come back ascending
    VectorXd v = eig.eigenvectors().col(idx);
    int arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;  // deterministic sign
    // floor tiny eigenvalues so numerically empty directions are not blown
    // up to unit scale ahead of the informative ones
    W.row(j) = v.transpose() / std::sqrt(std::max(eig.eigenvalues()(idx), 1e-4 * lead));
  }
  params.enc_head.W.topRows(M) = W;
  params.enc_head.b.col(0).head(M) = -W * mu;
}

PretrainResult pretrain(const TrainSchedule& schedule, const std::vector<SkillSlice>& data,
                        const DPMConfig& dpm_config, const LossWeights& weights,
                        NetDims dims) {
  schedule.validate();
  weights.validate();
  check(!data.empty(), "pretraining requires a nonempty dataset");
  dims.D_a = static_cast<int>(data[0].actions.empty() ? 0 : data[0].actions[0].size());
  dims.D_s = static_cast<int>(data[0].s0.size());
  dims.L = static_cast<int>(data[0].actions.size());
  dims.D = dpm_config.D;
  dims.validate();
  for (const auto& s : data) s.validate(dims.L, dims.D_a, dims.D_s);

  const int N = static_cast<int>(data.size());
  Rng rng(schedule.seed);
  NetParams params = NetParams::init(dims, rng);
  whiten_encoder_head(params, data);
  DPMState dpm = initial_dpm_state(dpm_config);
  AdamOpt opt(schedule.lr);
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);

  PretrainResult out;
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    PretrainEpoch rep;
    rep.epoch = epoch;
    rep.K_before_refit = dpm.K();

    if (epoch % schedule.dpm_refit_every == 0) {
      // Shuffle rows so each refit batch is a representative sample; in data
      // order a batch would be a run of overlapping windows from a single
      // trajectory, i.e. a tight clump that birth moves overfit with
      // near-singular components.
      const uint64_t fit_seed = Rng::derive(schedule.seed, 1000 + epoch);
      std::vector<int> perm(N);
      std::iota(perm.begin(), perm.end(), 0);
      Rng fit_rng(fit_seed);
      fit_rng.shuffle(perm);
      MatrixXd Z(N, dims.D);
      for (int i = 0; i < N; ++i) Z.row(i) = encode(params, data[perm[i]]).mean.transpose();
      DPMFitter fitter = epoch == 0 ? DPMFitter(dpm_config, fit_seed)
                                    : DPMFitter(dpm, fit_seed, /*reset_stats=*/true);
      // One fitting pass per refit: the mixture only needs to track the
      // embeddings approximately between network updates, and the memoized
      // state carries over, so successive refits keep sharpening it.  Batches
      // scale with the dataset so small data still gets several birth
      // attempts per pass while large data caps the per-pass attempt count.
      const int refit_batch = std::min(N, std::clamp(N / 8, 64, 512));
      for (const EpochReport& er : fitter.fit(Z, refit_batch, 1)) {
        rep.births += er.births_accepted;
        rep.merges += er.merges_accepted;
      }
      dpm = fitter.state();
    }
    rep.K = dpm.K();

    rng.shuffle(order);
    double sum_recon = 0.0, sum_soft = 0.0, sum_prior = 0.0, sum_total = 0.0;
    for (int start = 0; start < N; start += schedule.batch_size) {
      const int len = std::min(schedule.batch_size, N - start);
      std::vector<SkillSlice> batch;
      batch.reserve(len);
      for (int j = 0; j < len; ++j) batch.push_back(data[order[start + j]]);
      MatrixXd noise(len, dims.D);
      for (int r = 0; r < len; ++r)
        for (int c = 0; c < dims.D; ++c) noise(r, c) = rng.normal();
      params.zero_grads();
      const LossBreakdown lb = total_loss_and_backward(params, batch, dpm, weights, noise);
      opt.step(params, schedule.grad_clip);
      sum_recon += lb.recon * len;
      sum_soft += lb.soft_kl * len;
      sum_prior += lb.prior_kl * len;
      sum_total += lb.total * len;
    }
    rep.recon = sum_recon / N;
    rep.soft_kl = sum_soft / N;
    rep.prior_kl = sum_prior / N;
    rep.total = sum_total / N;
    out.report.push_back(rep);
  }
  out.params = params;
  out.dpm = dpm;
  return out;
}

}  // namespace skillrl
