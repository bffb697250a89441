#pragma once

#include <Eigen/Dense>
#include <vector>

#include "skillrl/dpm.hpp"
#include "skillrl/gauss.hpp"
#include "skillrl/nets.hpp"

namespace skillrl {

// One temporally extended skill: the observation at its start plus L actions.
struct SkillSlice {
  Eigen::VectorXd s0;
  std::vector<Eigen::VectorXd> actions;
  void validate(int L, int D_a, int D_s) const;
};

struct LossWeights {
  double zeta1 = 1.0;  // reconstruction
  double zeta2 = 0.1;  // soft mixture alignment
  double zeta3 = 1.0;  // prior matching
  void validate() const;
};

struct TrainSchedule {
  int epochs = 30;
  int batch_size = 32;
  // The embedding cloud must drift slower per epoch than a component width or
  // the once-per-epoch mixture refit cannot track it; 1e-3 is measurably too
  // fast at this batch size (the alignment term blows up mid-epoch and the
  // refit then merges the blurred modes).
  double lr = 3e-4;
  int dpm_refit_every = 1;  // epochs between mixture refits
  double grad_clip = 5.0;
  uint64_t seed = 0;
  void validate() const;
};

// q(z | a_{1:L}): recurrent encoding of the action sequence.
DiagGaussian encode(const NetParams& p, const SkillSlice& slice);

// z = mean + exp(log_var / 2) .* noise
Eigen::VectorXd reparam_sample(const DiagGaussian& g, const Eigen::VectorXd& noise);

// p(a_{1:L} | z, s0): hidden state seeded from (z, s0), then autoregressive
// unrolling on the previously predicted action (zero input at the first step).
std::vector<Eigen::VectorXd> decode(const NetParams& p, const Eigen::VectorXd& z,
                                    const Eigen::VectorXd& s0);

// p(z | s0): two-layer feedforward state-conditioned prior.
DiagGaussian prior_forward(const NetParams& p, const Eigen::VectorXd& s0);

// Data-dependent initialization of the encoder mean head: projects the
// initial hidden-state cloud onto its top principal directions, each rescaled
// to unit variance and centred. Called by pretrain on freshly initialized
// parameters so every embedding direction starts at a comparable scale.
void whiten_encoder_head(NetParams& params, const std::vector<SkillSlice>& data);

struct LossBreakdown {
  double total = 0.0;
  double recon = 0.0;     // mean squared reconstruction error per element
  double soft_kl = 0.0;   // responsibility-weighted KL to mixture components
  double prior_kl = 0.0;  // KL(q || state prior), encoder side held constant
};

// noise holds one standard-normal row per slice (batch x D). dpm is frozen for
// the duration of the call. Returns the weighted total plus the raw terms.
LossBreakdown total_loss(const NetParams& p, const std::vector<SkillSlice>& batch,
                         const DPMState& dpm, const LossWeights& w,
                         const Eigen::MatrixXd& noise);

// Same value as total_loss; additionally accumulates d(total)/d(weights) into
// the gradient slots of p. The prior-matching term propagates no gradient to
// the encoder (its q side is treated as constant).
LossBreakdown total_loss_and_backward(NetParams& p, const std::vector<SkillSlice>& batch,
                                      const DPMState& dpm, const LossWeights& w,
                                      const Eigen::MatrixXd& noise);

struct PretrainEpoch {
  int epoch = 0;
  double recon = 0.0, soft_kl = 0.0, prior_kl = 0.0, total = 0.0;
  int K = 0;             // component count after this epoch's refit (if any)
  int K_before_refit = 0;
  int births = 0, merges = 0;
};

struct PretrainResult {
  NetParams params;
  DPMState dpm;
  std::vector<PretrainEpoch> report;
};

// Alternating pretraining: each refit epoch freezes the networks, encodes all
// slices, and advances the mixture one fitting pass from its previous state
// (a single fresh component at epoch 0); then freezes the mixture and runs one
// epoch of minibatch gradient descent on the three-term loss. dims supplies
// hidden sizes only: D_a, D_s, L come from the data and D from dpm_config.
PretrainResult pretrain(const TrainSchedule& schedule, const std::vector<SkillSlice>& data,
                        const DPMConfig& dpm_config, const LossWeights& weights = {},
                        NetDims dims = {});

}  // namespace skillrl
