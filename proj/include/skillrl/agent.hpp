#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "skillrl/codec.hpp"
#include "skillrl/dpm.hpp"
#include "skillrl/env.hpp"
#include "skillrl/nets.hpp"

namespace skillrl {

/* Downstream learner over the pre-trained skill space: a soft actor-critic
 * whose entropy bonus is replaced by a KL penalty against the frozen skill
 * prior. One decision picks a latent z; the frozen decoder expands it into a
 * segment of primitive actions. A from-scratch baseline reuses every code path
 * but acts in the primitive action space with a plain entropy bonus. */

// --- small feedforward net: tanh hidden layers, linear output ---

struct MLP {
  std::vector<LinearParams> layers;

  // widths = {in, h1, ..., out}; the final layer's weights are scaled by
  // final_scale after the default init.
  static MLP make(const std::vector<int>& widths, Rng& rng, double final_scale = 1.0);
  std::vector<TensorRef> tensors(const std::string& prefix);
  void zero_grads();
  int64_t parameter_count() const;
};

struct MLPTape {
  Eigen::VectorXd x;
  std::vector<Eigen::VectorXd> h;  // post-activation output of each hidden layer
};

Eigen::VectorXd mlp_forward(const MLP& p, const Eigen::VectorXd& x, MLPTape* tape = nullptr);
// Accumulates weight gradients using the tape of the matching forward call;
// returns dL/dx.
Eigen::VectorXd mlp_backward(MLP& p, const MLPTape& tape, const Eigen::VectorXd& dout);
// dL/dx through a frozen network: no weight gradients are touched.
Eigen::VectorXd mlp_input_grad(const MLP& p, const MLPTape& tape, const Eigen::VectorXd& dout);

// --- transitions and replay ---

// One temporally abstracted transition: pick z at obs, run the decoded
// segment, land at next_obs with the segment's summed reward.
struct SkillTransition {
  Eigen::VectorXd obs;
  Eigen::VectorXd z;
  double cum_reward = 0.0;
  Eigen::VectorXd next_obs;
  bool done = false;
  void validate(int obs_dim, int act_dim) const;  // cum_reward within [0, 4]
};

class ReplayBuffer {
 public:
  ReplayBuffer(size_t capacity, uint64_t seed);
  void insert(SkillTransition t);  // FIFO eviction once full
  size_t size() const { return data_.size(); }
  size_t capacity() const { return capacity_; }
  const SkillTransition& at(size_t i) const { return data_[i]; }
  // Uniform with replacement; requires size() >= batch.
  std::vector<int> sample_indices(int batch);

 private:
  size_t capacity_;
  size_t next_ = 0;
  std::vector<SkillTransition> data_;
  Rng rng_;
};

struct Batch {
  Eigen::MatrixXd obs, act, next_obs;  // one row per transition
  Eigen::VectorXd reward, done;
};

Batch make_batch(const ReplayBuffer& replay, const std::vector<int>& indices);

// --- agent ---

// How the policy is regularized: KL against the pre-trained state-conditioned
// skill prior, or a plain entropy bonus (the from-scratch baseline).
enum class RegMode { KLToPrior, NegEntropy };

struct AgentConfig {
  int obs_dim = 39;
  int act_dim = 10;   // skill latent width (3 for the primitive-space baseline)
  int hidden = 64;    // two tanh hidden layers everywhere
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double omega = 0.01;      // regularizer temperature
  bool auto_omega = false;  // dual ascent toward kl_target instead of fixed omega
  double kl_target = 5.0;
  double omega_lr = 1e-4;
  double gamma = 0.95;  // per decision step
  double tau = 0.005;   // target-network EMA rate
  int batch_size = 128;
  int replay_capacity = 200000;
  int warmup_transitions = 500;  // replay size before gradient steps begin
  int update_every = 1;          // decisions between gradient updates
  double grad_clip = 10.0;
  void validate() const;
};

struct AgentParams {
  int obs_dim = 0, act_dim = 0;
  MLP actor;  // obs -> (mean | log_var), log_var clamped like every other head
  MLP critic1, critic2, target1, target2;  // (obs ++ act) -> scalar Q
  double omega = 0.01;
  double gamma = 0.95;

  // Actor final layer scaled by 0.01 so the initial policy sits near the
  // prior's mean region; targets start as critic copies.
  static AgentParams init(const AgentConfig& cfg, Rng& rng);
  std::vector<TensorRef> actor_tensors();
  std::vector<TensorRef> critic_tensors();  // critic1 + critic2
  std::vector<TensorRef> tensors();         // everything incl. targets (checkpointing)
  void zero_grads();
  int64_t parameter_count() const;
};

DiagGaussian actor_forward(const AgentParams& a, const Eigen::VectorXd& obs);
double q_value(const MLP& critic, const Eigen::VectorXd& obs, const Eigen::VectorXd& act);

// Closed-form regularizer for one state: KL(pi(.|s) || prior(.|s)) or -H(pi).
// prior may be null in NegEntropy mode.
double policy_regularizer(const DiagGaussian& pi, RegMode mode, const NetParams* prior,
                          const Eigen::VectorXd& obs);

struct ActorLossTerms {
  double total = 0.0;    // omega * mean_reg - mean_q
  double mean_reg = 0.0; // mean KL (or mean -H)
  double mean_q = 0.0;   // mean min(Q1, Q2) at the reparameterized action
};

// noise is one standard-normal row per transition (reparameterization), passed
// in explicitly so losses are pure and finite-difference checkable.
ActorLossTerms actor_loss(const AgentParams& a, RegMode mode, const NetParams* prior,
                          const Batch& b, const Eigen::MatrixXd& noise);
// Accumulates gradients into the actor only.
ActorLossTerms actor_loss_and_backward(AgentParams& a, RegMode mode, const NetParams* prior,
                                       const Batch& b, const Eigen::MatrixXd& noise);

// Mean squared Bellman error summed over both critics against the frozen
// target y = r + gamma * (1 - done) * (min target Q(s', z') - omega * reg(s')).
double critic_loss(const AgentParams& a, RegMode mode, const NetParams* prior, const Batch& b,
                   const Eigen::MatrixXd& next_noise);
// Accumulates gradients into critic1 and critic2 only.
double critic_loss_and_backward(AgentParams& a, RegMode mode, const NetParams* prior,
                                const Batch& b, const Eigen::MatrixXd& next_noise);

// target <- (1 - tau) * target + tau * critic, both twins.
void polyak_update(AgentParams& a, double tau);

struct UpdateReport {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double mean_reg = 0.0;
  double mean_q = 0.0;
  double omega = 0.0;
};

// One critic step, one actor step, one target EMA, optional omega dual ascent.
UpdateReport agent_update(AgentParams& a, RegMode mode, const NetParams* prior,
                          ReplayBuffer& replay, AdamOpt& actor_opt, AdamOpt& critic_opt,
                          const AgentConfig& cfg, Rng& rng);

// --- temporally abstracted rollout ---

// Decodes a segment from (z, current obs) and executes it, truncating at
// episode end. Adds executed step count to *steps if given.
SkillTransition rollout_skill(const EnvConfig& cfg, EnvState& st, const NetParams& decoder,
                              const Eigen::VectorXd& z, int* steps = nullptr);

// --- training loop ---

struct TrainConfig {
  long total_primitive_steps = 200000;
  int eval_every = 10000;        // primitive steps between curve points
  int eval_episodes = 10;
  int prior_warmup_macros = 500; // decisions sampled from the prior before the actor
  uint64_t seed = 0;
  void validate() const;
};

struct CurvePoint {
  long step = 0;
  double mean_reward = 0.0;
};

struct TrainResult {
  AgentParams agent;
  std::vector<CurvePoint> curve;
  std::vector<double> usage;  // fraction of decisions per DPM component
  long primitive_steps = 0;
  long macro_steps = 0;
};

// mode KLToPrior: codec supplies the frozen decoder and prior, dpm (optional)
// attributes each chosen z to its most responsible component for the usage
// report. mode NegEntropy: codec/dpm must be null and act_dim must be the
// primitive action width; each decision is a single env step.
TrainResult train_agent(const EnvConfig& env_cfg, RegMode mode, const NetParams* codec,
                        const DPMState* dpm, const AgentConfig& acfg, const TrainConfig& tcfg);

// Deterministic (mean-action) episodes on train-mode tasks; returns the mean
// episode reward. codec is null for the primitive-space baseline.
double evaluate_train_tasks(const EnvConfig& env_cfg, const AgentParams& agent,
                            const NetParams* codec, int n_episodes, uint64_t seed);

struct ZeroShotReport {
  std::array<double, 3> success_rate{};  // held-out subtasks 4, 5, 6
  std::array<int, 3> appearances{};
  double mean_reward = 0.0;
};

// Mean-action episodes on zero-shot tasks; per-held-out-subtask completion
// rates over the episodes whose goal sequence contains that subtask.
ZeroShotReport evaluate_zero_shot(const EnvConfig& env_cfg, const AgentParams& agent,
                                  const NetParams& codec, int n_episodes, uint64_t seed);

}  // namespace skillrl
