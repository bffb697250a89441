#include "skillrl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace skillrl {

namespace {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd clamp_log_var(const VectorXd& lv) {
  return lv.cwiseMax(kLogVarLo).cwiseMin(kLogVarHi);
}

// Sub-gradient of the clamp: zero wherever the raw value sits outside the band.
VectorXd clamp_mask(const VectorXd& raw) {
  VectorXd m(raw.size());
  for (int i = 0; i < raw.size(); ++i) {
    m(i) = (raw(i) > kLogVarLo && raw(i) < kLogVarHi) ? 1.0 : 0.0;
  }
  return m;
}

DiagGaussian head_to_gaussian(const VectorXd& out, int D) {
  DiagGaussian g;
  g.mean = out.head(D);
  g.log_var = clamp_log_var(out.tail(D));
  return g;
}

}  // namespace

// --- MLP ---

MLP MLP::make(const std::vector<int>& widths, Rng& rng, double final_scale) {
  if (widths.size() < 2) throw ConfigError("MLP: need at least an input and an output width");
  for (int w : widths) {
    if (w < 1) throw ConfigError("MLP: layer widths must be positive");
  }
  MLP p;
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    p.layers.push_back(LinearParams::init(widths[i + 1], widths[i], rng));
  }
  p.layers.back().W *= final_scale;
  p.layers.back().b *= final_scale;
  return p;
}

std::vector<TensorRef> MLP::tensors(const std::string& prefix) {
  std::vector<TensorRef> ts;
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string base = prefix + ".l" + std::to_string(i);
    ts.push_back({base + ".W", &layers[i].W, &layers[i].gW});
    ts.push_back({base + ".b", &layers[i].b, &layers[i].gb});
  }
  return ts;
}

void MLP::zero_grads() {
  for (auto& l : layers) {
    l.gW.setZero();
    l.gb.setZero();
  }
}

int64_t MLP::parameter_count() const {
  int64_t n = 0;
  for (const auto& l : layers) n += l.W.size() + l.b.size();
  return n;
}

VectorXd mlp_forward(const MLP& p, const VectorXd& x, MLPTape* tape) {
  if (p.layers.empty()) throw ContractError("mlp_forward: uninitialized network");
  if (x.size() != p.layers.front().W.cols()) throw ContractError("mlp_forward: input width mismatch");
  if (tape != nullptr) {
    tape->x = x;
    tape->h.clear();
  }
  VectorXd cur = x;
  for (size_t i = 0; i + 1 < p.layers.size(); ++i) {
    cur = linear_forward(p.layers[i], cur).array().tanh().matrix();
    if (tape != nullptr) tape->h.push_back(cur);
  }
  return linear_forward(p.layers.back(), cur);
}

VectorXd mlp_backward(MLP& p, const MLPTape& tape, const VectorXd& dout) {
  const size_t n = p.layers.size();
  if (tape.h.size() + 1 != n) throw ContractError("mlp_backward: tape does not match network");
  VectorXd d = linear_backward(p.layers[n - 1], n == 1 ? tape.x : tape.h[n - 2], dout);
  for (size_t i = n - 1; i-- > 0;) {
    d = (d.array() * (1.0 - tape.h[i].array().square())).matrix();  // through tanh
    d = linear_backward(p.layers[i], i == 0 ? tape.x : tape.h[i - 1], d);
  }
  return d;
}

VectorXd mlp_input_grad(const MLP& p, const MLPTape& tape, const VectorXd& dout) {
  const size_t n = p.layers.size();
  if (tape.h.size() + 1 != n) throw ContractError("mlp_input_grad: tape does not match network");
  VectorXd d = p.layers[n - 1].W.transpose() * dout;
  for (size_t i = n - 1; i-- > 0;) {
    d = (d.array() * (1.0 - tape.h[i].array().square())).matrix();
    d = p.layers[i].W.transpose() * d;
  }
  return d;
}

// --- transitions and replay ---

void SkillTransition::validate(int obs_dim, int act_dim) const {
  if (obs.size() != obs_dim || next_obs.size() != obs_dim) {
    throw ContractError("SkillTransition: observation width mismatch");
  }
  if (z.size() != act_dim) throw ContractError("SkillTransition: action width mismatch");
  if (!(cum_reward >= 0.0 && cum_reward <= 4.0)) {
    throw ContractError("SkillTransition: cum_reward must lie in [0, 4]");
  }
  if (!obs.allFinite() || !next_obs.allFinite() || !z.allFinite()) {
    throw NumericError("SkillTransition: non-finite entries");
  }
}

ReplayBuffer::ReplayBuffer(size_t capacity, uint64_t seed) : capacity_(capacity), rng_(seed) {
  if (capacity_ == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
  data_.reserve(std::min<size_t>(capacity_, 1 << 16));
}

void ReplayBuffer::insert(SkillTransition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);  // overwrite the oldest slot
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<int> ReplayBuffer::sample_indices(int batch) {
  if (batch < 1) throw ConfigError("ReplayBuffer: batch must be positive");
  if (data_.size() < static_cast<size_t>(batch)) {
    throw ContractError("ReplayBuffer: not enough transitions to sample");
  }
  std::vector<int> idx(batch);
  for (int i = 0; i < batch; ++i) {
    idx[i] = static_cast<int>(rng_.randint(data_.size()));
  }
  return idx;
}

Batch make_batch(const ReplayBuffer& replay, const std::vector<int>& indices) {
  if (indices.empty()) throw ContractError("make_batch: empty index list");
  const int B = static_cast<int>(indices.size());
  const SkillTransition& first = replay.at(indices[0]);
  Batch b;
  b.obs.resize(B, first.obs.size());
  b.act.resize(B, first.z.size());
  b.next_obs.resize(B, first.next_obs.size());
  b.reward.resize(B);
  b.done.resize(B);
  for (int i = 0; i < B; ++i) {
    const SkillTransition& t = replay.at(indices[i]);
    b.obs.row(i) = t.obs.transpose();
    b.act.row(i) = t.z.transpose();
    b.next_obs.row(i) = t.next_obs.transpose();
    b.reward(i) = t.cum_reward;
    b.done(i) = t.done ? 1.0 : 0.0;
  }
  return b;
}

// --- agent ---

void AgentConfig::validate() const {
  if (obs_dim < 1 || act_dim < 1) throw ConfigError("AgentConfig: dimensions must be positive");
  if (hidden < 1) throw ConfigError("AgentConfig: hidden width must be positive");
  if (!(actor_lr >= 0.0) || !(critic_lr >= 0.0)) throw ConfigError("AgentConfig: learning rates must be non-negative");
  if (!(omega >= 0.0)) throw ConfigError("AgentConfig: omega must be non-negative");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("AgentConfig: gamma must lie in [0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("AgentConfig: tau must lie in (0, 1]");
  if (batch_size < 1) throw ConfigError("AgentConfig: batch_size must be positive");
  if (replay_capacity < batch_size) throw ConfigError("AgentConfig: replay capacity below batch size");
  if (warmup_transitions < 0) throw ConfigError("AgentConfig: warmup must be non-negative");
  if (update_every < 1) throw ConfigError("AgentConfig: update_every must be positive");
  if (auto_omega && !(omega_lr > 0.0 && kl_target > 0.0)) {
    throw ConfigError("AgentConfig: auto omega needs positive omega_lr and kl_target");
  }
}

AgentParams AgentParams::init(const AgentConfig& cfg, Rng& rng) {
  cfg.validate();
  AgentParams a;
  a.obs_dim = cfg.obs_dim;
  a.act_dim = cfg.act_dim;
  a.omega = cfg.omega;
  a.gamma = cfg.gamma;
  a.actor = MLP::make({cfg.obs_dim, cfg.hidden, cfg.hidden, 2 * cfg.act_dim}, rng, 0.01);
  a.critic1 = MLP::make({cfg.obs_dim + cfg.act_dim, cfg.hidden, cfg.hidden, 1}, rng);
  a.critic2 = MLP::make({cfg.obs_dim + cfg.act_dim, cfg.hidden, cfg.hidden, 1}, rng);
  a.target1 = a.critic1;
  a.target2 = a.critic2;
  return a;
}

std::vector<TensorRef> AgentParams::actor_tensors() { return actor.tensors("actor"); }

std::vector<TensorRef> AgentParams::critic_tensors() {
  std::vector<TensorRef> ts = critic1.tensors("critic1");
  for (auto& t : critic2.tensors("critic2")) ts.push_back(t);
  return ts;
}

std::vector<TensorRef> AgentParams::tensors() {
  std::vector<TensorRef> ts = actor.tensors("actor");
  for (auto& t : critic1.tensors("critic1")) ts.push_back(t);
  for (auto& t : critic2.tensors("critic2")) ts.push_back(t);
  for (auto& t : target1.tensors("target1")) ts.push_back(t);
  for (auto& t : target2.tensors("target2")) ts.push_back(t);
  return ts;
}

void AgentParams::zero_grads() {
  actor.zero_grads();
  critic1.zero_grads();
  critic2.zero_grads();
  target1.zero_grads();
  target2.zero_grads();
}

int64_t AgentParams::parameter_count() const {
  return actor.parameter_count() + critic1.parameter_count() + critic2.parameter_count() +
         target1.parameter_count() + target2.parameter_count();
}

DiagGaussian actor_forward(const AgentParams& a, const VectorXd& obs) {
  return head_to_gaussian(mlp_forward(a.actor, obs), a.act_dim);
}

double q_value(const MLP& critic, const VectorXd& obs, const VectorXd& act) {
  VectorXd x(obs.size() + act.size());
  x << obs, act;
  return mlp_forward(critic, x)(0);
}

double policy_regularizer(const DiagGaussian& pi, RegMode mode, const NetParams* prior,
                          const VectorXd& obs) {
  if (mode == RegMode::NegEntropy) return -entropy_diag(pi);
  if (prior == nullptr) throw ContractError("policy_regularizer: KL mode needs a prior net");
  return kl_diag_diag(pi, prior_forward(*prior, obs));
}

namespace {

// Shared forward (and optional actor backward) for the actor objective.
ActorLossTerms actor_loss_impl(const AgentParams& a, RegMode mode, const NetParams* prior,
                               const Batch& b, const MatrixXd& noise, MLP* actor_grads) {
  const int B = static_cast<int>(b.obs.rows());
  if (B < 1) throw ContractError("actor_loss: empty batch");
  if (noise.rows() != B || noise.cols() != a.act_dim) {
    throw ContractError("actor_loss: noise must be batch x act_dim");
  }
  if (mode == RegMode::KLToPrior && prior == nullptr) {
    throw ContractError("actor_loss: KL mode needs a prior net");
  }

  ActorLossTerms terms;
  for (int i = 0; i < B; ++i) {
    const VectorXd obs = b.obs.row(i).transpose();
    MLPTape tape;
    const VectorXd out = mlp_forward(a.actor, obs, &tape);
    const VectorXd mean = out.head(a.act_dim);
    const VectorXd lv_raw = out.tail(a.act_dim);
    const VectorXd lv = clamp_log_var(lv_raw);
    const ArrayXd sigma = (0.5 * lv.array()).exp();

    DiagGaussian pi;
    pi.mean = mean;
    pi.log_var = lv;

    VectorXd dmean = VectorXd::Zero(a.act_dim);
    VectorXd dlv = VectorXd::Zero(a.act_dim);

    // regularizer and its closed-form gradient
    double reg;
    if (mode == RegMode::KLToPrior) {
      const DiagGaussian p = prior_forward(*prior, obs);
      reg = kl_diag_diag(pi, p);
      const ArrayXd inv_vp = (-p.log_var.array()).exp();
      dmean += ((mean - p.mean).array() * inv_vp).matrix();
      dlv += (0.5 * (lv.array().exp() * inv_vp - 1.0)).matrix();
    } else {
      reg = -entropy_diag(pi);
      dlv.array() += -0.5;
    }

    // reparameterized action through the lower of the two critics
    const VectorXd eps = noise.row(i).transpose();
    const VectorXd zt = mean + (sigma * eps.array()).matrix();
    VectorXd x(obs.size() + zt.size());
    x << obs, zt;
    MLPTape tq1, tq2;
    const double q1 = mlp_forward(a.critic1, x, &tq1)(0);
    const double q2 = mlp_forward(a.critic2, x, &tq2)(0);
    const double q = std::min(q1, q2);

    terms.mean_reg += reg / B;
    terms.mean_q += q / B;

    if (actor_grads != nullptr) {
      dmean *= a.omega / B;
      dlv *= a.omega / B;
      // -q/B through the critic that attained the minimum, into the action
      const VectorXd dq = VectorXd::Constant(1, -1.0 / B);
      const VectorXd dx = q1 <= q2 ? mlp_input_grad(a.critic1, tq1, dq)
                                   : mlp_input_grad(a.critic2, tq2, dq);
      const VectorXd dz = dx.tail(a.act_dim);
      dmean += dz;
      dlv += (dz.array() * eps.array() * sigma * 0.5).matrix();

      VectorXd dout(2 * a.act_dim);
      dout << dmean, (dlv.array() * clamp_mask(lv_raw).array()).matrix();
      MLP& grads = *actor_grads;
      mlp_backward(grads, tape, dout);
    }
  }
  terms.total = a.omega * terms.mean_reg - terms.mean_q;
  return terms;
}

}  // namespace

ActorLossTerms actor_loss(const AgentParams& a, RegMode mode, const NetParams* prior,
                          const Batch& b, const MatrixXd& noise) {
  return actor_loss_impl(a, mode, prior, b, noise, nullptr);
}

ActorLossTerms actor_loss_and_backward(AgentParams& a, RegMode mode, const NetParams* prior,
                                       const Batch& b, const MatrixXd& noise) {
  return actor_loss_impl(a, mode, prior, b, noise, &a.actor);
}

namespace {

VectorXd critic_targets(const AgentParams& a, RegMode mode, const NetParams* prior,
                        const Batch& b, const MatrixXd& next_noise) {
  const int B = static_cast<int>(b.obs.rows());
  VectorXd y(B);
  for (int i = 0; i < B; ++i) {
    double bootstrap = 0.0;
    if (b.done(i) == 0.0) {
      const VectorXd next_obs = b.next_obs.row(i).transpose();
      const DiagGaussian pi = actor_forward(a, next_obs);
      const ArrayXd sigma = (0.5 * pi.log_var.array()).exp();
      const VectorXd z = pi.mean + (sigma * next_noise.row(i).transpose().array()).matrix();
      const double qt = std::min(q_value(a.target1, next_obs, z), q_value(a.target2, next_obs, z));
      bootstrap = a.gamma * (qt - a.omega * policy_regularizer(pi, mode, prior, next_obs));
    }
    y(i) = b.reward(i) + bootstrap;
  }
  return y;
}

double critic_loss_impl(AgentParams& a, RegMode mode, const NetParams* prior, const Batch& b,
                        const MatrixXd& next_noise, bool backward) {
  const int B = static_cast<int>(b.obs.rows());
  if (B < 1) throw ContractError("critic_loss: empty batch");
  if (next_noise.rows() != B || next_noise.cols() != a.act_dim) {
    throw ContractError("critic_loss: noise must be batch x act_dim");
  }
  const VectorXd y = critic_targets(a, mode, prior, b, next_noise);

  double loss = 0.0;
  for (int i = 0; i < B; ++i) {
    VectorXd x(a.obs_dim + a.act_dim);
    x << b.obs.row(i).transpose(), b.act.row(i).transpose();
    MLPTape t1, t2;
    const double q1 = mlp_forward(a.critic1, x, &t1)(0);
    const double q2 = mlp_forward(a.critic2, x, &t2)(0);
    loss += ((q1 - y(i)) * (q1 - y(i)) + (q2 - y(i)) * (q2 - y(i))) / B;
    if (backward) {
      mlp_backward(a.critic1, t1, VectorXd::Constant(1, 2.0 * (q1 - y(i)) / B));
      mlp_backward(a.critic2, t2, VectorXd::Constant(1, 2.0 * (q2 - y(i)) / B));
    }
  }
  return loss;
}

}  // namespace

double critic_loss(const AgentParams& a, RegMode mode, const NetParams* prior, const Batch& b,
                   const MatrixXd& next_noise) {
  return critic_loss_impl(const_cast<AgentParams&>(a), mode, prior, b, next_noise, false);
}

double critic_loss_and_backward(AgentParams& a, RegMode mode, const NetParams* prior,
                                const Batch& b, const MatrixXd& next_noise) {
  return critic_loss_impl(a, mode, prior, b, next_noise, true);
}

void polyak_update(AgentParams& a, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("polyak_update: tau must lie in (0, 1]");
  const auto blend = [tau](MLP& target, const MLP& critic) {
    for (size_t i = 0; i < target.layers.size(); ++i) {
      target.layers[i].W = (1.0 - tau) * target.layers[i].W + tau * critic.layers[i].W;
      target.layers[i].b = (1.0 - tau) * target.layers[i].b + tau * critic.layers[i].b;
    }
  };
  blend(a.target1, a.critic1);
  blend(a.target2, a.critic2);
}

UpdateReport agent_update(AgentParams& a, RegMode mode, const NetParams* prior,
                          ReplayBuffer& replay, AdamOpt& actor_opt, AdamOpt& critic_opt,
                          const AgentConfig& cfg, Rng& rng) {
  const std::vector<int> idx = replay.sample_indices(cfg.batch_size);
  const Batch b = make_batch(replay, idx);
  const int B = cfg.batch_size;

  MatrixXd next_noise(B, a.act_dim), noise(B, a.act_dim);
  for (int i = 0; i < B; ++i) {
    for (int j = 0; j < a.act_dim; ++j) next_noise(i, j) = rng.normal();
  }
  for (int i = 0; i < B; ++i) {
    for (int j = 0; j < a.act_dim; ++j) noise(i, j) = rng.normal();
  }

  UpdateReport rep;
  a.zero_grads();
  rep.critic_loss = critic_loss_and_backward(a, mode, prior, b, next_noise);
  critic_opt.step(a.critic_tensors(), cfg.grad_clip);

  a.zero_grads();
  const ActorLossTerms at = actor_loss_and_backward(a, mode, prior, b, noise);
  actor_opt.step(a.actor_tensors(), cfg.grad_clip);
  rep.actor_loss = at.total;
  rep.mean_reg = at.mean_reg;
  rep.mean_q = at.mean_q;

  polyak_update(a, cfg.tau);

  if (cfg.auto_omega && mode == RegMode::KLToPrior) {
    a.omega = std::max(1e-8, a.omega + cfg.omega_lr * (at.mean_reg - cfg.kl_target));
  }
  rep.omega = a.omega;
  return rep;
}

// --- temporally abstracted rollout ---

SkillTransition rollout_skill(const EnvConfig& cfg, EnvState& st, const NetParams& decoder,
                              const VectorXd& z, int* steps) {
  if (st.done) throw ContractError("rollout_skill: episode already finished");
  SkillTransition t;
  t.obs = observe(cfg, st);
  t.z = z;
  const std::vector<VectorXd> actions = decode(decoder, z, t.obs);
  for (const VectorXd& a : actions) {
    if (st.done) break;
    if (a.size() != 3) throw ContractError("rollout_skill: decoded action width mismatch");
    const StepResult res = env_step(cfg, st, Action::from_flat(a));
    t.cum_reward += res.reward;
    if (steps != nullptr) *steps += 1;
  }
  t.next_obs = observe(cfg, st);
  t.done = st.done;
  return t;
}

// --- training loop ---

void TrainConfig::validate() const {
  if (total_primitive_steps < 1) throw ConfigError("TrainConfig: step budget must be positive");
  if (eval_every < 1) throw ConfigError("TrainConfig: eval_every must be positive");
  if (eval_episodes < 1) throw ConfigError("TrainConfig: eval_episodes must be positive");
  if (prior_warmup_macros < 0) throw ConfigError("TrainConfig: prior warmup must be non-negative");
}

namespace {

VectorXd sample_gaussian(const DiagGaussian& g, Rng& rng) {
  VectorXd z(g.mean.size());
  for (int i = 0; i < z.size(); ++i) {
    z(i) = g.mean(i) + std::exp(0.5 * g.log_var(i)) * rng.normal();
  }
  return z;
}

// One deterministic (mean-action) episode; returns its total reward.
double greedy_episode(const EnvConfig& env_cfg, const AgentParams& agent, const NetParams* codec,
                      EnvState& st) {
  double total = 0.0;
  while (!st.done) {
    const VectorXd obs = observe(env_cfg, st);
    const DiagGaussian pi = actor_forward(agent, obs);
    if (codec != nullptr) {
      const SkillTransition t = rollout_skill(env_cfg, st, *codec, pi.mean);
      total += t.cum_reward;
    } else {
      total += env_step(env_cfg, st, Action::from_flat(pi.mean)).reward;
    }
  }
  return total;
}

}  // namespace

double evaluate_train_tasks(const EnvConfig& env_cfg, const AgentParams& agent,
                            const NetParams* codec, int n_episodes, uint64_t seed) {
  if (n_episodes < 1) throw ConfigError("evaluate_train_tasks: need at least one episode");
  double total = 0.0;
  for (int ep = 0; ep < n_episodes; ++ep) {
    Rng rng(Rng::derive(seed, ep));
    const std::array<int, kGoalLen> goals = sample_task(env_cfg, TaskMode::Train, rng);
    EnvState st = env_reset(env_cfg, goals, rng);
    total += greedy_episode(env_cfg, agent, codec, st);
  }
  return total / n_episodes;
}

ZeroShotReport evaluate_zero_shot(const EnvConfig& env_cfg, const AgentParams& agent,
                                  const NetParams& codec, int n_episodes, uint64_t seed) {
  if (n_episodes < 1) throw ConfigError("evaluate_zero_shot: need at least one episode");
  ZeroShotReport rep;
  std::array<int, 3> successes{};
  for (int ep = 0; ep < n_episodes; ++ep) {
    Rng rng(Rng::derive(seed, ep));
    const std::array<int, kGoalLen> goals = sample_task(env_cfg, TaskMode::ZeroShot, rng);
    EnvState st = env_reset(env_cfg, goals, rng);
    rep.mean_reward += greedy_episode(env_cfg, agent, &codec, st) / n_episodes;
    for (int h = 0; h < 3; ++h) {
      const int zone = kGoalLen + h;
      if (std::find(goals.begin(), goals.end(), zone) == goals.end()) continue;
      rep.appearances[h] += 1;
      successes[h] += st.subtask_done[zone] ? 1 : 0;
    }
  }
  for (int h = 0; h < 3; ++h) {
    rep.success_rate[h] = rep.appearances[h] > 0
                              ? static_cast<double>(successes[h]) / rep.appearances[h]
                              : 0.0;
  }
  return rep;
}

TrainResult train_agent(const EnvConfig& env_cfg, RegMode mode, const NetParams* codec,
                        const DPMState* dpm, const AgentConfig& acfg, const TrainConfig& tcfg) {
  env_cfg.validate();
  acfg.validate();
  tcfg.validate();
  if (mode == RegMode::KLToPrior) {
    if (codec == nullptr) throw ConfigError("train_agent: KL mode needs pretrained codec params");
    codec->validate();
    if (acfg.act_dim != codec->dims.D || acfg.obs_dim != codec->dims.D_s) {
      throw ConfigError("train_agent: agent dimensions disagree with the codec");
    }
  } else {
    if (codec != nullptr || dpm != nullptr) {
      throw ConfigError("train_agent: the baseline takes no pretrained artifacts");
    }
    if (acfg.act_dim != 3) throw ConfigError("train_agent: baseline must act in primitive space");
  }
  if (acfg.obs_dim != obs_dim(env_cfg)) {
    throw ConfigError("train_agent: obs_dim disagrees with the environment");
  }

  Rng rng_init(Rng::derive(tcfg.seed, 0));
  AgentParams agent = AgentParams::init(acfg, rng_init);
  ReplayBuffer replay(acfg.replay_capacity, Rng::derive(tcfg.seed, 1));
  AdamOpt actor_opt(acfg.actor_lr), critic_opt(acfg.critic_lr);
  Rng rng_task(Rng::derive(tcfg.seed, 2));
  Rng rng_env(Rng::derive(tcfg.seed, 3));
  Rng rng_act(Rng::derive(tcfg.seed, 4));
  Rng rng_upd(Rng::derive(tcfg.seed, 5));

  TrainResult out;
  std::vector<double> usage_counts(dpm != nullptr ? dpm->K() : 0, 0.0);
  const int min_fill = std::max(acfg.warmup_transitions, acfg.batch_size);

  long next_eval = 0;
  while (out.primitive_steps < tcfg.total_primitive_steps) {
    if (out.primitive_steps >= next_eval) {
      const uint64_t eval_seed = Rng::derive(tcfg.seed, 100000 + out.curve.size());
      out.curve.push_back({out.primitive_steps,
                           evaluate_train_tasks(env_cfg, agent, codec, tcfg.eval_episodes,
                                                eval_seed)});
      next_eval += tcfg.eval_every;
    }

    const std::array<int, kGoalLen> goals = sample_task(env_cfg, TaskMode::Train, rng_task);
    EnvState st = env_reset(env_cfg, goals, rng_env);
    while (!st.done) {
      const VectorXd obs = observe(env_cfg, st);
      DiagGaussian pi;
      if (mode == RegMode::KLToPrior && out.macro_steps < tcfg.prior_warmup_macros) {
        pi = prior_forward(*codec, obs);
      } else {
        pi = actor_forward(agent, obs);
      }
      const VectorXd z = sample_gaussian(pi, rng_act);

      SkillTransition t;
      if (mode == RegMode::KLToPrior) {
        int n = 0;
        t = rollout_skill(env_cfg, st, *codec, z, &n);
        out.primitive_steps += n;
      } else {
        t.obs = obs;
        t.z = z;
        const StepResult res = env_step(env_cfg, st, Action::from_flat(z.head<3>()));
        t.cum_reward = res.reward;
        t.next_obs = res.obs;
        t.done = res.done;
        out.primitive_steps += 1;
      }
      out.macro_steps += 1;
      t.validate(acfg.obs_dim, acfg.act_dim);
      replay.insert(std::move(t));

      if (dpm != nullptr) {
        const Responsibilities r = predict_responsibilities(*dpm, z.transpose());
        int comp = 0;
        r.row(0).maxCoeff(&comp);
        usage_counts[comp] += 1.0;
      }

      if (static_cast<int>(replay.size()) >= min_fill &&
          out.macro_steps % acfg.update_every == 0) {
        agent_update(agent, mode, codec, replay, actor_opt, critic_opt, acfg, rng_upd);
      }
    }
  }

  const uint64_t eval_seed = Rng::derive(tcfg.seed, 100000 + out.curve.size());
  out.curve.push_back({out.primitive_steps,
                       evaluate_train_tasks(env_cfg, agent, codec, tcfg.eval_episodes, eval_seed)});

  const double total_use = std::accumulate(usage_counts.begin(), usage_counts.end(), 0.0);
  if (total_use > 0.0) {
    for (double& u : usage_counts) u /= total_use;
  }
  out.usage = std::move(usage_counts);
  out.agent = std::move(agent);
  return out;
}

}  // namespace skillrl
