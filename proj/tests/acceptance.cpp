/* Acceptance gate: nine behavioral criteria, each printed as a single
 * [PASS]/[FAIL] line with its measured numbers.  The exit code is the number
 * of failed criteria.  Tolerances are pinned next to each check. */

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <cstdarg>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "helpers.hpp"
#include "skillrl/agent.hpp"
#include "skillrl/codec.hpp"
#include "skillrl/config.hpp"
#include "skillrl/dpm.hpp"
#include "skillrl/env.hpp"
#include "skillrl/io.hpp"

using namespace skillrl;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

struct Criterion {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;
std::vector<std::string> g_only;  // optional criterion filter from argv

template <typename Fn>
void report(const char* id, Fn&& fn) {
  if (!g_only.empty() &&
      std::find(g_only.begin(), g_only.end(), std::string(id)) == g_only.end())
    return;
  Criterion c;
  try {
    c = fn();
  } catch (const std::exception& e) {
    c.pass = false;
    c.detail = std::string("unexpected exception: ") + e.what();
  }
  std::printf("[%s] %s: %s\n", c.pass ? "PASS" : "FAIL", id, c.detail.c_str());
  std::fflush(stdout);
  if (!c.pass) ++g_failures;
}

// --- parameter-vector plumbing (mirrors the unit tests) ---

VectorXd pack(const std::vector<TensorRef>& ts) {
  int n = 0;
  for (auto& t : ts) n += static_cast<int>(t.value->size());
  VectorXd out(n);
  int at = 0;
  for (auto& t : ts)
    for (Eigen::Index j = 0; j < t.value->size(); ++j) out[at++] = (*t.value)(j);
  return out;
}

void unpack(const std::vector<TensorRef>& ts, const VectorXd& flat) {
  int at = 0;
  for (auto& t : ts)
    for (Eigen::Index j = 0; j < t.value->size(); ++j) (*t.value)(j) = flat[at++];
}

VectorXd pack_grads(const std::vector<TensorRef>& ts) {
  int n = 0;
  for (auto& t : ts) n += static_cast<int>(t.grad->size());
  VectorXd out(n);
  int at = 0;
  for (auto& t : ts)
    for (Eigen::Index j = 0; j < t.grad->size(); ++j) out[at++] = (*t.grad)(j);
  return out;
}

Batch random_batch(int B, int obs_dim, int act_dim, Rng& rng) {
  Batch b;
  b.obs.resize(B, obs_dim);
  b.act.resize(B, act_dim);
  b.next_obs.resize(B, obs_dim);
  b.reward.resize(B);
  b.done.resize(B);
  for (int i = 0; i < B; ++i) {
    for (int j = 0; j < obs_dim; ++j) {
      b.obs(i, j) = rng.normal(0.0, 0.5);
      b.next_obs(i, j) = rng.normal(0.0, 0.5);
    }
    for (int j = 0; j < act_dim; ++j) b.act(i, j) = rng.normal();
    b.reward(i) = rng.uniform(0.0, 4.0);
    b.done(i) = rng.uniform() < 0.3 ? 1.0 : 0.0;
  }
  return b;
}

MatrixXd random_noise(int B, int act_dim, Rng& rng) {
  MatrixXd n(B, act_dim);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < act_dim; ++j) n(i, j) = rng.normal();
  return n;
}

std::vector<int> hard_labels(const Responsibilities& r) {
  std::vector<int> out(r.rows());
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    int best;
    r.row(i).maxCoeff(&best);
    out[i] = best;
  }
  return out;
}

// --- shared state between criteria ---

// A1's fitted runs feed A2's bound and memoization checks.
struct BlobRuns {
  std::vector<DPMFitter> fitters;
  std::vector<MatrixXd> datasets;
  std::vector<std::vector<EpochReport>> reports;
};

// A4's first passing pretraining feeds A5 as the frozen skill prior.
struct PretrainedPrior {
  bool ready = false;
  NetParams codec;
  DPMState dpm;
};

// =========================================================================
// A1: mixture recovery on well-separated synthetic clusters
// =========================================================================

Criterion crit_a1(BlobRuns& runs) {
  const auto t0 = Clock::now();
  const std::array<Eigen::Vector2d, 4> centers = {
      Eigen::Vector2d(0, 0), Eigen::Vector2d(8, 0), Eigen::Vector2d(0, 8),
      Eigen::Vector2d(8, 8)};  // unit-sd clusters, 8-sd separation
  const int n_per = 500, n = 2000;
  int ok = 0;
  double min_ari = 1.0;
  int k_lo = 99, k_hi = 0;
  for (int s = 0; s < 5; ++s) {
    Rng rng(1000 + s);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    MatrixXd pts(n, 2);
    std::vector<int> truth(n);
    int row = 0;
    for (int c = 0; c < 4; ++c) {
      for (int i = 0; i < n_per; ++i, ++row) {
        pts.row(perm[row]) = centers[c].transpose() +
                             Eigen::RowVector2d(rng.normal(), rng.normal());
        truth[perm[row]] = c;
      }
    }
    DPMFitter fitter(DPMConfig::defaults(2), 77 + s);
    std::vector<EpochReport> reps = fitter.fit(pts, 256, 20);  // starts at K = 1
    const int K = fitter.state().K();
    const double ari =
        oracle::adjusted_rand_index(hard_labels(predict_responsibilities(fitter.state(), pts)),
                                    truth);
    k_lo = std::min(k_lo, K);
    k_hi = std::max(k_hi, K);
    min_ari = std::min(min_ari, ari);
    if (K >= 3 && K <= 5 && ari >= 0.95) ++ok;
    runs.fitters.push_back(std::move(fitter));
    runs.datasets.push_back(std::move(pts));
    runs.reports.push_back(std::move(reps));
  }
  const double secs = seconds_since(t0);
  Criterion c;
  c.pass = ok == 5 && secs < 30.0;
  c.detail = fmt("%d/5 seeds with K in [3,5] and ARI >= 0.95 (K range %d..%d, min ARI %.4f), %.1f s (limit 30)",
                 ok, k_lo, k_hi, min_ari, secs);
  return c;
}

// =========================================================================
// A2: bound discipline — accepted moves, full-data sweeps, memoized stats
// =========================================================================

Criterion crit_a2(BlobRuns& runs) {
  if (runs.fitters.empty()) return {false, "no fitted runs available (A1 did not produce any)"};
  int n_moves = 0;
  double worst_move_gain = 1e300;   // min over accepted moves of post - pre, >= -1e-6
  double worst_sweep_gain = 1e300;  // min over adjacent sweeps, must be >= -1e-8
  double worst_memo = 0.0;          // max relative deviation, must be <= 1e-6
  for (size_t i = 0; i < runs.fitters.size(); ++i) {
    int accepted_records = 0, accepted_counts = 0;
    for (const EpochReport& rep : runs.reports[i]) {
      accepted_counts += rep.births_accepted + rep.merges_accepted;
      for (const MoveRecord& m : rep.moves) {
        if (!m.accepted) continue;  // rejected birth proposals are logged too
        ++n_moves;
        ++accepted_records;
        worst_move_gain = std::min(worst_move_gain, m.post_elbo - m.pre_elbo);
      }
    }
    if (accepted_records != accepted_counts)
      return {false, fmt("move log inconsistent: %d accepted records vs %d accepted counts",
                         accepted_records, accepted_counts)};
    const MatrixXd& pts = runs.datasets[i];
    DPMState state = runs.fitters[i].state();
    double prev = 0.0;
    for (int sweep = 0; sweep < 4; ++sweep) {
      std::vector<SuffStats> old;
      old.reserve(state.components.size());
      for (const Component& comp : state.components) old.push_back(comp.stats);
      const Responsibilities resp = local_step(state, pts);
      state = global_step(state, pts, resp, &old);
      const double bound = elbo(state, pts, resp);
      if (sweep > 0) worst_sweep_gain = std::min(worst_sweep_gain, bound - prev);
      prev = bound;
    }
    worst_memo = std::max(worst_memo, runs.fitters[i].memo_check(pts));
  }
  Criterion c;
  c.pass = n_moves > 0 && worst_move_gain >= -1e-6 && worst_sweep_gain >= -1e-8 &&
           worst_memo <= 1e-6;
  c.detail = fmt("%d accepted moves, min move gain %.3e (slack 1e-6); min sweep gain %.3e (slack 1e-8); max memo deviation %.3e (tol 1e-6)",
                 n_moves, worst_move_gain, worst_sweep_gain, worst_memo);
  return c;
}

// =========================================================================
// A3: gradient fidelity of the three codec loss terms and the actor loss
// =========================================================================

NetDims tiny_codec_dims() {
  NetDims d;
  d.D_a = 2;
  d.D_s = 3;
  d.D = 2;
  d.H_e = 3;
  d.H_d = 3;
  d.H_p = 3;
  d.L = 3;
  return d;
}

DPMState small_mixture_state() {
  auto cfg = DPMConfig::defaults(2);
  cfg.base_nu = 6.0;
  DPMState state = initial_dpm_state(cfg);
  state.components.push_back(state.components[0]);
  state.components[0].niw.m = (VectorXd(2) << -1.0, 0.5).finished();
  state.components[0].niw.scatter = 4.0 * MatrixXd::Identity(2, 2);
  state.components[0].niw.nu = 6.0;
  state.components[0].stick_a = 3.0;
  state.components[0].stick_b = 2.0;
  state.components[1].niw.m = (VectorXd(2) << 1.5, -0.5).finished();
  state.components[1].niw.scatter = 3.0 * MatrixXd::Identity(2, 2);
  state.components[1].niw.nu = 6.5;
  state.components[1].stick_a = 2.0;
  state.components[1].stick_b = 1.0;
  return state;
}

Criterion crit_a3() {
  const NetDims d = tiny_codec_dims();
  Rng rng(300);
  NetParams params = NetParams::init(d, rng);
  std::vector<SkillSlice> batch;
  for (int i = 0; i < 2; ++i) {
    SkillSlice s;
    s.s0 = VectorXd::NullaryExpr(d.D_s, [&](Eigen::Index) { return 0.5 * rng.normal(); });
    for (int t = 0; t < d.L; ++t)
      s.actions.push_back(
          VectorXd::NullaryExpr(d.D_a, [&](Eigen::Index) { return 0.5 * rng.normal(); }));
    batch.push_back(std::move(s));
  }
  const DPMState mix = small_mixture_state();
  MatrixXd noise(2, d.D);
  for (int r = 0; r < 2; ++r)
    for (int cidx = 0; cidx < d.D; ++cidx) noise(r, cidx) = rng.normal();

  const int codec_params = static_cast<int>(pack(params.tensors()).size());
  if (codec_params > 200) return {false, fmt("codec network has %d parameters (> 200)", codec_params)};

  auto loss_at = [&](const std::vector<TensorRef>& ts, const VectorXd& theta,
                     const LossWeights& w) {
    const VectorXd theta0 = pack(ts);
    unpack(ts, theta);
    const double v = total_loss(params, batch, mix, w, noise).total;
    unpack(ts, theta0);
    return v;
  };
  auto analytic = [&](const std::vector<TensorRef>& ts, const LossWeights& w) {
    params.zero_grads();
    total_loss_and_backward(params, batch, mix, w, noise);
    return pack_grads(ts);
  };

  double worst = 0.0;
  const std::array<LossWeights, 2> full_net_terms = {LossWeights{1, 0, 0}, LossWeights{0, 1, 0}};
  for (const LossWeights& w : full_net_terms) {
    auto ts = params.tensors();
    const VectorXd theta0 = pack(ts);
    const VectorXd fd = oracle::finite_diff(
        [&](const VectorXd& th) { return loss_at(ts, th, w); }, theta0);
    worst = std::max(worst, oracle::max_rel_err(analytic(ts, w), fd, 1e-6));
  }
  {
    auto ts = params.prior_tensors();  // the third term trains the prior net only
    const LossWeights w{0, 0, 1};
    const VectorXd theta0 = pack(ts);
    const VectorXd fd = oracle::finite_diff(
        [&](const VectorXd& th) { return loss_at(ts, th, w); }, theta0);
    worst = std::max(worst, oracle::max_rel_err(analytic(ts, w), fd, 1e-6));
  }

  // stop-gradient contract: the prior-matching term sends nothing to the
  // encoder (or decoder); must hold exactly, not approximately
  params.zero_grads();
  total_loss_and_backward(params, batch, mix, {0, 0, 1}, noise);
  const double enc_leak = pack_grads(params.encoder_tensors()).cwiseAbs().maxCoeff();
  const double dec_leak = pack_grads(params.decoder_tensors()).cwiseAbs().maxCoeff();

  // actor loss on a tiny agent, both regularizer modes
  AgentConfig acfg;
  acfg.obs_dim = 3;
  acfg.act_dim = 2;
  acfg.hidden = 4;
  Rng arng(330);
  AgentParams agent = AgentParams::init(acfg, arng);
  agent.omega = 0.2;
  NetDims pd;
  pd.D_a = 2;
  pd.D_s = 3;
  pd.D = 2;
  pd.H_e = 4;
  pd.H_d = 4;
  pd.H_p = 4;
  pd.L = 4;
  const NetParams prior_net = NetParams::init(pd, arng);
  Rng brng(331);
  const Batch b = random_batch(4, acfg.obs_dim, acfg.act_dim, brng);
  const MatrixXd anoise = random_noise(4, acfg.act_dim, brng);
  const int actor_params = static_cast<int>(pack(agent.actor_tensors()).size());
  if (actor_params > 200) return {false, fmt("actor network has %d parameters (> 200)", actor_params)};
  for (const RegMode mode : {RegMode::KLToPrior, RegMode::NegEntropy}) {
    const NetParams* prior = mode == RegMode::KLToPrior ? &prior_net : nullptr;
    auto ts = agent.actor_tensors();
    const VectorXd theta0 = pack(ts);
    const VectorXd fd = oracle::finite_diff(
        [&](const VectorXd& th) {
          unpack(ts, th);
          const double v = actor_loss(agent, mode, prior, b, anoise).total;
          unpack(ts, theta0);
          return v;
        },
        theta0);
    agent.zero_grads();
    actor_loss_and_backward(agent, mode, prior, b, anoise);
    worst = std::max(worst, oracle::max_rel_err(pack_grads(ts), fd, 1e-4));
  }

  Criterion c;
  c.pass = worst < 1e-4 && enc_leak == 0.0 && dec_leak == 0.0;
  c.detail = fmt("max FD relative error %.3e over 3 loss terms + actor loss (both modes) on %d/%d-parameter nets (tol 1e-4); term-3 encoder|decoder gradient %.1e|%.1e (must be 0)",
                 worst, codec_params, actor_params, enc_leak, dec_leak);
  return c;
}

// =========================================================================
// A4: skill discovery on the scripted demonstration corpus
// =========================================================================

constexpr int kA4Trajectories = 120;
constexpr int kA4Epochs = 30;

Criterion crit_a4(PretrainedPrior& prior_out) {
  const auto t0 = Clock::now();
  const EnvConfig env_cfg = EnvConfig::defaults();
  const DemoDataset demos = generate_demos(env_cfg, kA4Trajectories, /*seed=*/0);
  const RunConfig rc = RunConfig::defaults();
  const SliceSet sliced = slice_dataset(demos, rc.get_int("codec.slice_len"));
  const int N = static_cast<int>(sliced.slices.size());

  int ok = 0;
  std::string per_seed;
  for (uint64_t s = 0; s < 5; ++s) {
    TrainSchedule sched = rc.schedule(s);
    sched.epochs = kA4Epochs;
    const PretrainResult res =
        pretrain(sched, sliced.slices, rc.dpm_config(), rc.loss_weights(), rc.codec_dims());
    const int K = res.dpm.K();
    int k_max = 0;
    for (const PretrainEpoch& e : res.report) k_max = std::max(k_max, e.K);
    MatrixXd Z(N, res.params.dims.D);
    for (int i = 0; i < N; ++i) Z.row(i) = encode(res.params, sliced.slices[i]).mean.transpose();
    const double ari =
        oracle::adjusted_rand_index(hard_labels(predict_responsibilities(res.dpm, Z)),
                                    sliced.labels);
    const bool seed_ok = K >= 5 && K <= 9 && ari >= 0.8 && k_max > K;
    if (seed_ok) {
      ++ok;
      if (!prior_out.ready) {
        prior_out.codec = res.params;
        prior_out.dpm = res.dpm;
        prior_out.ready = true;
      }
    }
    per_seed += fmt("%s s%llu K=%d ARI=%.3f peak=%d", s ? ";" : "",
                    static_cast<unsigned long long>(s), K, ari, k_max);
  }
  const double secs = seconds_since(t0);
  Criterion c;
  c.pass = ok >= 4 && secs < 900.0;
  c.detail = fmt("%d/5 seeds with K in [5,9], ARI >= 0.8, and peak K > final K (%s), %.0f s (limit 900)",
                 ok, per_seed.c_str(), secs);
  return c;
}

// =========================================================================
// A5: prior-regularized agent vs from-scratch baseline at equal step budget
// =========================================================================

constexpr long kA5Budget = 120000;  // primitive steps, within the 200k cap

double mean_of_last_50_episodes(const std::vector<CurvePoint>& curve, int eval_episodes) {
  const int points = std::max(1, (50 + eval_episodes - 1) / eval_episodes);
  const int take = std::min<int>(points, static_cast<int>(curve.size()));
  double sum = 0.0;
  for (int i = 0; i < take; ++i) sum += curve[curve.size() - 1 - i].mean_reward;
  return sum / take;
}

Criterion crit_a5(const PretrainedPrior& prior) {
  if (!prior.ready) return {false, "no pretrained skill prior available (A4 produced none)"};
  RunConfig rc = RunConfig::defaults();
  rc.set("train.total_primitive_steps", std::to_string(kA5Budget));
  const EnvConfig env_cfg = rc.env_config();
  const AgentConfig skill_cfg = rc.agent_config(/*baseline=*/false);
  const AgentConfig base_cfg = rc.agent_config(/*baseline=*/true);
  const int eval_episodes = rc.train_config(0).eval_episodes;

  int wins = 0;
  double max_run_secs = 0.0;
  std::string per_seed;
  for (uint64_t s = 0; s < 5; ++s) {
    const TrainConfig tc = rc.train_config(200 + s);
    auto t0 = Clock::now();
    const TrainResult with_prior =
        train_agent(env_cfg, RegMode::KLToPrior, &prior.codec, &prior.dpm, skill_cfg, tc);
    max_run_secs = std::max(max_run_secs, seconds_since(t0));
    t0 = Clock::now();
    const TrainResult scratch =
        train_agent(env_cfg, RegMode::NegEntropy, nullptr, nullptr, base_cfg, tc);
    max_run_secs = std::max(max_run_secs, seconds_since(t0));
    const double r_prior = mean_of_last_50_episodes(with_prior.curve, eval_episodes);
    const double r_base = mean_of_last_50_episodes(scratch.curve, eval_episodes);
    if (r_prior - r_base >= 1.0) ++wins;
    per_seed += fmt("%s s%llu %.2f vs %.2f", s ? ";" : "",
                    static_cast<unsigned long long>(200 + s), r_prior, r_base);
  }
  Criterion c;
  c.pass = wins >= 4 && max_run_secs < 1800.0;
  c.detail = fmt("%d/5 seeds with margin >= 1.0 of 4 at %ld primitive steps (%s), slowest run %.0f s (limit 1800)",
                 wins, kA5Budget, per_seed.c_str(), max_run_secs);
  return c;
}

// =========================================================================
// A6: macro-transition reward bookkeeping equals primitive-step totals
// =========================================================================

Criterion crit_a6() {
  NetDims dd;
  dd.D_a = 3;
  dd.D_s = 39;
  dd.D = 8;
  dd.H_e = 16;
  dd.H_d = 16;
  dd.H_p = 16;
  dd.L = kSegmentLen;

  // Part 1: episodes under a random decoder, with the episode cap set so the
  // final macro is truncated mid-segment; an independent primitive-step replay
  // of the same latent sequence must reproduce every cumulative reward and the
  // step accounting exactly.
  EnvConfig cfg = EnvConfig::defaults();
  cfg.max_episode_steps = 275;  // 27 full segments + 5 steps
  Rng rng(600);
  const NetParams decoder = NetParams::init(dd, rng);
  int truncated_macros = 0;
  double max_abs_diff = 0.0;
  for (int ep = 0; ep < 6; ++ep) {
    const auto goals =
        sample_task(cfg, ep % 2 == 0 ? TaskMode::Train : TaskMode::ZeroShot, 700 + ep);
    EnvState st = env_reset(cfg, goals, 800 + ep);
    EnvState shadow = st;
    std::vector<VectorXd> zs;
    std::vector<double> macro_rewards;
    std::vector<int> macro_steps;
    double episode_total = 0.0;
    while (!st.done) {
      VectorXd z(dd.D);
      for (int i = 0; i < dd.D; ++i) z(i) = rng.normal();
      int steps = 0;
      const SkillTransition t = rollout_skill(cfg, st, decoder, z, &steps);
      t.validate(obs_dim(cfg), dd.D);
      zs.push_back(z);
      macro_rewards.push_back(t.cum_reward);
      macro_steps.push_back(steps);
      episode_total += t.cum_reward;
      if (t.done != st.done) return {false, "macro done flag disagrees with the environment"};
    }
    if (macro_steps.back() < kSegmentLen) ++truncated_macros;
    // independent replay: decode each latent at the shadow state and step
    double replay_total = 0.0;
    int replay_steps = 0;
    for (size_t m = 0; m < zs.size() && !shadow.done; ++m) {
      const VectorXd obs0 = observe(cfg, shadow);
      const std::vector<VectorXd> acts = decode(decoder, zs[m], obs0);
      double seg = 0.0;
      for (const VectorXd& a : acts) {
        if (shadow.done) break;
        seg += env_step(cfg, shadow, Action::from_flat(a)).reward;
        ++replay_steps;
      }
      replay_total += seg;
      max_abs_diff = std::max(max_abs_diff, std::abs(seg - macro_rewards[m]));
    }
    const int macro_step_sum = std::accumulate(macro_steps.begin(), macro_steps.end(), 0);
    if (macro_step_sum != replay_steps || macro_step_sum != st.steps)
      return {false, fmt("step accounting mismatch: macros %d, replay %d, env %d",
                         macro_step_sum, replay_steps, st.steps)};
    max_abs_diff = std::max(max_abs_diff, std::abs(episode_total - replay_total));
  }
  if (truncated_macros == 0) return {false, "no episode exercised a truncated final macro"};

  // Part 2: a reward that lands inside a macro. The decoder is zeroed so it
  // emits its head bias every step; the bias is the fifth row of a zone's
  // interaction template and the state is hand-built so the window match
  // fires on the first primitive step of the macro.
  double engineered_reward = 0.0;
  {
    EnvConfig c2 = EnvConfig::defaults();
    const MatrixXd tpl = zone_template(c2.interaction_patterns[0], c2.dt);
    if (tpl.cwiseAbs().maxCoeff() > 1.0) return {false, "zone template exceeds actuator bounds"};
    NetParams cdec = NetParams::zeros(dd);
    cdec.dec_head.b.col(0) = tpl.row(kMatchWindow - 1).transpose();
    EnvState st = env_reset(c2, {0, 1, 2, 3}, 900);
    // position chosen so one step of dynamics lands exactly on the zone center
    const Eigen::Vector2d drift =
        kAccelGain * Eigen::Vector2d(tpl(kMatchWindow - 1, 0), tpl(kMatchWindow - 1, 1)) *
        c2.dt * c2.dt;
    st.pos = c2.zone_centers[0] - drift;
    st.vel.setZero();
    st.recent.clear();
    for (int r = 0; r < kMatchWindow - 1; ++r) st.recent.push_back(tpl.row(r).transpose());
    EnvState shadow = st;
    VectorXd z = VectorXd::Zero(dd.D);
    const SkillTransition t = rollout_skill(c2, st, cdec, z);
    engineered_reward = t.cum_reward;
    // replay primitive-by-primitive and compare exactly
    const std::vector<VectorXd> acts = decode(cdec, z, observe(c2, shadow));
    double prim = 0.0;
    for (const VectorXd& a : acts) {
      if (shadow.done) break;
      prim += env_step(c2, shadow, Action::from_flat(a)).reward;
    }
    if (t.cum_reward != prim)
      return {false, fmt("mid-macro reward mismatch: macro %.1f vs primitive %.1f",
                         t.cum_reward, prim)};
    if (engineered_reward != 1.0)
      return {false, fmt("engineered mid-macro completion paid %.3f, expected exactly 1",
                         engineered_reward)};
  }

  // Part 3: chunked accumulation over a reward-bearing scripted episode equals
  // the flat total, including the short final chunk.
  double chunk_diff = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    EnvConfig c3 = EnvConfig::defaults();
    const auto goals = sample_task(c3, TaskMode::Train, 950 + trial);
    EnvState st = env_reset(c3, goals, 960 + trial);
    const EnvState start = st;
    RolloutOptions opt;
    opt.stop_when_complete = true;
    double flat_total = 0.0;
    const DemoTrajectory tr = scripted_rollout(
        c3, st, std::vector<int>(goals.begin(), goals.end()), opt, nullptr, &flat_total);
    EnvState replay = start;
    double chunked_total = 0.0;
    const int T = static_cast<int>(tr.act.rows());
    for (int chunk = 0; chunk < T; chunk += kSegmentLen) {
      double seg = 0.0;
      for (int i = chunk; i < std::min(T, chunk + kSegmentLen); ++i) {
        if (replay.done) break;
        seg += env_step(c3, replay, Action::from_flat(tr.act.row(i).transpose())).reward;
      }
      chunked_total += seg;
    }
    chunk_diff = std::max(chunk_diff, std::abs(chunked_total - flat_total));
    if (flat_total <= 0.0) return {false, "scripted episode collected no reward; check fixture"};
  }

  Criterion c;
  c.pass = max_abs_diff == 0.0 && chunk_diff == 0.0;
  c.detail = fmt("max |macro - primitive| %.1e over 6 random-decoder episodes (%d truncated tails); engineered mid-macro completion paid %.0f; chunked scripted totals differ by %.1e (all must be 0)",
                 max_abs_diff, truncated_macros, engineered_reward, chunk_diff);
  return c;
}

// =========================================================================
// A7: with a N(0, I) prior the actor objective is the entropy-regularized
//     objective plus a state-independent constant
// =========================================================================

Criterion crit_a7() {
  const double kLog2Pi = 1.8378770664093454835606594728112;
  double worst = 0.0;
  for (int round = 0; round < 3; ++round) {
    AgentConfig acfg;
    acfg.obs_dim = 6;
    acfg.act_dim = 3 + round;  // vary the action width across rounds
    acfg.hidden = 8;
    Rng rng(7000 + round);
    AgentParams agent = AgentParams::init(acfg, rng);
    agent.omega = 0.37;

    NetDims pd;
    pd.D_a = 3;
    pd.D_s = acfg.obs_dim;
    pd.D = acfg.act_dim;
    pd.H_e = 4;
    pd.H_d = 4;
    pd.H_p = 4;
    pd.L = 4;
    const NetParams unit_prior = NetParams::zeros(pd);  // prior head emits N(0, I)
    {
      VectorXd probe(acfg.obs_dim);
      for (int i = 0; i < probe.size(); ++i) probe(i) = rng.normal();
      const DiagGaussian g = prior_forward(unit_prior, probe);
      if (g.mean.cwiseAbs().maxCoeff() != 0.0 || g.log_var.cwiseAbs().maxCoeff() != 0.0)
        return {false, "zeroed prior net does not emit N(0, I)"};
    }

    Rng brng(7100 + round);
    const Batch b = random_batch(16, acfg.obs_dim, acfg.act_dim, brng);
    const MatrixXd noise = random_noise(16, acfg.act_dim, brng);
    const ActorLossTerms with_kl = actor_loss(agent, RegMode::KLToPrior, &unit_prior, b, noise);
    const ActorLossTerms with_h = actor_loss(agent, RegMode::NegEntropy, nullptr, b, noise);
    if (with_kl.mean_q != with_h.mean_q)
      return {false, "Q terms differ between regularizer modes on identical parameters"};

    // KL(N(mu, S) || N(0, I)) = -H(N(mu, S)) + (||mu||^2 + tr S)/2 + D/2 log 2pi.
    // The quadratic moment is a per-state policy functional (absorbable into
    // the critic); what must remain is the constant D/2 log 2pi.
    const double constant = 0.5 * acfg.act_dim * kLog2Pi;
    double mean_moment = 0.0;
    for (int i = 0; i < 16; ++i) {
      const VectorXd obs = b.obs.row(i).transpose();
      const DiagGaussian pi = actor_forward(agent, obs);
      const double moment =
          0.5 * (pi.mean.squaredNorm() + pi.log_var.array().exp().sum());
      mean_moment += moment / 16.0;
      const double reg_kl = policy_regularizer(pi, RegMode::KLToPrior, &unit_prior, obs);
      const double reg_h = policy_regularizer(pi, RegMode::NegEntropy, nullptr, obs);
      worst = std::max(worst, std::abs(reg_kl - reg_h - moment - constant));
    }
    worst = std::max(worst,
                     std::abs((with_kl.mean_reg - with_h.mean_reg) - (mean_moment + constant)));
    worst = std::max(worst, std::abs((with_kl.total - with_h.total) -
                                     agent.omega * (mean_moment + constant)));
  }
  Criterion c;
  c.pass = worst <= 1e-10;
  c.detail = fmt("max residual %.3e against the closed-form Gaussian identity over 3 nets x 16 states (tol 1e-10)",
                 worst);
  return c;
}

// =========================================================================
// A8: byte-identical reruns and lossless checkpoint round trips
// =========================================================================

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(SKILLRL_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  CliResult r;
  if (pipe == nullptr) return r;
  char buf[4096];
  size_t n = 0;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Criterion crit_a8(const BlobRuns& runs) {
  const fs::path scratch = fs::temp_directory_path() / "skillrl_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  // (i) the whole pipeline, rerun with an identical config and seeds, must
  // reproduce every artifact byte for byte
  const fs::path out_dir = scratch / "run";
  const fs::path cfg_path = scratch / "run.cfg";
  {
    std::ofstream out(cfg_path);
    out << "data.n_traj = 12\n"
           "codec.epochs = 2\n"
           "agent.warmup_transitions = 20\n"
           "agent.batch_size = 16\n"
           "train.total_primitive_steps = 1500\n"
           "train.eval_every = 700\n"
           "train.eval_episodes = 2\n"
           "train.prior_warmup_macros = 5\n"
           "eval.episodes = 3\n"
           "eval.zero_shot_episodes = 3\n"
        << "run.out = " << out_dir.string() << "\n";
  }
  auto run_pipeline = [&]() -> std::optional<std::string> {
    for (const std::string& cmd :
         {std::string("gen-data"),
          std::string("pretrain --data ") + (out_dir / "demos.jsonl").string(),
          std::string("train --seeds 5"), std::string("eval --seeds 5"),
          std::string("project --data ") + (out_dir / "demos.jsonl").string()}) {
      const CliResult r = run_cli(cmd + " --config " + cfg_path.string() + " --seed 5");
      if (r.exit_code != 0)
        return fmt("command '%s' exited %d: %s", cmd.c_str(), r.exit_code,
                   r.output.substr(0, 200).c_str());
    }
    return std::nullopt;
  };
  if (auto err = run_pipeline()) return {false, *err};
  std::map<std::string, std::string> first_bytes;
  for (const auto& entry : fs::directory_iterator(out_dir))
    first_bytes[entry.path().filename().string()] = slurp(entry.path());
  if (auto err = run_pipeline()) return {false, *err};
  int files_compared = 0;
  for (const auto& [name, bytes] : first_bytes) {
    if (slurp(out_dir / name) != bytes)
      return {false, fmt("rerun differs for %s", name.c_str())};
    ++files_compared;
  }
  if (files_compared < 8)
    return {false, fmt("only %d artifacts produced; pipeline incomplete", files_compared)};

  // (ii) mixture-state JSON round trip on a genuinely fitted state; fit a
  // small one here if this criterion runs without the clustering criteria
  std::optional<DPMFitter> own_fit;
  if (runs.fitters.empty()) {
    Rng rng(4242);
    MatrixXd pts(400, 2);
    for (int i = 0; i < pts.rows(); ++i)
      pts.row(i) = Eigen::RowVector2d((i % 2) * 8.0 + rng.normal(), rng.normal());
    own_fit.emplace(DPMConfig::defaults(2), 99);
    own_fit->fit(pts, 128, 5);
  }
  const DPMState& fitted = own_fit ? own_fit->state() : runs.fitters.front().state();
  const std::string j1 = dpm_state_to_json(fitted);
  const DPMState back = dpm_state_from_json(j1);
  if (dpm_state_to_json(back) != j1) return {false, "mixture JSON round trip not lossless"};
  double dpm_diff = std::abs(back.total_count - fitted.total_count);
  for (int k = 0; k < fitted.K(); ++k) {
    const Component &a = fitted.components[k], &b = back.components[k];
    dpm_diff = std::max({dpm_diff, (a.niw.m - b.niw.m).cwiseAbs().maxCoeff(),
                         (a.niw.scatter - b.niw.scatter).cwiseAbs().maxCoeff(),
                         std::abs(a.niw.kappa - b.niw.kappa), std::abs(a.niw.nu - b.niw.nu),
                         std::abs(a.stick_a - b.stick_a), std::abs(a.stick_b - b.stick_b),
                         std::abs(a.stats.count - b.stats.count),
                         (a.stats.sum_x - b.stats.sum_x).cwiseAbs().maxCoeff(),
                         (a.stats.sum_xx - b.stats.sum_xx).cwiseAbs().maxCoeff()});
  }
  if (dpm_diff > 1e-12) return {false, fmt("mixture round-trip deviation %.3e > 1e-12", dpm_diff)};

  // (iii) codec and agent checkpoints restore bit-for-bit
  Rng rng(888);
  NetDims dims;
  dims.D_a = 3;
  dims.D_s = 39;
  dims.D = 8;
  dims.H_e = 16;
  dims.H_d = 16;
  dims.H_p = 16;
  dims.L = 10;
  NetParams net = NetParams::init(dims, rng);
  const fs::path codec_path = scratch / "roundtrip_codec.bin";
  save_codec(codec_path.string(), net, 0x1234, 7);
  uint64_t h = 0, s = 0;
  NetParams net2 = load_codec(codec_path.string(), &h, &s);
  const VectorXd v1 = pack(net.tensors()), v2 = pack(net2.tensors());
  if (h != 0x1234 || s != 7 || v1.size() != v2.size() || !(v1.array() == v2.array()).all())
    return {false, "codec checkpoint round trip is not exact"};

  AgentConfig acfg;
  acfg.obs_dim = 39;
  acfg.act_dim = 8;
  acfg.hidden = 16;
  AgentParams agent = AgentParams::init(acfg, rng);
  const fs::path agent_path = scratch / "roundtrip_agent.bin";
  save_agent(agent_path.string(), agent, 0x5678, 9);
  AgentParams agent2 = load_agent(agent_path.string(), &h, &s);
  const VectorXd a1 = pack(agent.tensors()), a2 = pack(agent2.tensors());
  if (h != 0x5678 || s != 9 || agent2.omega != agent.omega || agent2.gamma != agent.gamma ||
      a1.size() != a2.size() || !(a1.array() == a2.array()).all())
    return {false, "agent checkpoint round trip is not exact"};

  Criterion c;
  c.pass = true;
  c.detail = fmt("%d artifacts byte-identical across reruns; mixture JSON round trip exact (max dev %.1e); codec/agent checkpoints bit-exact",
                 files_compared, dpm_diff);
  return c;
}

// =========================================================================
// A9: the scripted expert certifies the environment is solvable
// =========================================================================

Criterion crit_a9() {
  const EnvConfig cfg = EnvConfig::defaults();
  // every train-mode goal sequence: the 24 orderings of the four demo zones
  std::array<int, kGoalLen> goals = {0, 1, 2, 3};
  int train_total = 0, train_solved = 0;
  std::sort(goals.begin(), goals.end());
  do {
    for (uint64_t seed : {0ull, 1ull}) {
      EnvState st = env_reset(cfg, goals, seed);
      const double reward = oracle_rollout(cfg, st);
      ++train_total;
      if (reward == 4.0) ++train_solved;
    }
  } while (std::next_permutation(goals.begin(), goals.end()));

  // every held-out goal sequence: ordered 4-of-7 selections that include at
  // least one zero-shot zone (ids 4-6)
  int held_total = 0, held_solved = 0;
  std::array<int, 7> ids = {0, 1, 2, 3, 4, 5, 6};
  for (int a = 0; a < 7; ++a)
    for (int b = 0; b < 7; ++b)
      for (int c = 0; c < 7; ++c)
        for (int d = 0; d < 7; ++d) {
          if (a == b || a == c || a == d || b == c || b == d || c == d) continue;
          if (ids[a] < 4 && ids[b] < 4 && ids[c] < 4 && ids[d] < 4) continue;
          EnvState st = env_reset(cfg, {ids[a], ids[b], ids[c], ids[d]}, 2);
          ++held_total;
          if (oracle_rollout(cfg, st) == 4.0) ++held_solved;
        }

  Criterion c;
  c.pass = train_solved == train_total && held_solved == held_total;
  c.detail = fmt("train-mode: %d/%d sequences at reward exactly 4; held-out: %d/%d solved (success rate %.3f, must be 1.0)",
                 train_solved, train_total, held_solved, held_total,
                 held_total ? static_cast<double>(held_solved) / held_total : 0.0);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) g_only.emplace_back(argv[i]);
  BlobRuns runs;
  PretrainedPrior prior;
  report("A1", [&] { return crit_a1(runs); });
  report("A2", [&] { return crit_a2(runs); });
  report("A3", [] { return crit_a3(); });
  report("A4", [&] { return crit_a4(prior); });
  report("A5", [&] { return crit_a5(prior); });
  report("A6", [] { return crit_a6(); });
  report("A7", [] { return crit_a7(); });
  report("A8", [&] { return crit_a8(runs); });
  report("A9", [] { return crit_a9(); });
  return g_failures;
}
