#include "skillrl/config.hpp"

#include <cctype>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "skillrl/io.hpp"

namespace skillrl {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& RunConfig::schema() {
  static const std::vector<std::pair<std::string, std::string>> kSchema = {
      {"data.n_traj", "400"},
      {"env.max_episode_steps", "280"},
      {"env.zone_radius", "0.15"},
      {"codec.epochs", "30"},
      {"codec.batch_size", "32"},
      {"codec.lr", "0.0003"},
      {"codec.dpm_refit_every", "1"},
      {"codec.grad_clip", "5"},
      {"codec.H_e", "32"},
      {"codec.H_d", "32"},
      {"codec.H_p", "32"},
      {"codec.slice_len", "10"},
      {"loss.zeta1", "1"},
      {"loss.zeta2", "0.1"},
      {"loss.zeta3", "1"},
      {"dpm.alpha", "1"},
      {"dpm.K_max", "20"},
      {"dpm.K_birth", "5"},
      {"dpm.birth_resp_threshold", "0.6"},
      {"dpm.merge_pair_budget", "10"},
      {"dpm.D", "10"},
      {"dpm.base_kappa", "0.05"},
      {"dpm.base_nu", "13"},
      {"dpm.elbo_tol", "1e-05"},
      {"dpm.max_local_iters", "50"},
      {"agent.hidden", "64"},
      {"agent.actor_lr", "0.0003"},
      {"agent.critic_lr", "0.0003"},
      {"agent.omega", "0.01"},
      {"agent.auto_omega", "false"},
      {"agent.kl_target", "5"},
      {"agent.omega_lr", "0.0001"},
      {"agent.gamma", "0.95"},
      // per primitive step; gamma^(1/slice_len) keeps the baseline's horizon
      // aligned with the macro agent's per-skill discount
      {"agent.baseline_gamma", fmt17(std::pow(0.95, 0.1))},
      {"agent.tau", "0.005"},
      {"agent.batch_size", "128"},
      {"agent.replay_capacity", "200000"},
      {"agent.warmup_transitions", "500"},
      // one gradient update per macro decision; the baseline updates every
      // slice_len primitive decisions so both agents take equally many updates
      // at an equal primitive-step budget
      {"agent.update_every", "1"},
      {"agent.baseline_update_every", "10"},
      {"agent.grad_clip", "10"},
      {"train.total_primitive_steps", "200000"},
      {"train.eval_every", "10000"},
      {"train.eval_episodes", "10"},
      {"train.prior_warmup_macros", "500"},
      {"eval.episodes", "50"},
      {"eval.zero_shot_episodes", "50"},
      {"run.seed", "0"},
      {"run.out", "out"},
  };
  return kSchema;
}

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  for (const auto& [key, value] : schema()) cfg.values_[key] = value;
  return cfg;
}

RunConfig RunConfig::from_string(const std::string& text) {
  RunConfig cfg = defaults();
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  std::map<std::string, int> seen;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + " has no '=': '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (value.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": empty value for '" + key +
                        "'");
    }
    if (seen.count(key) != 0) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                        "' (first set at line " + std::to_string(seen[key]) + ")");
    }
    seen[key] = line_no;
    cfg.set(key, value);
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  return from_string(read_text_file(path));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [k, unused] : schema()) {
    (void)unused;
    if (k == key) {
      values_[key] = value;
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ContractError("config key never registered: '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw ConfigError("config value for '" + key + "' is not a number: '" + s + "'");
  }
  return v;
}

int RunConfig::get_int(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') {
    throw ConfigError("config value for '" + key + "' is not an integer: '" + s + "'");
  }
  if (v < INT_MIN || v > INT_MAX) {
    throw ConfigError("config value for '" + key + "' is out of range: '" + s + "'");
  }
  return static_cast<int>(v);
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("config value for '" + key + "' must be 'true' or 'false': '" + s + "'");
}

uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0' || s[0] == '-') {
    throw ConfigError("config value for '" + key + "' is not a non-negative integer: '" + s + "'");
  }
  return static_cast<uint64_t>(v);
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  for (const auto& [key, unused] : schema()) {
    (void)unused;
    os << key << " = " << get(key) << "\n";
  }
  return os.str();
}

uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

EnvConfig RunConfig::env_config() const {
  EnvConfig cfg = EnvConfig::defaults();
  cfg.max_episode_steps = get_int("env.max_episode_steps");
  cfg.zone_radius = get_double("env.zone_radius");
  cfg.validate();
  return cfg;
}

DPMConfig RunConfig::dpm_config() const {
  DPMConfig cfg = DPMConfig::defaults(get_int("dpm.D"));
  cfg.alpha = get_double("dpm.alpha");
  cfg.K_max = get_int("dpm.K_max");
  cfg.K_birth = get_int("dpm.K_birth");
  cfg.birth_resp_threshold = get_double("dpm.birth_resp_threshold");
  cfg.merge_pair_budget = get_int("dpm.merge_pair_budget");
  cfg.base_kappa = get_double("dpm.base_kappa");
  cfg.base_nu = get_double("dpm.base_nu");
  cfg.elbo_tol = get_double("dpm.elbo_tol");
  cfg.max_local_iters = get_int("dpm.max_local_iters");
  cfg.validate();
  return cfg;
}

LossWeights RunConfig::loss_weights() const {
  LossWeights w;
  w.zeta1 = get_double("loss.zeta1");
  w.zeta2 = get_double("loss.zeta2");
  w.zeta3 = get_double("loss.zeta3");
  w.validate();
  return w;
}

TrainSchedule RunConfig::schedule(uint64_t seed) const {
  TrainSchedule s;
  s.epochs = get_int("codec.epochs");
  s.batch_size = get_int("codec.batch_size");
  s.lr = get_double("codec.lr");
  s.dpm_refit_every = get_int("codec.dpm_refit_every");
  s.grad_clip = get_double("codec.grad_clip");
  s.seed = seed;
  s.validate();
  return s;
}

NetDims RunConfig::codec_dims() const {
  NetDims d;
  d.H_e = get_int("codec.H_e");
  d.H_d = get_int("codec.H_d");
  d.H_p = get_int("codec.H_p");
  return d;
}

AgentConfig RunConfig::agent_config(bool baseline) const {
  AgentConfig cfg;
  cfg.obs_dim = obs_dim(env_config());
  cfg.act_dim = baseline ? 3 : get_int("dpm.D");
  cfg.hidden = get_int("agent.hidden");
  cfg.actor_lr = get_double("agent.actor_lr");
  cfg.critic_lr = get_double("agent.critic_lr");
  cfg.omega = get_double("agent.omega");
  cfg.auto_omega = get_bool("agent.auto_omega");
  cfg.kl_target = get_double("agent.kl_target");
  cfg.omega_lr = get_double("agent.omega_lr");
  cfg.gamma = baseline ? get_double("agent.baseline_gamma") : get_double("agent.gamma");
  cfg.tau = get_double("agent.tau");
  cfg.batch_size = get_int("agent.batch_size");
  cfg.replay_capacity = get_int("agent.replay_capacity");
  cfg.warmup_transitions = get_int("agent.warmup_transitions");
  cfg.update_every =
      baseline ? get_int("agent.baseline_update_every") : get_int("agent.update_every");
  cfg.grad_clip = get_double("agent.grad_clip");
  cfg.validate();
  return cfg;
}

TrainConfig RunConfig::train_config(uint64_t seed) const {
  TrainConfig cfg;
  cfg.total_primitive_steps = get_int("train.total_primitive_steps");
  cfg.eval_every = get_int("train.eval_every");
  cfg.eval_episodes = get_int("train.eval_episodes");
  cfg.prior_warmup_macros = get_int("train.prior_warmup_macros");
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

}  // namespace skillrl
