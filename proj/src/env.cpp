#include "skillrl/env.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace skillrl {

namespace {

using json = nlohmann::json;

constexpr double kResetJitter = 0.02;
/* Interaction signatures are steady holds of the interact channel with no
 * acceleration: the agent stays in the zone while the level identifies the
 * primitive.  Constant patterns make every window of a held interaction
 * identical up to noise, so slices of the same interaction cluster as one
 * tight mode instead of a family of phase-shifted variants. */
constexpr double kPushLevel = 1.0;
constexpr double kPullLevel = 0.4;
constexpr double kTwistLevel = -0.4;

// axis displacement below which a reach segment is skipped (within the zone)
constexpr double kReachSkip = 0.12;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int reach_label(int axis, double delta) {
  if (axis == 0) return delta >= 0.0 ? static_cast<int>(Primitive::ReachE)
                                     : static_cast<int>(Primitive::ReachW);
  return delta >= 0.0 ? static_cast<int>(Primitive::ReachN)
                      : static_cast<int>(Primitive::ReachS);
}

bool in_goal(const std::array<int, kGoalLen>& goals, int z) {
  return std::find(goals.begin(), goals.end(), z) != goals.end();
}

double window_msd(const std::vector<Eigen::Vector3d>& recent, const Eigen::MatrixXd& tmpl) {
  double s = 0.0;
  for (int i = 0; i < kMatchWindow; ++i) {
    s += (recent[i] - tmpl.row(i).transpose()).squaredNorm();
  }
  return s / (kMatchWindow * 3);
}

}  // namespace

EnvConfig EnvConfig::defaults() {
  EnvConfig cfg;
  const double r = 0.7;
  const double d = r / std::sqrt(2.0);
  cfg.zone_centers = {
      {r, 0.0}, {0.0, r}, {-r, 0.0}, {0.0, -r},  // demo zones, one per axis
      {d, d},   {-d, d},  {-d, -d},              // held out, on the diagonals
  };
  cfg.interaction_patterns = {Primitive::Push, Primitive::Pull, Primitive::Twist,
                              Primitive::Push, Primitive::Pull, Primitive::Twist,
                              Primitive::Push};
  return cfg;
}

void EnvConfig::validate() const {
  if (!(arena_half_width > 0.0)) throw ConfigError("EnvConfig: arena_half_width must be positive");
  if (!(n_subtasks == 7)) throw ConfigError("EnvConfig: n_subtasks must be 7");
  if (!(static_cast<int>(zone_centers.size()) == n_subtasks)) throw ConfigError("EnvConfig: need one zone center per subtask");
  if (!(static_cast<int>(interaction_patterns.size()) == n_subtasks)) throw ConfigError("EnvConfig: need one interaction pattern per subtask");
  if (!(zone_radius > 0.0)) throw ConfigError("EnvConfig: zone_radius must be positive");
  if (!(dt > 0.0)) throw ConfigError("EnvConfig: dt must be positive");
  if (!(max_episode_steps >= 4 * kSegmentLen)) throw ConfigError("EnvConfig: max_episode_steps must cover at least 4 skill segments");
  for (const auto& c : zone_centers) {
    if (!(c.cwiseAbs().maxCoeff() <= arena_half_width)) throw ConfigError("EnvConfig: zone center outside the arena");
  }
  for (size_t i = 0; i < zone_centers.size(); ++i) {
    for (size_t j = i + 1; j < zone_centers.size(); ++j) {
      if (!((zone_centers[i] - zone_centers[j]).norm() > 2.0 * zone_radius)) throw ConfigError("EnvConfig: zones must be separated by more than one diameter");
    }
  }
  for (Primitive p : interaction_patterns) {
    if (!(p == Primitive::Push || p == Primitive::Pull || p == Primitive::Twist)) throw ConfigError("EnvConfig: interaction patterns must be Push, Pull, or Twist");
  }
}

std::string config_fingerprint(const EnvConfig& cfg) {
  std::string s;
  s += "arena_half_width=" + fmt17(cfg.arena_half_width);
  s += ";n_subtasks=" + std::to_string(cfg.n_subtasks);
  s += ";zone_radius=" + fmt17(cfg.zone_radius);
  s += ";max_episode_steps=" + std::to_string(cfg.max_episode_steps);
  s += ";dt=" + fmt17(cfg.dt);
  s += ";zones=";
  for (const auto& c : cfg.zone_centers) {
    s += fmt17(c.x()) + "," + fmt17(c.y()) + "|";
  }
  s += ";patterns=";
  for (Primitive p : cfg.interaction_patterns) {
    s += std::to_string(static_cast<int>(p)) + ",";
  }
  return s;
}

Action Action::clamped() const {
  Action a;
  a.accel = accel.cwiseMax(-1.0).cwiseMin(1.0);
  a.interact = std::clamp(interact, -1.0, 1.0);
  return a;
}

Eigen::Vector3d Action::flat() const { return {accel.x(), accel.y(), interact}; }

Action Action::from_flat(const Eigen::Vector3d& v) {
  Action a;
  a.accel = v.head<2>();
  a.interact = v(2);
  return a;
}

int obs_dim(const EnvConfig& cfg) { return 4 + cfg.n_subtasks + kGoalLen * cfg.n_subtasks; }

Eigen::VectorXd observe(const EnvConfig& cfg, const EnvState& st) {
  Eigen::VectorXd o = Eigen::VectorXd::Zero(obs_dim(cfg));
  o.head<2>() = st.pos;
  o.segment<2>(2) = st.vel;
  for (int i = 0; i < cfg.n_subtasks; ++i) {
    o(4 + i) = st.subtask_done[i] ? 1.0 : 0.0;
  }
  for (int j = 0; j < kGoalLen; ++j) {
    o(4 + cfg.n_subtasks + j * cfg.n_subtasks + st.goal_sequence[j]) = 1.0;
  }
  return o;
}

EnvState env_reset(const EnvConfig& cfg, const std::array<int, kGoalLen>& goals, Rng& rng) {
  cfg.validate();
  for (int g : goals) {
    if (!(g >= 0 && g < cfg.n_subtasks)) throw ConfigError("env_reset: goal id out of range");
  }
  for (int i = 0; i < kGoalLen; ++i) {
    for (int j = i + 1; j < kGoalLen; ++j) {
      if (!(goals[i] != goals[j])) throw ConfigError("env_reset: duplicate goal id");
    }
  }
  EnvState st;
  st.pos = {rng.normal(0.0, kResetJitter), rng.normal(0.0, kResetJitter)};
  st.pos = st.pos.cwiseMax(-cfg.arena_half_width).cwiseMin(cfg.arena_half_width);
  st.goal_sequence = goals;
  st.recent.reserve(kMatchWindow);
  return st;
}

EnvState env_reset(const EnvConfig& cfg, const std::array<int, kGoalLen>& goals, uint64_t seed) {
  Rng rng(seed);
  return env_reset(cfg, goals, rng);
}

StepResult env_step(const EnvConfig& cfg, EnvState& st, const Action& a) {
  if (st.done) throw ContractError("env_step: episode already finished");
  const Action ac = a.clamped();
  st.vel = kVelDecay * st.vel + kAccelGain * ac.accel * cfg.dt;
  st.pos = (st.pos + st.vel * cfg.dt)
               .cwiseMax(-cfg.arena_half_width)
               .cwiseMin(cfg.arena_half_width);

  if (static_cast<int>(st.recent.size()) == kMatchWindow) {
    st.recent.erase(st.recent.begin());
  }
  st.recent.push_back(ac.flat());

  StepResult res;
  if (static_cast<int>(st.recent.size()) == kMatchWindow) {
    for (int z = 0; z < cfg.n_subtasks; ++z) {
      if (st.subtask_done[z]) continue;
      if ((st.pos - cfg.zone_centers[z]).norm() > cfg.zone_radius) continue;
      const Eigen::MatrixXd tmpl = zone_template(cfg.interaction_patterns[z], cfg.dt);
      if (window_msd(st.recent, tmpl) < kMatchTol) {
        st.subtask_done[z] = true;
        if (in_goal(st.goal_sequence, z)) res.reward = 1.0;
      }
    }
  }

  st.steps += 1;
  bool all_goals = true;
  for (int g : st.goal_sequence) all_goals = all_goals && st.subtask_done[g];
  st.done = all_goals || st.steps >= cfg.max_episode_steps;

  res.done = st.done;
  res.obs = observe(cfg, st);
  return res;
}

Eigen::VectorXd reach_profile(double dt) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(kSegmentLen);
  p.head<4>().setOnes();
  // brake so that a unit reach ends with exactly zero velocity
  double v = 0.0;
  for (int t = 0; t < kSegmentLen - 2; ++t) {
    v = kVelDecay * v + kAccelGain * p(t) * dt;
  }
  p(kSegmentLen - 2) = -kVelDecay * v / (kAccelGain * dt);
  return p;
}

double reach_unit_displacement(double dt) {
  const Eigen::VectorXd p = reach_profile(dt);
  double v = 0.0, x = 0.0;
  for (int t = 0; t < kSegmentLen; ++t) {
    v = kVelDecay * v + kAccelGain * p(t) * dt;
    x += v * dt;
  }
  return x;
}

Eigen::MatrixXd reach_segment(int axis, double delta, double v0, double dt) {
  if (!(axis == 0 || axis == 1)) throw ConfigError("reach_segment: axis must be 0 or 1");
  // displacement the starting velocity will contribute on its own
  double v = v0, drift = 0.0;
  for (int t = 0; t < kSegmentLen; ++t) {
    v *= kVelDecay;
    drift += v * dt;
  }
  double amp = (delta - drift) / reach_unit_displacement(dt);
  amp = std::clamp(amp, -1.0, 1.0);
  Eigen::MatrixXd seg = Eigen::MatrixXd::Zero(kSegmentLen, 3);
  seg.col(axis) = amp * reach_profile(dt);
  seg.col(2).setConstant(-1.0);
  return seg;
}

Eigen::MatrixXd canonical_segment(Primitive p, double dt) {
  Eigen::MatrixXd seg = Eigen::MatrixXd::Zero(kSegmentLen, 3);
  switch (p) {
    case Primitive::ReachN:
    case Primitive::ReachE:
    case Primitive::ReachS:
    case Primitive::ReachW: {
      const int axis = (p == Primitive::ReachE || p == Primitive::ReachW) ? 0 : 1;
      const double sign = (p == Primitive::ReachN || p == Primitive::ReachE) ? 1.0 : -1.0;
      seg.col(axis) = sign * reach_profile(dt);
      seg.col(2).setConstant(-1.0);
      return seg;
    }
    case Primitive::Push:
      seg.col(2).setConstant(kPushLevel);
      return seg;
    case Primitive::Pull:
      seg.col(2).setConstant(kPullLevel);
      return seg;
    case Primitive::Twist:
      seg.col(2).setConstant(kTwistLevel);
      return seg;
  }
  throw ConfigError("canonical_segment: unknown primitive");
}

Eigen::MatrixXd zone_template(Primitive pattern, double dt) {
  return canonical_segment(pattern, dt).bottomRows(kMatchWindow);
}

std::array<int, kGoalLen> sample_task(const EnvConfig& cfg, TaskMode mode, Rng& rng) {
  cfg.validate();
  std::array<int, kGoalLen> goals{};
  if (mode == TaskMode::Train) {
    std::vector<int> pool{0, 1, 2, 3};
    rng.shuffle(pool);
    std::copy(pool.begin(), pool.end(), goals.begin());
    return goals;
  }
  std::vector<int> pool(cfg.n_subtasks);
  for (int i = 0; i < cfg.n_subtasks; ++i) pool[i] = i;
  while (true) {
    rng.shuffle(pool);
    const bool has_held_out = std::any_of(pool.begin(), pool.begin() + kGoalLen,
                                          [](int z) { return z >= kGoalLen; });
    if (has_held_out) break;
  }
  std::copy(pool.begin(), pool.begin() + kGoalLen, goals.begin());
  return goals;
}

std::array<int, kGoalLen> sample_task(const EnvConfig& cfg, TaskMode mode, uint64_t seed) {
  Rng rng(seed);
  return sample_task(cfg, mode, rng);
}

void DemoTrajectory::validate(const EnvConfig& cfg) const {
  const int T = static_cast<int>(act.rows());
  if (!(T >= 1)) throw ContractError("DemoTrajectory: empty trajectory");
  if (!(act.cols() == 3)) throw ContractError("DemoTrajectory: actions must be 3-dimensional");
  if (!(obs.rows() == T + 1)) throw ContractError("DemoTrajectory: need one observation per step plus the final one");
  if (!(obs.cols() == obs_dim(cfg))) throw ContractError("DemoTrajectory: observation width mismatch");
  if (!(static_cast<int>(labels.size()) == T)) throw ContractError("DemoTrajectory: need one label per step");
  for (int l : labels) {
    if (!(l >= 0 && l < kNumPrimitives)) throw ContractError("DemoTrajectory: label out of range");
  }
}

DemoTrajectory scripted_rollout(const EnvConfig& cfg, EnvState& st,
                                const std::vector<int>& targets, const RolloutOptions& opt,
                                Rng* noise_rng, double* total_reward) {
  std::vector<Eigen::VectorXd> obs_list;
  std::vector<Eigen::Vector3d> acts;
  std::vector<int> labels;
  obs_list.push_back(observe(cfg, st));

  // Executes one segment step by step; returns false once the episode is over.
  const auto exec_segment = [&](const Eigen::MatrixXd& seg, int label) {
    for (int t = 0; t < seg.rows(); ++t) {
      if (st.done) return false;
      Action a = Action::from_flat(seg.row(t).transpose());
      if (opt.noise_sigma > 0.0 && noise_rng != nullptr) {
        a.accel.x() += opt.noise_sigma * noise_rng->normal();
        a.accel.y() += opt.noise_sigma * noise_rng->normal();
        a.interact += opt.noise_sigma * noise_rng->normal();
      }
      a = a.clamped();
      const StepResult res = env_step(cfg, st, a);
      if (total_reward != nullptr) *total_reward += res.reward;
      obs_list.push_back(res.obs);
      acts.push_back(a.flat());
      labels.push_back(label);
    }
    return !st.done;
  };

  bool alive = !st.done;
  for (int z : targets) {
    if (!alive) break;
    if (!(z >= 0 && z < cfg.n_subtasks)) throw ConfigError("scripted_rollout: target zone out of range");
    const Eigen::Vector2d& c = cfg.zone_centers[z];
    /* Axis reaches, re-measured from the true state between segments.  The
     * remaining distance is spread over opt.reach_segments equal parts, so a
     * multi-segment approach emits near-identical moderate segments that
     * self-correct toward the zone.  An axis already within the zone radius
     * is skipped: a near-zero-amplitude reach is indistinguishable from
     * coasting and would only dilute the labels. */
    const auto reach_axis = [&](int axis) {
      for (int r = opt.reach_segments; r >= 1 && alive; --r) {
        const double d = c(axis) - st.pos(axis);
        if (std::abs(d) <= kReachSkip) break;
        const double v = axis == 0 ? st.vel.x() : st.vel.y();
        alive = exec_segment(reach_segment(axis, d / r, v, cfg.dt), reach_label(axis, d));
      }
    };
    reach_axis(0);
    if (!alive) break;
    reach_axis(1);
    if (!alive) break;
    const Primitive pat = cfg.interaction_patterns[z];
    const Eigen::MatrixXd seg = canonical_segment(pat, cfg.dt);
    for (int k = 0; k < opt.max_interactions && alive; ++k) {
      if (opt.stop_when_complete && st.subtask_done[z]) break;
      alive = exec_segment(seg, static_cast<int>(pat));
    }
  }

  DemoTrajectory traj;
  const int T = static_cast<int>(acts.size());
  traj.obs.resize(T + 1, obs_dim(cfg));
  for (int t = 0; t <= T; ++t) traj.obs.row(t) = obs_list[t].transpose();
  traj.act.resize(T, 3);
  for (int t = 0; t < T; ++t) traj.act.row(t) = acts[t].transpose();
  traj.labels = std::move(labels);
  return traj;
}

double oracle_rollout(const EnvConfig& cfg, EnvState& st) {
  double total = 0.0;
  RolloutOptions opt;
  opt.noise_sigma = 0.0;
  opt.max_interactions = 3;
  opt.stop_when_complete = true;
  const std::vector<int> targets(st.goal_sequence.begin(), st.goal_sequence.end());
  scripted_rollout(cfg, st, targets, opt, nullptr, &total);
  return total;
}

DemoDataset generate_demos(const EnvConfig& cfg, int n_traj, uint64_t seed) {
  cfg.validate();
  if (!(n_traj > 0)) throw ConfigError("generate_demos: n_traj must be positive");
  DemoDataset ds;
  ds.seed = seed;
  ds.config_hash = fnv1a64(config_fingerprint(cfg));
  std::set<int> covered;
  ds.trajectories.reserve(n_traj);
  /* One zone per trajectory: a slow three-segment approach, then the
   * interaction held for many segments.  Label runs must be long compared to
   * the slicing window: every boundary between primitives contaminates L-1
   * windows, so with one reach/interaction boundary and ~200+ steps the
   * impure fraction stays below 5%.  The multi-segment approach gives the
   * reach primitives enough pure windows to form their own cluster.  Zones
   * cycle through shuffled blocks of all four so any dataset of at least four
   * trajectories covers every demo subtask. */
  Rng task_rng(Rng::derive(seed, 0x7A5Cull));
  std::vector<int> block{0, 1, 2, 3};
  for (int i = 0; i < n_traj; ++i) {
    if (i % 4 == 0) task_rng.shuffle(block);
    const int zone = block[i % 4];
    Rng rng(Rng::derive(seed, i));
    const std::array<int, kGoalLen> goals = sample_task(cfg, TaskMode::Train, rng);
    EnvState st = env_reset(cfg, goals, rng);
    covered.insert(zone);
    RolloutOptions opt;
    opt.noise_sigma = 0.05;
    opt.max_interactions = 17 + static_cast<int>(rng.randint(6));
    opt.stop_when_complete = false;
    opt.reach_segments = 3;
    ds.trajectories.push_back(scripted_rollout(cfg, st, {zone}, opt, &rng, nullptr));
    ds.trajectories.back().validate(cfg);
  }
  ds.covered_subtasks.assign(covered.begin(), covered.end());
  return ds;
}

SliceSet slice_dataset(const DemoDataset& demos, int L) {
  if (!(L > 0)) throw ConfigError("slice_dataset: L must be positive");
  SliceSet out;
  for (const DemoTrajectory& traj : demos.trajectories) {
    const int T = static_cast<int>(traj.act.rows());
    for (int t = 0; t + L <= T; ++t) {
      SkillSlice s;
      s.s0 = traj.obs.row(t).transpose();
      s.actions.reserve(L);
      for (int j = 0; j < L; ++j) s.actions.push_back(traj.act.row(t + j).transpose());
      out.slices.push_back(std::move(s));

      // majority label; ties go to the label seen latest in the window
      int counts[kNumPrimitives] = {0};
      int last_pos[kNumPrimitives] = {0};
      for (int j = 0; j < L; ++j) {
        const int l = traj.labels[t + j];
        counts[l] += 1;
        last_pos[l] = j;
      }
      int best = 0;
      for (int l = 1; l < kNumPrimitives; ++l) {
        if (counts[l] > counts[best] ||
            (counts[l] == counts[best] && last_pos[l] > last_pos[best])) {
          best = l;
        }
      }
      out.labels.push_back(best);
    }
  }
  return out;
}

namespace {

void append_matrix(std::string& out, const Eigen::MatrixXd& m) {
  out += '[';
  for (int r = 0; r < m.rows(); ++r) {
    if (r > 0) out += ',';
    out += '[';
    for (int c = 0; c < m.cols(); ++c) {
      if (c > 0) out += ',';
      out += fmt17(m(r, c));
    }
    out += ']';
  }
  out += ']';
}

std::string trajectory_line(const DemoTrajectory& traj) {
  std::string line;
  line.reserve(static_cast<size_t>(traj.obs.size() + traj.act.size()) * 22 + 64);
  line += "{\"obs\":";
  append_matrix(line, traj.obs);
  line += ",\"act\":";
  append_matrix(line, traj.act);
  line += ",\"skill_label\":[";
  for (size_t i = 0; i < traj.labels.size(); ++i) {
    if (i > 0) line += ',';
    line += std::to_string(traj.labels[i]);
  }
  line += "]}";
  return line;
}

std::string head_line(const DemoDataset& ds) {
  std::string line = "{\"version\":1,\"seed\":" + std::to_string(ds.seed);
  line += ",\"config_hash\":" + std::to_string(ds.config_hash);
  line += ",\"covered_subtasks\":[";
  for (size_t i = 0; i < ds.covered_subtasks.size(); ++i) {
    if (i > 0) line += ',';
    line += std::to_string(ds.covered_subtasks[i]);
  }
  line += "]}";
  return line;
}

Eigen::MatrixXd matrix_from_json(const json& j, int lineno, const char* field) {
  const std::string where = "demos jsonl line " + std::to_string(lineno) + ": ";
  if (!(j.is_array() && !j.empty())) throw ParseError(where + field + " must be a non-empty array");
  const size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (!(cols > 0)) throw ParseError(where + field + " rows must be non-empty arrays");
  Eigen::MatrixXd m(j.size(), cols);
  for (size_t r = 0; r < j.size(); ++r) {
    if (!(j[r].is_array() && j[r].size() == cols)) throw ParseError(where + field + " rows must all have the same width");
    for (size_t c = 0; c < cols; ++c) {
      if (!(j[r][c].is_number())) throw ParseError(where + field + " entries must be numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

}  // namespace

std::string demos_to_jsonl_string(const DemoDataset& ds) {
  std::string out = head_line(ds);
  out += '\n';
  for (const DemoTrajectory& traj : ds.trajectories) {
    out += trajectory_line(traj);
    out += '\n';
  }
  return out;
}

void demos_to_jsonl(const DemoDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!(static_cast<bool>(f))) throw IoError("demos_to_jsonl: cannot open " + path);
  f << head_line(ds) << '\n';
  for (const DemoTrajectory& traj : ds.trajectories) {
    f << trajectory_line(traj) << '\n';
  }
  if (!(static_cast<bool>(f))) throw IoError("demos_to_jsonl: write failed for " + path);
}

DemoDataset demos_from_jsonl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!(static_cast<bool>(f))) throw IoError("demos_from_jsonl: cannot open " + path);
  DemoDataset ds;
  std::string line;
  int lineno = 0;
  bool have_head = false;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("demos jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
    const std::string where = "demos jsonl line " + std::to_string(lineno) + ": ";
    if (!(j.is_object())) throw ParseError(where + "expected a json object");
    if (!have_head) {
      if (!(j.contains("version") && j["version"].is_number_integer() && j["version"] == 1)) throw ParseError(where + "unsupported or missing version");
      if (!(j.contains("seed") && j["seed"].is_number())) throw ParseError(where + "missing seed");
      if (!(j.contains("config_hash") && j["config_hash"].is_number())) throw ParseError(where + "missing config_hash");
      if (!(j.contains("covered_subtasks") && j["covered_subtasks"].is_array())) throw ParseError(where + "missing covered_subtasks");
      ds.seed = j["seed"].get<uint64_t>();
      ds.config_hash = j["config_hash"].get<uint64_t>();
      for (const auto& v : j["covered_subtasks"]) {
        if (!(v.is_number_integer())) throw ParseError(where + "covered_subtasks must be integers");
        ds.covered_subtasks.push_back(v.get<int>());
      }
      have_head = true;
      continue;
    }
    if (!(j.contains("obs") && j.contains("act") && j.contains("skill_label"))) throw ParseError(where + "trajectory needs obs, act, and skill_label");
    DemoTrajectory traj;
    traj.obs = matrix_from_json(j["obs"], lineno, "obs");
    traj.act = matrix_from_json(j["act"], lineno, "act");
    if (!(j["skill_label"].is_array())) throw ParseError(where + "skill_label must be an array");
    for (const auto& v : j["skill_label"]) {
      if (!(v.is_number_integer())) throw ParseError(where + "skill_label entries must be integers");
      traj.labels.push_back(v.get<int>());
    }
    if (!(traj.obs.rows() == traj.act.rows() + 1)) throw ParseError(where + "need one observation per action plus the final one");
    if (!(static_cast<Eigen::Index>(traj.labels.size()) == traj.act.rows())) throw ParseError(where + "need one skill label per action");
    ds.trajectories.push_back(std::move(traj));
  }
  if (!(have_head)) throw ParseError("demos jsonl: missing metadata head line");
  return ds;
}

}  // namespace skillrl
