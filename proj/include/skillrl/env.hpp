#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "skillrl/codec.hpp"
#include "skillrl/common.hpp"

namespace skillrl {

/* A 2-D point-mass arena with seven circular interaction zones. Four zones
 * (ids 0-3) appear in demonstrations, three (ids 4-6) are held out for
 * zero-shot tasks. Each zone completes when the agent sits inside it while
 * the trailing window of executed actions matches the zone's interaction
 * template. Episode reward is sparse: 1 per completed goal subtask. */

// Scripted primitive controllers. The order is fixed: demo labels, canonical
// segments, and cluster evaluation all index by it.
enum class Primitive : int {
  ReachN = 0,
  ReachE = 1,
  ReachS = 2,
  ReachW = 3,
  Push = 4,
  Pull = 5,
  Twist = 6,
};
constexpr int kNumPrimitives = 7;

constexpr int kSegmentLen = 10;   // steps per primitive segment (the skill horizon)
constexpr int kMatchWindow = 5;   // trailing actions compared against zone templates
constexpr double kMatchTol = 0.05;  // mean squared deviation threshold for a match
constexpr int kGoalLen = 4;       // subtasks per episode goal sequence

// Point-mass dynamics: vel <- kVelDecay*vel + kAccelGain*accel*dt.
constexpr double kVelDecay = 0.8;
constexpr double kAccelGain = 0.2;

struct EnvConfig {
  double arena_half_width = 1.0;
  int n_subtasks = 7;
  std::vector<Eigen::Vector2d> zone_centers;    // one per subtask
  double zone_radius = 0.15;
  std::vector<Primitive> interaction_patterns;  // one of Push/Pull/Twist per zone
  int max_episode_steps = 280;
  double dt = 1.0;

  static EnvConfig defaults();
  // Throws ConfigError unless zones are pairwise separated by > 2*zone_radius,
  // sizes are consistent, and max_episode_steps >= 4*kSegmentLen.
  void validate() const;
};

// Canonical byte string for hashing a config into artifact metadata.
std::string config_fingerprint(const EnvConfig& cfg);

struct Action {
  Eigen::Vector2d accel = Eigen::Vector2d::Zero();
  double interact = 0.0;

  Action clamped() const;                      // componentwise into [-1, 1]
  Eigen::Vector3d flat() const;                // (ax, ay, interact)
  static Action from_flat(const Eigen::Vector3d& v);
};

struct EnvState {
  Eigen::Vector2d pos = Eigen::Vector2d::Zero();
  Eigen::Vector2d vel = Eigen::Vector2d::Zero();
  std::array<bool, 7> subtask_done{};
  std::array<int, kGoalLen> goal_sequence{};
  int steps = 0;
  bool done = false;
  std::vector<Eigen::Vector3d> recent;  // trailing executed actions, oldest first
};

// pos(2) + vel(2) + subtask_done(7) + one-hot goal sequence (4*7) = 39.
int obs_dim(const EnvConfig& cfg);
Eigen::VectorXd observe(const EnvConfig& cfg, const EnvState& st);

// Center + N(0, 0.02^2) jitter, everything else cleared. Throws ConfigError on
// duplicate or out-of-range goals.
EnvState env_reset(const EnvConfig& cfg, const std::array<int, kGoalLen>& goals, Rng& rng);
EnvState env_reset(const EnvConfig& cfg, const std::array<int, kGoalLen>& goals, uint64_t seed);

struct StepResult {
  double reward = 0.0;
  bool done = false;
  Eigen::VectorXd obs;
};

// Deterministic transition; throws ContractError if st.done.
StepResult env_step(const EnvConfig& cfg, EnvState& st, const Action& a);

// --- scripted primitive segments (rows: steps; cols: ax, ay, interact) ---

// Acceleration profile of a unit reach, brake coefficient included so the
// terminal velocity is exactly zero.
Eigen::VectorXd reach_profile(double dt);
// Displacement produced by a unit-amplitude reach, obtained by simulating the
// point-mass dynamics.
double reach_unit_displacement(double dt);
// Reach along one axis (0 = x, 1 = y) covering `delta` when started at axis
// velocity v0; amplitude is clipped to the actuator bound.
Eigen::MatrixXd reach_segment(int axis, double delta, double v0, double dt);
// Noiseless unit-amplitude segment of a primitive.
Eigen::MatrixXd canonical_segment(Primitive p, double dt);
// Last kMatchWindow rows of the pattern's canonical segment.
Eigen::MatrixXd zone_template(Primitive pattern, double dt);

// --- tasks ---

enum class TaskMode { Train, ZeroShot };

// Train: the 4 demo subtasks in uniformly random order. ZeroShot: 4 distinct
// subtasks including at least one held-out id (4-6).
std::array<int, kGoalLen> sample_task(const EnvConfig& cfg, TaskMode mode, Rng& rng);
std::array<int, kGoalLen> sample_task(const EnvConfig& cfg, TaskMode mode, uint64_t seed);

// --- demonstrations ---

struct DemoTrajectory {
  Eigen::MatrixXd obs;      // (T+1) x 39, observation before each action + final
  Eigen::MatrixXd act;      // T x 3, executed (clamped) actions
  std::vector<int> labels;  // T, primitive id executed at each step
  void validate(const EnvConfig& cfg) const;
};

struct DemoDataset {
  std::vector<DemoTrajectory> trajectories;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  std::vector<int> covered_subtasks;  // sorted union of visited zones
};

// Chains scripted primitives through the env: per target zone an x-reach and
// a y-reach (each skipped when that axis is already inside the zone), then
// interaction segments. noise_sigma perturbs executed actions. Stops early if
// the episode ends. Returns the executed trajectory; adds any reward collected
// to *total_reward if given.
struct RolloutOptions {
  double noise_sigma = 0.0;
  int max_interactions = 3;          // interaction segments per target
  bool stop_when_complete = false;   // stop interacting once the zone is done
  int reach_segments = 1;            // equal segments per axis approach
};
DemoTrajectory scripted_rollout(const EnvConfig& cfg, EnvState& st,
                                const std::vector<int>& targets, const RolloutOptions& opt,
                                Rng* noise_rng, double* total_reward);

// Noiseless scripted expert for the state's goal sequence; returns total reward.
double oracle_rollout(const EnvConfig& cfg, EnvState& st);

// Each trajectory approaches one demo zone in three reach segments, then
// holds its interaction primitive for 17-22 segments, with N(0, 0.05^2)
// action noise.  Long single-skill runs keep >= 95% of length-L label windows
// inside one primitive; zones cycle in shuffled blocks of four so every
// dataset of >= 4 trajectories covers all demo subtasks.
DemoDataset generate_demos(const EnvConfig& cfg, int n_traj, uint64_t seed);

// --- slicing ---

struct SliceSet {
  std::vector<SkillSlice> slices;
  std::vector<int> labels;  // majority primitive per slice (evaluation only)
};

// All stride-1 windows of length L; slice s0 is the observation at the window
// start. Majority ties go to the label appearing latest in the window.
SliceSet slice_dataset(const DemoDataset& demos, int L);

// --- serialization (JSON-Lines, one trajectory per line after a metadata head
// line; floats printed with 17 significant digits) ---

void demos_to_jsonl(const DemoDataset& demos, const std::string& path);
std::string demos_to_jsonl_string(const DemoDataset& demos);
DemoDataset demos_from_jsonl(const std::string& path);

}  // namespace skillrl
