#pragma once

#include <optional>
#include <string>
#include <vector>

#include "skillrl/gauss.hpp"

namespace skillrl {

/* Nonparametric Gaussian mixture fit by truncated stick-breaking variational
 * inference.  Statistics are memoized per batch so revisiting a batch
 * replaces its old contribution instead of accumulating it, and the model
 * grows/shrinks through birth and merge proposals accepted only on bound
 * improvement. */

struct DPMConfig {
  double alpha = 1.0;                 // concentration
  int K_max = 20;                     // truncation ceiling
  int K_birth = 5;                    // components per birth proposal
  double birth_resp_threshold = 0.6;  // membership cutoff for the split subsample
  int merge_pair_budget = 10;         // candidate pairs per merge sweep
  int D = 10;                         // embedding dimension
  double base_kappa = 0.05;
  double base_nu = 13.0;  // D + 3
  VectorXd base_m;        // defaults to zeros(D)
  MatrixXd base_scatter;  // defaults to I * base_nu
  double elbo_tol = 1e-5;     // convergence threshold for fit-to-convergence loops
  int max_local_iters = 50;   // epoch cap for fit-to-convergence loops

  static DPMConfig defaults(int D);
  NIWParams base() const;
  void validate() const;
};

struct Component {
  NIWParams niw;
  double stick_a = 1.0;
  double stick_b = 1.0;
  SuffStats stats;
};

struct DPMState {
  DPMConfig config;
  std::vector<Component> components;
  double total_count = 0.0;

  int K() const { return static_cast<int>(components.size()); }
  void validate() const;
};

// rows sum to one within 1e-9; one column per component
using Responsibilities = MatrixXd;

// fresh single-component state at the base prior
DPMState initial_dpm_state(const DPMConfig& config);

/* E[log pi_k] under the stick-breaking posterior:
 * E[log beta_k] + sum_{j<k} E[log(1 - beta_j)]. */
VectorXd expected_log_weights(const DPMState& state);

// log weight of the mass beyond the truncation: sum_k E[log(1 - beta_k)]
double truncation_remainder_log_weight(const DPMState& state);

/* Softmax over per-component scores E[log pi_k] + E[log p(x_n | theta_k)]
 * for every row of points. Throws NumericError (with the point index) if a
 * row has no finite score. */
Responsibilities local_step(const DPMState& state, const MatrixXd& points);

// alias for the read-only use of the local step
Responsibilities predict_responsibilities(const DPMState& state, const MatrixXd& points);

/* Memoized global update.  Every component's batch contribution is replaced:
 * new stats = old stats - old_batch_stats[k] + stats(points, resp_col_k).
 * Pass nullptr when the batch has never contributed to this state.  Sticks
 * are rebuilt as a_k = 1 + N_k, b_k = alpha + downstream mass and the NIW
 * factor as the conjugate posterior of the base prior. */
DPMState global_step(const DPMState& state, const MatrixXd& points, const Responsibilities& resp,
                     const std::vector<SuffStats>* old_batch_stats);

/* Variational objective of (state, resp) on the given points:
 * data terms (expected log weight + expected log likelihood + assignment
 * entropy) minus the stick and NIW divergences from their priors.  Accepts
 * an empty batch, for which only the penalty terms remain. */
double elbo(const DPMState& state, const MatrixXd& points, const Responsibilities& resp);

// posterior-mean Gaussians: mean m_k, covariance scatter_k / (nu_k - D - 1)
std::vector<FullGaussian> component_gaussians(const DPMState& state);

struct MoveRecord {
  enum class Type { Birth, Merge };
  Type type;
  double pre_elbo = 0.0;
  double post_elbo = 0.0;
  int k_before = 0;
  int k_after = 0;
  bool accepted = false;  // birth records are kept even when the move is rejected
};

struct BirthResult {
  DPMState state;
  bool accepted = false;
  bool attempted = false;  // false when preconditions made the move a no-op
  MoveRecord record;
  Responsibilities batch_resp;  // post-move responsibilities when accepted
  int n_added = 0;
};

/* Birth proposal.  The subsample is the batch points no fitted component
 * claims decisively once the truncation remainder (unclaimed stick mass with
 * base-measure likelihood) competes alongside them; a fresh K_birth-component
 * model is fit to it (k-means++ style seeding, ten local/global sweeps), its
 * nonempty components are appended, one local+global sweep runs on the batch,
 * and the expansion is kept only if the batch bound improves. */
BirthResult birth_move(const DPMState& state, const MatrixXd& batch, Rng& rng,
                       const std::vector<SuffStats>* old_batch_stats = nullptr);

struct MergeResult {
  DPMState state;
  std::vector<MoveRecord> accepted;
  std::vector<std::pair<int, int>> merged_pairs;  // indices at acceptance time
};

/* Merge sweep: candidate pairs ranked by symmetric KL between posterior-mean
 * Gaussians, up to merge_pair_budget pairs per pass; the first pair whose
 * merged bound beats the current bound on data_sample is applied (survivor
 * keeps the lower index) and the sweep restarts until no pair is accepted. */
MergeResult merge_move(const DPMState& state, const MatrixXd& data_sample);

struct EpochReport {
  double elbo = 0.0;  // full-dataset bound of the returned state
  int K = 1;
  int births_attempted = 0;
  int births_accepted = 0;
  int merges_accepted = 0;
  std::vector<MoveRecord> moves;
};

/* Drives fit_epoch over a fixed dataset.  The fitter owns the per-batch
 * responsibility cache that makes the memoized subtract-then-add updates
 * exact across epochs. */
class DPMFitter {
 public:
  explicit DPMFitter(const DPMConfig& config, uint64_t seed);
  // resume from an existing state, e.g. across codec retraining rounds where
  // the embeddings change: statistics reset, learned factors carry over
  DPMFitter(const DPMState& state, uint64_t seed, bool reset_stats);

  /* One pass: per batch a local step, a memoized global step and a birth
   * attempt; one merge sweep over the full dataset at the end. */
  EpochReport fit_epoch(const MatrixXd& points, int batch_size);

  // repeated epochs until the bound improves by less than config.elbo_tol
  std::vector<EpochReport> fit(const MatrixXd& points, int batch_size, int max_epochs);

  double full_elbo(const MatrixXd& points) const;

  // largest relative deviation between memoized statistics and a from-scratch
  // recomputation over the cached responsibilities
  double memo_check(const MatrixXd& points) const;

  const DPMState& state() const { return state_; }
  DPMState& state() { return state_; }

 private:
  MatrixXd batch_rows(const MatrixXd& points, int b) const;

  DPMState state_;
  uint64_t seed_;
  int epoch_ = 0;
  std::vector<Responsibilities> cache_;  // per-batch responsibilities, last visit
  int cached_batch_size_ = -1;
  Eigen::Index cached_n_ = -1;
  std::vector<Eigen::Index> perm_;  // fixed seeded row shuffle for batching
};

// versioned, lossless JSON round trip
std::string dpm_state_to_json(const DPMState& state, int indent = 2);
DPMState dpm_state_from_json(const std::string& text);

}  // namespace skillrl
