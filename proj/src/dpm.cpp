#include "skillrl/dpm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "skillrl/special.hpp"

namespace skillrl {

namespace {
constexpr double kTieTol = 1e-10;  // bound ties resolve as rejection

std::vector<SuffStats> batch_contributions(const MatrixXd& points, const Responsibilities& resp) {
  std::vector<SuffStats> out;
  out.reserve(resp.cols());
  for (Eigen::Index k = 0; k < resp.cols(); ++k)
    out.push_back(stats_from_batch(points, resp.col(k)));
  return out;
}
}  // namespace

DPMConfig DPMConfig::defaults(int D) {
  DPMConfig c;
  c.D = D;
  c.base_nu = D + 3.0;
  c.base_m = VectorXd::Zero(D);
  c.base_scatter = c.base_nu * MatrixXd::Identity(D, D);
  return c;
}

NIWParams DPMConfig::base() const {
  NIWParams b;
  b.m = base_m.size() == D ? base_m : VectorXd::Zero(D);
  b.kappa = base_kappa;
  b.nu = base_nu;
  b.scatter = base_scatter.rows() == D ? base_scatter
                                       : MatrixXd(base_nu * MatrixXd::Identity(D, D));
  return b;
}

void DPMConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("dpm: alpha must be positive");
  if (K_max < 1) throw ConfigError("dpm: K_max must be at least 1");
  if (K_birth < 1) throw ConfigError("dpm: K_birth must be at least 1");
  if (!(birth_resp_threshold > 0.0 && birth_resp_threshold <= 1.0))
    throw ConfigError("dpm: birth_resp_threshold must lie in (0, 1]");
  if (merge_pair_budget < 1) throw ConfigError("dpm: merge_pair_budget must be at least 1");
  if (D < 1) throw ConfigError("dpm: D must be at least 1");
  base().validate();
}

void DPMState::validate() const {
  config.validate();
  if (K() < 1 || K() > config.K_max)
    throw ContractError("DPMState: component count outside [1, K_max]");
  double sum = 0.0;
  for (const auto& c : components) sum += c.stats.count;
  if (std::abs(sum - total_count) > 1e-6)
    throw ContractError("DPMState: total_count out of sync with component statistics");
}

DPMState initial_dpm_state(const DPMConfig& config) {
  config.validate();
  DPMState s;
  s.config = config;
  Component c;
  c.niw = config.base();
  c.stick_a = 1.0;
  c.stick_b = config.alpha;
  c.stats = SuffStats::zero(config.D);
  s.components.push_back(std::move(c));
  s.total_count = 0.0;
  return s;
}

VectorXd expected_log_weights(const DPMState& state) {
  const int K = state.K();
  VectorXd elw(K);
  double prefix = 0.0;  // sum of E[log(1 - beta_j)] for j < k
  for (int k = 0; k < K; ++k) {
    const double a = state.components[k].stick_a;
    const double b = state.components[k].stick_b;
    const double dab = digamma(a + b);
    elw[k] = digamma(a) - dab + prefix;
    prefix += digamma(b) - dab;
  }
  return elw;
}

double truncation_remainder_log_weight(const DPMState& state) {
  double acc = 0.0;
  for (const auto& c : state.components)
    acc += digamma(c.stick_b) - digamma(c.stick_a + c.stick_b);
  return acc;
}

namespace {
MatrixXd component_scores(const DPMState& state, const MatrixXd& points) {
  const int K = state.K();
  MatrixXd scores(points.rows(), K);
  const VectorXd elw = expected_log_weights(state);
  for (int k = 0; k < K; ++k)
    scores.col(k) = expected_log_lik_batch(points, state.components[k].niw).array() + elw[k];
  return scores;
}

Responsibilities softmax_rows(const MatrixXd& scores) {
  Responsibilities resp(scores.rows(), scores.cols());
  for (Eigen::Index n = 0; n < scores.rows(); ++n) {
    const double mx = scores.row(n).maxCoeff();
    if (!std::isfinite(mx))
      throw NumericError("local_step: no finite component score for point " + std::to_string(n));
    const Eigen::ArrayXd e = (scores.row(n).array() - mx).exp();
    resp.row(n) = e / e.sum();
  }
  return resp;
}
}  // namespace

Responsibilities local_step(const DPMState& state, const MatrixXd& points) {
  check(points.cols() == state.config.D, "local_step: point dimension mismatch");
  return softmax_rows(component_scores(state, points));
}

Responsibilities predict_responsibilities(const DPMState& state, const MatrixXd& points) {
  return local_step(state, points);
}

DPMState global_step(const DPMState& state, const MatrixXd& points, const Responsibilities& resp,
                     const std::vector<SuffStats>* old_batch_stats) {
  const int K = state.K();
  check(resp.rows() == points.rows() && resp.cols() == K,
        "global_step: responsibility shape mismatch");
  if (old_batch_stats != nullptr)
    check(static_cast<int>(old_batch_stats->size()) == K,
          "global_step: old batch statistics shape mismatch");

  DPMState out = state;
  for (int k = 0; k < K; ++k) {
    SuffStats s = state.components[k].stats;
    if (old_batch_stats != nullptr) s = stats_sub(s, (*old_batch_stats)[k]);
    s = stats_add(s, stats_from_batch(points, resp.col(k)));
    if (s.count < 0.0) {
      if (s.count < -1e-6)
        throw NumericError("global_step: negative mass for component " + std::to_string(k) +
                           " (memoization corrupted)");
      s.count = 0.0;
    }
    out.components[k].stats = std::move(s);
  }

  const NIWParams base = state.config.base();
  double downstream = 0.0;
  for (int k = K - 1; k >= 0; --k) {
    auto& c = out.components[k];
    c.stick_a = 1.0 + c.stats.count;
    c.stick_b = state.config.alpha + downstream;
    downstream += c.stats.count;
    c.niw = niw_posterior(base, c.stats);
  }
  out.total_count = downstream;
  return out;
}

double elbo(const DPMState& state, const MatrixXd& points, const Responsibilities& resp) {
  const int K = state.K();
  double total = 0.0;

  if (points.rows() > 0) {
    check(resp.rows() == points.rows() && resp.cols() == K, "elbo: responsibility shape mismatch");
    const VectorXd elw = expected_log_weights(state);
    for (int k = 0; k < K; ++k) {
      const VectorXd ell = expected_log_lik_batch(points, state.components[k].niw);
      total += resp.col(k).dot(ell + VectorXd::Constant(points.rows(), elw[k]));
    }
    // assignment entropy with 0 log 0 = 0
    for (Eigen::Index n = 0; n < resp.rows(); ++n)
      for (int k = 0; k < K; ++k) {
        const double r = resp(n, k);
        if (r > 0.0) total -= r * std::log(r);
      }
  }

  const NIWParams base = state.config.base();
  for (int k = 0; k < K; ++k) {
    const auto& c = state.components[k];
    total -= beta_kl(c.stick_a, c.stick_b, 1.0, state.config.alpha);
    total -= niw_kl(c.niw, base);
  }
  return total;
}

std::vector<FullGaussian> component_gaussians(const DPMState& state) {
  const int D = state.config.D;
  std::vector<FullGaussian> out;
  out.reserve(state.K());
  for (const auto& c : state.components) {
    if (!(c.niw.nu > D + 1.0))
      throw ConfigError("component_gaussians: nu must exceed D + 1 for a finite covariance");
    FullGaussian g;
    g.mean = c.niw.m;
    g.cov = symmetrized(c.niw.scatter / (c.niw.nu - D - 1.0));
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

/* Greedy k-means++ seed selection on the rows of X: each new seed is drawn as
 * several distance-weighted candidates and the one that most reduces total
 * inertia is kept.  Plain distance-weighted sampling is dominated by isolated
 * outliers when tight heavy modes and sparse scatter coexist; the candidate
 * test sends seeds to the modes instead. */
std::vector<int> kmeanspp_seeds(const MatrixXd& X, int k, Rng& rng) {
  const Eigen::Index n = X.rows();
  // enough candidates that every heavy mode is in the running each round
  const int trials = 8;
  std::vector<int> seeds;
  seeds.push_back(static_cast<int>(rng.randint(n)));
  VectorXd d2 = (X.rowwise() - X.row(seeds[0])).rowwise().squaredNorm();
  while (static_cast<int>(seeds.size()) < k) {
    const double total = d2.sum();
    int best_pick = static_cast<int>(rng.randint(n));
    if (total > 0.0) {
      double best_inertia = std::numeric_limits<double>::infinity();
      for (int t = 0; t < trials; ++t) {
        double u = rng.uniform() * total;
        int pick = static_cast<int>(n) - 1;
        for (Eigen::Index i = 0; i < n; ++i) {
          u -= d2[i];
          if (u <= 0.0) {
            pick = static_cast<int>(i);
            break;
          }
        }
        const double inertia =
            d2.cwiseMin((X.rowwise() - X.row(pick)).rowwise().squaredNorm()).sum();
        if (inertia < best_inertia) {
          best_inertia = inertia;
          best_pick = pick;
        }
      }
    }
    seeds.push_back(best_pick);
    d2 = d2.cwiseMin((X.rowwise() - X.row(best_pick)).rowwise().squaredNorm());
  }
  return seeds;
}

/* Fit a fresh K_birth-component model to a subsample: hard k-means++ style
 * assignment to seed the statistics, then a fixed ten local/global sweeps. */
DPMState fit_fresh(const DPMConfig& config, const MatrixXd& X, int k, Rng& rng) {
  DPMConfig sub = config;
  sub.K_max = std::max(config.K_max, k);
  DPMState state;
  state.config = sub;
  state.components.assign(k, Component{config.base(), 1.0, config.alpha, SuffStats::zero(config.D)});

  const std::vector<int> seeds = kmeanspp_seeds(X, k, rng);
  Responsibilities resp = Responsibilities::Zero(X.rows(), k);
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      const double d = (X.row(n) - X.row(seeds[j])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    resp(n, best) = 1.0;
  }

  std::vector<SuffStats> old(k, SuffStats::zero(config.D));
  state = global_step(state, X, resp, &old);
  for (int sweep = 0; sweep < 10; ++sweep) {
    const auto prev = batch_contributions(X, resp);
    resp = local_step(state, X);
    state = global_step(state, X, resp, &prev);
  }
  state.config = config;
  return state;
}

void rebuild_sticks(DPMState& state) {
  double downstream = 0.0;
  for (int k = state.K() - 1; k >= 0; --k) {
    auto& c = state.components[k];
    c.stick_a = 1.0 + c.stats.count;
    c.stick_b = state.config.alpha + downstream;
    downstream += c.stats.count;
  }
  state.total_count = downstream;
}

}  // namespace

namespace {
/* A state whose global parameters are rebuilt from one batch's contributions
 * alone.  Birth proposals are judged in this frame so that a fresh component
 * competes against incumbents at the batch's own mass scale; under the full
 * memoized counts a newborn sits behind components holding the entire
 * dataset's mass, and the stick-breaking weight penalty (−log of its tiny
 * expected weight, per point) swamps any realistic likelihood gain. */
DPMState batch_frame(const DPMState& state, const MatrixXd& batch,
                     const Responsibilities& resp) {
  DPMState local = state;
  const auto contrib = batch_contributions(batch, resp);
  for (int k = 0; k < state.K(); ++k) {
    local.components[k].stats = contrib[k];
    local.components[k].niw = niw_posterior(state.config.base(), contrib[k]);
  }
  rebuild_sticks(local);
  return local;
}
}  // namespace

BirthResult birth_move(const DPMState& state, const MatrixXd& batch, Rng& rng,
                       const std::vector<SuffStats>* old_batch_stats) {
  BirthResult out;
  out.state = state;
  const int K = state.K();
  const DPMConfig& cfg = state.config;
  if (K + cfg.K_birth > cfg.K_max) return out;

  /* A point is poorly described when no fitted component claims it decisively
   * once the truncation remainder competes alongside them: the remainder cell
   * carries the unclaimed stick mass with base-measure likelihood.  Without
   * it a lone component would absorb every point by normalization and no
   * birth could ever trigger from K = 1. */
  const VectorXd elw = expected_log_weights(state);
  const double rem_lw = truncation_remainder_log_weight(state);
  MatrixXd scores(batch.rows(), K + 1);
  for (int k = 0; k < K; ++k)
    scores.col(k) =
        (expected_log_lik_batch(batch, state.components[k].niw).array() + elw[k]).matrix();
  scores.col(K) = (expected_log_lik_batch(batch, cfg.base()).array() + rem_lw).matrix();

  std::vector<int> subsample;
  const Responsibilities resp = local_step(state, batch);
  for (Eigen::Index n = 0; n < batch.rows(); ++n) {
    const double top = scores.row(n).maxCoeff();
    const double denom = (scores.row(n).array() - top).exp().sum();
    const double best_fitted =
        std::exp(scores.row(n).head(K).maxCoeff() - top) / denom;
    if (best_fitted < cfg.birth_resp_threshold) subsample.push_back(static_cast<int>(n));
  }
  if (static_cast<int>(subsample.size()) < 2 * cfg.K_birth) return out;

  MatrixXd sub(subsample.size(), batch.cols());
  for (size_t i = 0; i < subsample.size(); ++i) sub.row(i) = batch.row(subsample[i]);

  out.attempted = true;
  const DPMState pre_local = batch_frame(state, batch, resp);
  const double pre = elbo(pre_local, batch, local_step(pre_local, batch));

  const DPMState fresh = fit_fresh(cfg, sub, cfg.K_birth, rng);
  DPMState expanded_local = pre_local;
  std::vector<SuffStats> local_old;
  for (const auto& c : expanded_local.components) local_old.push_back(c.stats);
  int n_fresh = 0;
  for (const auto& c : fresh.components) {
    if (c.stats.count <= 1e-6) continue;
    expanded_local.components.push_back(c);
    // the new component's mass came entirely from this batch's subsample,
    // so the sweep below must replace it rather than add to it
    local_old.push_back(c.stats);
    ++n_fresh;
  }
  if (n_fresh == 0) return out;
  rebuild_sticks(expanded_local);

  const Responsibilities swept = local_step(expanded_local, batch);
  expanded_local = global_step(expanded_local, batch, swept, &local_old);
  const double post = elbo(expanded_local, batch, swept);

  out.record = {MoveRecord::Type::Birth, pre, post, K, K + n_fresh, false};
  if (post > pre + kTieTol) {
    // graft the accepted newborns onto the memoized state and take one
    // coordinate-ascent sweep on the batch in the full frame
    DPMState expanded = state;
    std::vector<SuffStats> old(K, SuffStats::zero(cfg.D));
    if (old_batch_stats != nullptr) old = *old_batch_stats;
    for (int j = 0; j < n_fresh; ++j) {
      Component c = expanded_local.components[K + j];
      c.niw = niw_posterior(cfg.base(), c.stats);
      expanded.components.push_back(c);
      old.push_back(expanded.components.back().stats);
    }
    rebuild_sticks(expanded);
    const Responsibilities full_swept = local_step(expanded, batch);
    expanded = global_step(expanded, batch, full_swept, &old);

    out.accepted = true;
    out.record.accepted = true;
    out.state = std::move(expanded);
    out.batch_resp = full_swept;
    out.n_added = n_fresh;
  }
  return out;
}

namespace {
DPMState merged_state(const DPMState& state, int i, int j) {
  DPMState out = state;
  auto& keep = out.components[i];
  keep.stats = stats_add(keep.stats, out.components[j].stats);
  keep.niw = niw_posterior(state.config.base(), keep.stats);
  out.components.erase(out.components.begin() + j);
  rebuild_sticks(out);
  return out;
}
}  // namespace

MergeResult merge_move(const DPMState& state, const MatrixXd& data_sample) {
  MergeResult out;
  out.state = state;
  bool changed = true;
  while (changed && out.state.K() >= 2) {
    changed = false;
    const int K = out.state.K();
    const auto gaussians = component_gaussians(out.state);

    std::vector<std::pair<double, std::pair<int, int>>> ranked;
    for (int i = 0; i < K; ++i)
      for (int j = i + 1; j < K; ++j) {
        const double d = kl_full_full(gaussians[i], gaussians[j]) +
                         kl_full_full(gaussians[j], gaussians[i]);
        ranked.push_back({d, {i, j}});
      }
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (static_cast<int>(ranked.size()) > out.state.config.merge_pair_budget)
      ranked.resize(out.state.config.merge_pair_budget);

    const double cur =
        elbo(out.state, data_sample, local_step(out.state, data_sample));
    for (const auto& [dist, pair] : ranked) {
      (void)dist;
      DPMState candidate = merged_state(out.state, pair.first, pair.second);
      const double merged =
          elbo(candidate, data_sample, local_step(candidate, data_sample));
      if (merged > cur + kTieTol) {
        out.accepted.push_back({MoveRecord::Type::Merge, cur, merged, K, K - 1, true});
        out.merged_pairs.push_back(pair);
        out.state = std::move(candidate);
        changed = true;
        break;
      }
    }
  }
  return out;
}

DPMFitter::DPMFitter(const DPMConfig& config, uint64_t seed)
    : state_(initial_dpm_state(config)), seed_(seed) {}

DPMFitter::DPMFitter(const DPMState& state, uint64_t seed, bool reset_stats)
    : state_(state), seed_(seed) {
  if (reset_stats) {
    for (auto& c : state_.components) c.stats = SuffStats::zero(state_.config.D);
    state_.total_count = 0.0;
  }
}

EpochReport DPMFitter::fit_epoch(const MatrixXd& points, int batch_size) {
  check(batch_size >= 1, "fit_epoch: batch_size must be positive");
  const Eigen::Index N = points.rows();
  check(N > 0, "fit_epoch: empty dataset");
  if (cached_batch_size_ != batch_size || cached_n_ != N) {
    cache_.assign((N + batch_size - 1) / batch_size, Responsibilities());
    cached_batch_size_ = batch_size;
    cached_n_ = N;
    /* Batches are slices of a fixed seeded shuffle so each one is a
     * representative draw of the dataset; contiguous slices of cluster-sorted
     * data would be unimodal and starve the birth proposals.  Drawn once per
     * dataset shape, so memoized per-batch statistics stay valid across
     * epochs. */
    perm_.resize(static_cast<size_t>(N));
    std::iota(perm_.begin(), perm_.end(), Eigen::Index{0});
    Rng prng(Rng::derive(seed_, 0x9e3779b97f4a7c15ull));
    prng.shuffle(perm_);
  }

  Rng rng(Rng::derive(seed_, static_cast<uint64_t>(epoch_)));
  EpochReport report;

  const int n_batches = static_cast<int>(cache_.size());
  for (int b = 0; b < n_batches; ++b) {
    const MatrixXd batch = batch_rows(points, b);

    std::vector<SuffStats> old;
    bool have_old = cache_[b].size() > 0;
    if (have_old) old = batch_contributions(batch, cache_[b]);

    // Birth attempt on the inherited state, before this batch's sweep: at the
    // very first batch of a fresh fit the lone component still sits at the
    // base prior, so unexplained structure can seed new components before the
    // global step absorbs it into one wide component.
    if (state_.K() + state_.config.K_birth <= state_.config.K_max) {
      BirthResult birth = birth_move(state_, batch, rng, have_old ? &old : nullptr);
      if (birth.attempted) {
        ++report.births_attempted;
        report.moves.push_back(birth.record);
      }
      if (birth.accepted) {
        ++report.births_accepted;
        state_ = std::move(birth.state);
        cache_[b] = birth.batch_resp;
        old = batch_contributions(batch, cache_[b]);
        have_old = true;
        for (int other = 0; other < n_batches; ++other) {
          if (other == b || cache_[other].size() == 0) continue;
          Responsibilities grown =
              Responsibilities::Zero(cache_[other].rows(), state_.K());
          grown.leftCols(cache_[other].cols()) = cache_[other];
          cache_[other] = std::move(grown);
        }
      }
    }

    Responsibilities resp = local_step(state_, batch);
    state_ = global_step(state_, batch, resp, have_old ? &old : nullptr);
    cache_[b] = std::move(resp);
  }

  MergeResult merges = merge_move(state_, points);
  for (size_t m = 0; m < merges.accepted.size(); ++m) {
    report.moves.push_back(merges.accepted[m]);
    const auto [i, j] = merges.merged_pairs[m];
    for (auto& resp : cache_) {
      if (resp.size() == 0) continue;
      resp.col(i) += resp.col(j);
      const Eigen::Index cols = resp.cols();
      if (j < cols - 1)
        resp.block(0, j, resp.rows(), cols - 1 - j) = resp.rightCols(cols - 1 - j).eval();
      resp.conservativeResize(Eigen::NoChange, cols - 1);
    }
  }
  report.merges_accepted = static_cast<int>(merges.accepted.size());
  state_ = std::move(merges.state);

  ++epoch_;
  report.K = state_.K();
  report.elbo = full_elbo(points);
  return report;
}

std::vector<EpochReport> DPMFitter::fit(const MatrixXd& points, int batch_size, int max_epochs) {
  std::vector<EpochReport> reports;
  double prev = -std::numeric_limits<double>::infinity();
  const int cap = max_epochs > 0 ? max_epochs : state_.config.max_local_iters;
  for (int e = 0; e < cap; ++e) {
    reports.push_back(fit_epoch(points, batch_size));
    const double cur = reports.back().elbo;
    if (std::isfinite(prev) && std::abs(cur - prev) < state_.config.elbo_tol) break;
    prev = cur;
  }
  return reports;
}

double DPMFitter::full_elbo(const MatrixXd& points) const {
  return elbo(state_, points, local_step(state_, points));
}

MatrixXd DPMFitter::batch_rows(const MatrixXd& points, int b) const {
  const Eigen::Index lo = static_cast<Eigen::Index>(b) * cached_batch_size_;
  const Eigen::Index len = std::min<Eigen::Index>(cached_batch_size_, points.rows() - lo);
  MatrixXd out(len, points.cols());
  for (Eigen::Index i = 0; i < len; ++i) out.row(i) = points.row(perm_[lo + i]);
  return out;
}

double DPMFitter::memo_check(const MatrixXd& points) const {
  const int K = state_.K();
  std::vector<SuffStats> total(K, SuffStats::zero(state_.config.D));
  const int n_batches = static_cast<int>(cache_.size());
  for (int b = 0; b < n_batches; ++b) {
    if (cache_[b].size() == 0) continue;
    const auto contrib = batch_contributions(batch_rows(points, b), cache_[b]);
    for (int k = 0; k < K; ++k) total[k] = stats_add(total[k], contrib[k]);
  }
  double worst = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto& memo = state_.components[k].stats;
    const double scale = std::max(1.0, std::abs(total[k].count));
    worst = std::max(worst, std::abs(memo.count - total[k].count) / scale);
    worst = std::max(worst,
                     (memo.sum_x - total[k].sum_x).cwiseAbs().maxCoeff() / scale);
    worst = std::max(worst,
                     (memo.sum_xx - total[k].sum_xx).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

/* ---------------------------- serialization ---------------------------- */

namespace {
using nlohmann::json;

json vec_to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

VectorXd vec_from_json(const json& a) {
  VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

MatrixXd mat_from_json(const json& rows) {
  const size_t r = rows.size();
  const size_t c = r > 0 ? rows[0].size() : 0;
  MatrixXd m(r, c);
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
  return m;
}
}  // namespace

std::string dpm_state_to_json(const DPMState& state, int indent) {
  json j;
  j["format"] = "dpm-state";
  j["version"] = 1;
  json cfg;
  cfg["alpha"] = state.config.alpha;
  cfg["K_max"] = state.config.K_max;
  cfg["K_birth"] = state.config.K_birth;
  cfg["birth_resp_threshold"] = state.config.birth_resp_threshold;
  cfg["merge_pair_budget"] = state.config.merge_pair_budget;
  cfg["D"] = state.config.D;
  cfg["base_kappa"] = state.config.base_kappa;
  cfg["base_nu"] = state.config.base_nu;
  cfg["base_m"] = vec_to_json(state.config.base().m);
  cfg["base_scatter"] = mat_to_json(state.config.base().scatter);
  cfg["elbo_tol"] = state.config.elbo_tol;
  cfg["max_local_iters"] = state.config.max_local_iters;
  j["config"] = std::move(cfg);
  j["total_count"] = state.total_count;
  json comps = json::array();
  for (const auto& c : state.components) {
    json jc;
    jc["m"] = vec_to_json(c.niw.m);
    jc["kappa"] = c.niw.kappa;
    jc["nu"] = c.niw.nu;
    jc["scatter"] = mat_to_json(c.niw.scatter);
    jc["stick_a"] = c.stick_a;
    jc["stick_b"] = c.stick_b;
    jc["count"] = c.stats.count;
    jc["sum_x"] = vec_to_json(c.stats.sum_x);
    jc["sum_xx"] = mat_to_json(c.stats.sum_xx);
    comps.push_back(std::move(jc));
  }
  j["components"] = std::move(comps);
  return j.dump(indent);
}

DPMState dpm_state_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("dpm state: ") + e.what());
  }
  if (j.value("format", "") != "dpm-state" || j.value("version", 0) != 1)
    throw IoError("dpm state: unsupported format or version");

  DPMState state;
  const json& cfg = j.at("config");
  state.config.alpha = cfg.at("alpha").get<double>();
  state.config.K_max = cfg.at("K_max").get<int>();
  state.config.K_birth = cfg.at("K_birth").get<int>();
  state.config.birth_resp_threshold = cfg.at("birth_resp_threshold").get<double>();
  state.config.merge_pair_budget = cfg.at("merge_pair_budget").get<int>();
  state.config.D = cfg.at("D").get<int>();
  state.config.base_kappa = cfg.at("base_kappa").get<double>();
  state.config.base_nu = cfg.at("base_nu").get<double>();
  state.config.base_m = vec_from_json(cfg.at("base_m"));
  state.config.base_scatter = mat_from_json(cfg.at("base_scatter"));
  state.config.elbo_tol = cfg.at("elbo_tol").get<double>();
  state.config.max_local_iters = cfg.at("max_local_iters").get<int>();
  state.total_count = j.at("total_count").get<double>();
  for (const auto& jc : j.at("components")) {
    Component c;
    c.niw.m = vec_from_json(jc.at("m"));
    c.niw.kappa = jc.at("kappa").get<double>();
    c.niw.nu = jc.at("nu").get<double>();
    c.niw.scatter = mat_from_json(jc.at("scatter"));
    c.stick_a = jc.at("stick_a").get<double>();
    c.stick_b = jc.at("stick_b").get<double>();
    c.stats.count = jc.at("count").get<double>();
    c.stats.sum_x = vec_from_json(jc.at("sum_x"));
    c.stats.sum_xx = mat_from_json(jc.at("sum_xx"));
    state.components.push_back(std::move(c));
  }
  return state;
}

}  // namespace skillrl
