#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "skillrl/agent.hpp"
#include "skillrl/codec.hpp"
#include "skillrl/config.hpp"
#include "skillrl/dpm.hpp"
#include "skillrl/env.hpp"
#include "skillrl/io.hpp"

namespace {

using namespace skillrl;
using nlohmann::json;

std::vector<uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<uint64_t> seeds;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) throw ConfigError("empty entry in --seeds list: '" + csv + "'");
    char* end = nullptr;
    const unsigned long long v = std::strtoull(cur.c_str(), &end, 10);
    if (end == cur.c_str() || *end != '\0') {
      throw ConfigError("--seeds entries must be non-negative integers: '" + cur + "'");
    }
    seeds.push_back(static_cast<uint64_t>(v));
    cur.clear();
  };
  for (char ch : csv) {
    if (ch == ',') flush();
    else cur.push_back(ch);
  }
  flush();
  return seeds;
}

std::map<std::string, std::string> artifact_meta(const RunConfig& cfg, uint64_t seed) {
  return {{"format_version", std::to_string(kArtifactVersion)},
          {"config_hash", hash_hex(cfg.hash())},
          {"seed", std::to_string(seed)}};
}

// --- commands ---

void cmd_gen_data(const RunConfig& cfg) {
  const std::string out = cfg.get("run.out");
  ensure_dir(out);
  const uint64_t seed = cfg.get_u64("run.seed");
  DemoDataset demos = generate_demos(cfg.env_config(), cfg.get_int("data.n_traj"), seed);
  demos.config_hash = cfg.hash();  // full run config, not just the environment
  const std::string path = out + "/demos.jsonl";
  demos_to_jsonl(demos, path);
  std::printf("wrote %zu trajectories covering subtasks", demos.trajectories.size());
  for (int z : demos.covered_subtasks) std::printf(" %d", z);
  std::printf(" -> %s\n", path.c_str());
}

void cmd_pretrain(const RunConfig& cfg, std::string data_path) {
  const std::string out = cfg.get("run.out");
  ensure_dir(out);
  const uint64_t seed = cfg.get_u64("run.seed");
  if (data_path.empty()) data_path = out + "/demos.jsonl";

  const DemoDataset demos = demos_from_jsonl(data_path);
  const SliceSet slices = slice_dataset(demos, cfg.get_int("codec.slice_len"));
  const PretrainResult result = pretrain(cfg.schedule(seed), slices.slices, cfg.dpm_config(),
                                         cfg.loss_weights(), cfg.codec_dims());

  save_codec(out + "/codec.bin", result.params, cfg.hash(), seed);
  save_dpm(out + "/dpm.json", result.dpm, cfg.hash(), seed);

  CsvFile curve;
  curve.meta = artifact_meta(cfg, seed);
  curve.columns = {"epoch", "rec_loss", "soft_kl", "prior_kl", "total", "K", "births", "merges"};
  for (const PretrainEpoch& e : result.report) {
    // K column reads the mixture size at the start of the epoch, so row 0 is
    // always the single-component initial state; births/merges happened during
    // the epoch's refit. The checkpointed mixture carries the final K.
    curve.rows.push_back({static_cast<double>(e.epoch), e.recon, e.soft_kl, e.prior_kl, e.total,
                          static_cast<double>(e.K_before_refit), static_cast<double>(e.births),
                          static_cast<double>(e.merges)});
  }
  write_csv(out + "/pretrain_curve.csv", curve);

  const PretrainEpoch& last = result.report.back();
  std::printf("pretrained on %zu slices for %zu epochs: K=%d total_loss=%.6f -> %s\n",
              slices.slices.size(), result.report.size(), last.K, last.total, out.c_str());
}

struct TrainArgs {
  bool baseline = false;
  std::string seeds_csv;
  std::string codec_path;
  std::string dpm_path;
};

void cmd_train(const RunConfig& cfg, const TrainArgs& args) {
  const std::string out = cfg.get("run.out");
  ensure_dir(out);
  const std::vector<uint64_t> seeds = args.seeds_csv.empty()
                                          ? std::vector<uint64_t>{cfg.get_u64("run.seed")}
                                          : parse_seed_list(args.seeds_csv);

  NetParams codec;
  DPMState dpm;
  bool have_dpm = false;
  if (!args.baseline) {
    codec = load_codec(args.codec_path.empty() ? out + "/codec.bin" : args.codec_path);
    const std::string dpm_path = args.dpm_path.empty() ? out + "/dpm.json" : args.dpm_path;
    dpm = load_dpm(dpm_path);
    have_dpm = true;
  }

  const EnvConfig env_cfg = cfg.env_config();
  const AgentConfig acfg = cfg.agent_config(args.baseline);
  const std::string tag = args.baseline ? "baseline" : "agent";

  std::vector<std::vector<CurvePoint>> curves;
  for (const uint64_t seed : seeds) {
    TrainResult result =
        args.baseline
            ? train_agent(env_cfg, RegMode::NegEntropy, nullptr, nullptr, acfg,
                          cfg.train_config(seed))
            : train_agent(env_cfg, RegMode::KLToPrior, &codec, have_dpm ? &dpm : nullptr, acfg,
                          cfg.train_config(seed));

    const std::string suffix = "_seed" + std::to_string(seed);
    save_agent(out + "/" + tag + suffix + ".bin", result.agent, cfg.hash(), seed);

    CsvFile curve;
    curve.meta = artifact_meta(cfg, seed);
    curve.columns = {"step", "mean_reward"};
    for (const CurvePoint& p : result.curve) {
      curve.rows.push_back({static_cast<double>(p.step), p.mean_reward});
    }
    write_csv(out + "/" + tag + "_curve" + suffix + ".csv", curve);

    if (!args.baseline) {
      CsvFile usage;
      usage.meta = artifact_meta(cfg, seed);
      usage.columns = {"component_id", "usage_fraction"};
      for (size_t k = 0; k < result.usage.size(); ++k) {
        usage.rows.push_back({static_cast<double>(k), result.usage[k]});
      }
      write_csv(out + "/" + tag + "_usage" + suffix + ".csv", usage);
    }

    std::printf("%s seed %llu: %ld primitive steps, final eval reward %.4f\n", tag.c_str(),
                static_cast<unsigned long long>(seed), result.primitive_steps,
                result.curve.back().mean_reward);
    curves.push_back(std::move(result.curve));
  }

  // aggregate across seeds, aligned by evaluation index
  for (const auto& c : curves) {
    if (c.size() != curves.front().size()) {
      throw ContractError("seeds produced different evaluation counts; cannot aggregate");
    }
  }
  const long budget = cfg.train_config(seeds.front()).total_primitive_steps;
  const long eval_every = cfg.train_config(seeds.front()).eval_every;
  CsvFile agg;
  agg.meta = artifact_meta(cfg, seeds.front());
  std::string seed_note;
  for (size_t i = 0; i < seeds.size(); ++i) {
    seed_note += (i == 0 ? "" : ";") + std::to_string(seeds[i]);
  }
  agg.meta["seeds"] = seed_note;
  agg.columns = {"eval_index", "step_nominal", "reward_mean", "reward_std"};
  for (size_t i = 0; i < curves.front().size(); ++i) {
    double mean = 0.0, sq = 0.0;
    for (const auto& c : curves) {
      mean += c[i].mean_reward;
      sq += c[i].mean_reward * c[i].mean_reward;
    }
    mean /= static_cast<double>(curves.size());
    sq /= static_cast<double>(curves.size());
    const double var = std::max(0.0, sq - mean * mean);
    const long nominal = std::min(static_cast<long>(i) * eval_every, budget);
    agg.rows.push_back({static_cast<double>(i), static_cast<double>(nominal), mean,
                        std::sqrt(var)});
  }
  write_csv(out + "/" + tag + "_curve_aggregate.csv", agg);
}

struct EvalArgs {
  bool baseline = false;
  std::string seeds_csv;
  std::string agent_path;
  std::string codec_path;
};

void cmd_eval(const RunConfig& cfg, const EvalArgs& args) {
  const std::string out = cfg.get("run.out");
  ensure_dir(out);
  const std::vector<uint64_t> seeds = args.seeds_csv.empty()
                                          ? std::vector<uint64_t>{cfg.get_u64("run.seed")}
                                          : parse_seed_list(args.seeds_csv);
  const std::string tag = args.baseline ? "baseline" : "agent";
  const std::string agent_path =
      args.agent_path.empty() ? out + "/" + tag + "_seed" + std::to_string(seeds.front()) + ".bin"
                              : args.agent_path;
  AgentParams agent = load_agent(agent_path);

  NetParams codec;
  if (!args.baseline) {
    codec = load_codec(args.codec_path.empty() ? out + "/codec.bin" : args.codec_path);
  }

  const EnvConfig env_cfg = cfg.env_config();
  const int episodes = cfg.get_int("eval.episodes");
  const int zs_episodes = cfg.get_int("eval.zero_shot_episodes");

  json j;
  j["kind"] = "eval";
  j["format_version"] = kArtifactVersion;
  j["config_hash"] = hash_hex(cfg.hash());
  j["seed_list"] = seeds;
  j["baseline"] = args.baseline;
  j["episodes"] = episodes;
  j["checkpoint"] = agent_path;

  std::vector<double> train_rewards;
  for (const uint64_t seed : seeds) {
    train_rewards.push_back(evaluate_train_tasks(env_cfg, agent, args.baseline ? nullptr : &codec,
                                                 episodes, seed));
  }
  double train_mean = 0.0;
  for (double r : train_rewards) train_mean += r / static_cast<double>(train_rewards.size());
  j["train_tasks"] = {{"per_seed_mean_reward", train_rewards}, {"mean_reward", train_mean}};

  if (!args.baseline) {
    j["zero_shot_episodes"] = zs_episodes;
    std::array<long, 3> succ{};
    std::array<long, 3> app{};
    std::vector<double> zs_rewards;
    for (const uint64_t seed : seeds) {
      const ZeroShotReport rep = evaluate_zero_shot(env_cfg, agent, codec, zs_episodes, seed);
      zs_rewards.push_back(rep.mean_reward);
      for (int h = 0; h < 3; ++h) {
        app[h] += rep.appearances[h];
        succ[h] += std::llround(rep.success_rate[h] * rep.appearances[h]);
      }
    }
    double zs_mean = 0.0;
    for (double r : zs_rewards) zs_mean += r / static_cast<double>(zs_rewards.size());
    json rates, appearances;
    for (int h = 0; h < 3; ++h) {
      const std::string key = std::to_string(kGoalLen + h);
      rates[key] = app[h] > 0 ? static_cast<double>(succ[h]) / static_cast<double>(app[h]) : 0.0;
      appearances[key] = app[h];
    }
    j["zero_shot"] = {{"per_seed_mean_reward", zs_rewards},
                      {"mean_reward", zs_mean},
                      {"success_rate", rates},
                      {"appearances", appearances}};
  }

  const std::string path = out + "/eval.json";
  write_text_file(path, j.dump(2) + "\n");
  std::printf("evaluated %s over %zu seed(s): train-task mean reward %.4f -> %s\n",
              agent_path.c_str(), seeds.size(), train_mean, path.c_str());
}

struct ProjectArgs {
  std::string data_path;
  std::string codec_path;
  std::string dpm_path;
};

void cmd_project(const RunConfig& cfg, const ProjectArgs& args) {
  const std::string out = cfg.get("run.out");
  ensure_dir(out);
  const uint64_t seed = cfg.get_u64("run.seed");

  const DemoDataset demos =
      demos_from_jsonl(args.data_path.empty() ? out + "/demos.jsonl" : args.data_path);
  const NetParams codec =
      load_codec(args.codec_path.empty() ? out + "/codec.bin" : args.codec_path);
  const DPMState dpm = load_dpm(args.dpm_path.empty() ? out + "/dpm.json" : args.dpm_path);
  if (codec.dims.D != dpm.config.D) {
    throw ConfigError("codec and mixture disagree on the embedding dimension");
  }

  const SliceSet slices = slice_dataset(demos, codec.dims.L);
  const int n = static_cast<int>(slices.slices.size());
  if (n < 3) {
    throw NumericError("projection needs at least 3 embeddings, got " + std::to_string(n));
  }

  Eigen::MatrixXd emb(n, codec.dims.D);
  for (int i = 0; i < n; ++i) {
    emb.row(i) = encode(codec, slices.slices[i]).mean.transpose();
  }
  const Responsibilities resp = predict_responsibilities(dpm, emb);

  // PCA: top-2 eigenvectors of the embedding covariance
  const Eigen::RowVectorXd center = emb.colwise().mean();
  const Eigen::MatrixXd centered = emb.rowwise() - center;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const int D = codec.dims.D;
  Eigen::VectorXd v1 = eig.eigenvectors().col(D - 1);  // eigenvalues ascend
  Eigen::VectorXd v2 = eig.eigenvectors().col(D - 2);
  // deterministic sign: largest-magnitude coordinate is positive
  auto fix_sign = [](Eigen::VectorXd& v) {
    int armax = 0;
    v.cwiseAbs().maxCoeff(&armax);
    if (v(armax) < 0.0) v = -v;
  };
  fix_sign(v1);
  fix_sign(v2);
  const double total_var = eig.eigenvalues().sum();
  const double captured =
      total_var > 0.0 ? (eig.eigenvalues()(D - 1) + eig.eigenvalues()(D - 2)) / total_var : 1.0;

  CsvFile table;
  table.meta = artifact_meta(cfg, seed);
  char cap[32];
  std::snprintf(cap, sizeof(cap), "%.6f", captured);
  table.meta["captured_variance"] = cap;
  table.columns = {"x", "y", "component_id", "true_label"};
  for (int i = 0; i < n; ++i) {
    int comp = 0;
    resp.row(i).maxCoeff(&comp);
    table.rows.push_back({centered.row(i).dot(v1), centered.row(i).dot(v2),
                          static_cast<double>(comp), static_cast<double>(slices.labels[i])});
  }
  const std::string path = out + "/projection.csv";
  write_csv(path, table);
  std::printf("projected %d embeddings (top-2 variance share %.4f) -> %s\n", n, captured,
              path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skill-prior discovery and prior-guided control pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  uint64_t seed = 0;
  CLI::Option* config_opt = app.add_option("--config", config_path, "configuration file path");
  CLI::Option* seed_opt = app.add_option("--seed", seed, "master seed (overrides run.seed)");
  CLI::Option* out_opt = app.add_option("--out", out_dir, "output directory (overrides run.out)");

  auto* gen = app.add_subcommand("gen-data", "generate the scripted demonstration dataset");
  int n_traj = -1;
  gen->add_option("--n-traj", n_traj, "trajectory count (overrides data.n_traj)");
  gen->fallthrough();

  auto* pre = app.add_subcommand("pretrain", "alternate codec training with mixture refits");
  std::string pre_data;
  pre->add_option("--data", pre_data, "demonstration JSONL path");
  pre->fallthrough();

  auto* train = app.add_subcommand("train", "temporally abstracted actor-critic training");
  TrainArgs train_args;
  std::string train_baseline;
  train->add_option("--baseline", train_baseline, "train the from-scratch baseline ('sac')");
  train->add_option("--seeds", train_args.seeds_csv, "comma-separated seed list");
  train->add_option("--codec", train_args.codec_path, "codec checkpoint path");
  train->add_option("--dpm", train_args.dpm_path, "mixture checkpoint path");
  train->fallthrough();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on train and zero-shot tasks");
  EvalArgs eval_args;
  std::string eval_baseline;
  eval->add_option("--baseline", eval_baseline, "evaluate the baseline checkpoint ('sac')");
  eval->add_option("--seeds", eval_args.seeds_csv, "comma-separated seed list");
  eval->add_option("--agent", eval_args.agent_path, "agent checkpoint path");
  eval->add_option("--codec", eval_args.codec_path, "codec checkpoint path");
  eval->fallthrough();

  auto* project = app.add_subcommand("project", "2D PCA of slice embeddings with assignments");
  ProjectArgs project_args;
  project->add_option("--data", project_args.data_path, "demonstration JSONL path");
  project->add_option("--codec", project_args.codec_path, "codec checkpoint path");
  project->add_option("--dpm", project_args.dpm_path, "mixture checkpoint path");
  project->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message
    return 2;
  }

  try {
    RunConfig cfg = config_opt->count() > 0 ? RunConfig::from_file(config_path)
                                            : RunConfig::defaults();
    if (seed_opt->count() > 0) cfg.set("run.seed", std::to_string(seed));
    if (out_opt->count() > 0) cfg.set("run.out", out_dir);

    for (const std::string& flag : {train_baseline, eval_baseline}) {
      if (!flag.empty() && flag != "sac") {
        throw ConfigError("--baseline only supports 'sac', got '" + flag + "'");
      }
    }
    train_args.baseline = !train_baseline.empty();
    eval_args.baseline = !eval_baseline.empty();

    if (gen->parsed()) {
      if (gen->count("--n-traj") > 0) cfg.set("data.n_traj", std::to_string(n_traj));
      cmd_gen_data(cfg);
    } else if (pre->parsed()) {
      cmd_pretrain(cfg, pre_data);
    } else if (train->parsed()) {
      cmd_train(cfg, train_args);
    } else if (eval->parsed()) {
      cmd_eval(cfg, eval_args);
    } else if (project->parsed()) {
      cmd_project(cfg, project_args);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {  // ParseError included
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {  // ContractError included
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 4;
  }
}
