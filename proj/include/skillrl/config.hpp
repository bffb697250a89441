#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "skillrl/agent.hpp"
#include "skillrl/codec.hpp"
#include "skillrl/dpm.hpp"
#include "skillrl/env.hpp"

namespace skillrl {

/* Flat-namespaced run configuration: `section.key = value` lines.  Every key
 * has a default, unknown keys are rejected, and the fingerprint of the
 * canonical rendering is stamped into every output artifact. */
class RunConfig {
 public:
  // Schema order defines the canonical rendering; each entry is (key, default).
  static const std::vector<std::pair<std::string, std::string>>& schema();

  static RunConfig defaults();
  // Defaults overlaid with the file's assignments.  Missing file -> IoError;
  // syntax problems, unknown or duplicate keys -> ConfigError.
  static RunConfig from_file(const std::string& path);
  // Parses file-format content from memory (same errors as from_file).
  static RunConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);  // unknown key -> ConfigError

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;  // "true" | "false"
  uint64_t get_u64(const std::string& key) const;

  std::string canonical() const;  // schema-ordered "key = value" lines
  uint64_t hash() const;

  // typed views consumed by the pipeline stages
  EnvConfig env_config() const;
  DPMConfig dpm_config() const;
  LossWeights loss_weights() const;
  TrainSchedule schedule(uint64_t seed) const;
  NetDims codec_dims() const;  // hidden sizes; data-shaped fields left default
  AgentConfig agent_config(bool baseline) const;
  TrainConfig train_config(uint64_t seed) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace skillrl
