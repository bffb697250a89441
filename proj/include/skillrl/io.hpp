#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "skillrl/agent.hpp"
#include "skillrl/common.hpp"
#include "skillrl/dpm.hpp"
#include "skillrl/nets.hpp"

namespace skillrl {

/* Artifact persistence.  Every file this project writes embeds the triple
 * (format version, config hash, seed) so runs can be audited and reruns
 * compared byte for byte.  Checkpoints use a little-endian binary container of
 * named scalars and named matrices; tabular outputs use CSV with a leading
 * metadata comment line. */

inline constexpr uint32_t kArtifactVersion = 1;

std::string hash_hex(uint64_t h);       // zero-padded 16-char lowercase hex
uint64_t parse_hash_hex(const std::string& s);

// --- binary named-tensor container ---

struct Artifact {
  std::string kind;  // "codec" | "agent" | ...
  uint64_t config_hash = 0;
  uint64_t seed = 0;
  std::map<std::string, double> scalars;
  std::map<std::string, Eigen::MatrixXd> tensors;
};

void write_artifact(const std::string& path, const Artifact& a);
// Throws IoError when unreadable, ParseError on malformed or version-mismatched
// content (message names the path).
Artifact read_artifact(const std::string& path);

// --- typed checkpoint wrappers ---

void save_codec(const std::string& path, const NetParams& p, uint64_t config_hash, uint64_t seed);
NetParams load_codec(const std::string& path, uint64_t* config_hash = nullptr,
                     uint64_t* seed = nullptr);

void save_agent(const std::string& path, AgentParams& a, uint64_t config_hash, uint64_t seed);
AgentParams load_agent(const std::string& path, uint64_t* config_hash = nullptr,
                       uint64_t* seed = nullptr);

// JSON wrapper around the lossless mixture-state round trip.
void save_dpm(const std::string& path, const DPMState& state, uint64_t config_hash, uint64_t seed);
DPMState load_dpm(const std::string& path, uint64_t* config_hash = nullptr,
                  uint64_t* seed = nullptr);

// --- CSV ---

struct CsvFile {
  std::map<std::string, std::string> meta;  // leading "# key=value ..." line
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // every row matches columns.size()
};

// Numbers are printed with 17 significant digits so parsing them back yields
// bit-identical doubles.
void write_csv(const std::string& path, const CsvFile& t);
CsvFile read_csv(const std::string& path);

// --- small file helpers ---

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
void ensure_dir(const std::string& dir);

}  // namespace skillrl
