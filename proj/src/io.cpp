#include "skillrl/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace skillrl {

namespace {

using Eigen::MatrixXd;

constexpr char kMagic[8] = {'S', 'K', 'R', 'L', 'A', 'R', 'T', '\0'};

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- little-endian primitive I/O ---

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

struct Reader {
  std::istream& is;
  const std::string& path;

  void bytes(void* out, size_t n) {
    is.read(reinterpret_cast<char*>(out), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n) {
      throw ParseError("truncated artifact file: " + path);
    }
  }
  uint32_t u32() {
    uint32_t v;
    bytes(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  std::string string() {
    const uint32_t n = u32();
    if (n > (1u << 20)) throw ParseError("implausible string length in artifact: " + path);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
};

}  // namespace

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

uint64_t parse_hash_hex(const std::string& s) {
  if (s.size() != 16) throw ParseError("config hash must be 16 hex characters: '" + s + "'");
  uint64_t v = 0;
  for (char c : s) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else throw ParseError("config hash must be lowercase hex: '" + s + "'");
    v = (v << 4) | static_cast<uint64_t>(d);
  }
  return v;
}

void write_artifact(const std::string& path, const Artifact& a) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kArtifactVersion);
  put_u64(os, a.config_hash);
  put_u64(os, a.seed);
  put_string(os, a.kind);
  put_u32(os, static_cast<uint32_t>(a.scalars.size()));
  for (const auto& [name, value] : a.scalars) {
    put_string(os, name);
    put_f64(os, value);
  }
  put_u32(os, static_cast<uint32_t>(a.tensors.size()));
  for (const auto& [name, m] : a.tensors) {
    put_string(os, name);
    put_u64(os, static_cast<uint64_t>(m.rows()));
    put_u64(os, static_cast<uint64_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
  if (!os) throw IoError("failed writing artifact: " + path);
}

Artifact read_artifact(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open artifact: " + path);
  Reader r{is, path};
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not an artifact file (bad magic): " + path);
  }
  const uint32_t version = r.u32();
  if (version != kArtifactVersion) {
    throw ParseError("unsupported artifact format version " + std::to_string(version) + " in " +
                     path + " (expected " + std::to_string(kArtifactVersion) + ")");
  }
  Artifact a;
  a.config_hash = r.u64();
  a.seed = r.u64();
  a.kind = r.string();
  const uint32_t n_scalars = r.u32();
  for (uint32_t i = 0; i < n_scalars; ++i) {
    const std::string name = r.string();
    a.scalars[name] = r.f64();
  }
  const uint32_t n_tensors = r.u32();
  for (uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.string();
    const uint64_t rows = r.u64();
    const uint64_t cols = r.u64();
    if (rows > (1u << 24) || cols > (1u << 24)) {
      throw ParseError("implausible tensor shape in artifact: " + path);
    }
    MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.bytes(m.data(), sizeof(double) * rows * cols);
    a.tensors.emplace(name, std::move(m));
  }
  return a;
}

namespace {

// Checked transfer of stored tensors into a freshly shaped parameter set.
void fill_tensors(const Artifact& art, const std::vector<TensorRef>& refs,
                  const std::string& path) {
  if (art.tensors.size() != refs.size()) {
    throw ParseError("artifact tensor count mismatch in " + path + ": file has " +
                     std::to_string(art.tensors.size()) + ", expected " +
                     std::to_string(refs.size()));
  }
  for (const TensorRef& ref : refs) {
    const auto it = art.tensors.find(ref.name);
    if (it == art.tensors.end()) {
      throw ParseError("artifact is missing tensor '" + ref.name + "': " + path);
    }
    const MatrixXd& m = it->second;
    if (m.rows() != ref.value->rows() || m.cols() != ref.value->cols()) {
      throw ParseError("artifact tensor '" + ref.name + "' has shape " +
                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                       ", expected " + std::to_string(ref.value->rows()) + "x" +
                       std::to_string(ref.value->cols()) + ": " + path);
    }
    *ref.value = m;
  }
}

double require_scalar(const Artifact& art, const std::string& name, const std::string& path) {
  const auto it = art.scalars.find(name);
  if (it == art.scalars.end()) {
    throw ParseError("artifact is missing scalar '" + name + "': " + path);
  }
  return it->second;
}

int scalar_int(const Artifact& art, const std::string& name, const std::string& path) {
  const double v = require_scalar(art, name, path);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw ParseError("artifact scalar '" + name + "' is not an integer: " + path);
  }
  return i;
}

void require_kind(const Artifact& art, const std::string& kind, const std::string& path) {
  if (art.kind != kind) {
    throw ParseError("artifact kind mismatch in " + path + ": file holds '" + art.kind +
                     "', expected '" + kind + "'");
  }
}

}  // namespace

void save_codec(const std::string& path, const NetParams& p, uint64_t config_hash,
                uint64_t seed) {
  p.validate();
  Artifact a;
  a.kind = "codec";
  a.config_hash = config_hash;
  a.seed = seed;
  a.scalars = {{"D_a", static_cast<double>(p.dims.D_a)}, {"D_s", static_cast<double>(p.dims.D_s)},
               {"D", static_cast<double>(p.dims.D)},     {"H_e", static_cast<double>(p.dims.H_e)},
               {"H_d", static_cast<double>(p.dims.H_d)}, {"H_p", static_cast<double>(p.dims.H_p)},
               {"L", static_cast<double>(p.dims.L)}};
  for (const TensorRef& ref : const_cast<NetParams&>(p).tensors()) {
    a.tensors.emplace(ref.name, *ref.value);
  }
  write_artifact(path, a);
}

NetParams load_codec(const std::string& path, uint64_t* config_hash, uint64_t* seed) {
  const Artifact art = read_artifact(path);
  require_kind(art, "codec", path);
  NetDims dims;
  dims.D_a = scalar_int(art, "D_a", path);
  dims.D_s = scalar_int(art, "D_s", path);
  dims.D = scalar_int(art, "D", path);
  dims.H_e = scalar_int(art, "H_e", path);
  dims.H_d = scalar_int(art, "H_d", path);
  dims.H_p = scalar_int(art, "H_p", path);
  dims.L = scalar_int(art, "L", path);
  dims.validate();
  NetParams p = NetParams::zeros(dims);
  fill_tensors(art, p.tensors(), path);
  p.validate();
  if (config_hash != nullptr) *config_hash = art.config_hash;
  if (seed != nullptr) *seed = art.seed;
  return p;
}

void save_agent(const std::string& path, AgentParams& a, uint64_t config_hash, uint64_t seed) {
  Artifact art;
  art.kind = "agent";
  art.config_hash = config_hash;
  art.seed = seed;
  const int hidden = static_cast<int>(a.actor.layers.front().W.rows());
  art.scalars = {{"obs_dim", static_cast<double>(a.obs_dim)},
                 {"act_dim", static_cast<double>(a.act_dim)},
                 {"hidden", static_cast<double>(hidden)},
                 {"omega", a.omega},
                 {"gamma", a.gamma}};
  for (const TensorRef& ref : a.tensors()) {
    art.tensors.emplace(ref.name, *ref.value);
  }
  write_artifact(path, art);
}

AgentParams load_agent(const std::string& path, uint64_t* config_hash, uint64_t* seed) {
  const Artifact art = read_artifact(path);
  require_kind(art, "agent", path);
  AgentConfig cfg;
  cfg.obs_dim = scalar_int(art, "obs_dim", path);
  cfg.act_dim = scalar_int(art, "act_dim", path);
  cfg.hidden = scalar_int(art, "hidden", path);
  cfg.omega = require_scalar(art, "omega", path);
  cfg.gamma = require_scalar(art, "gamma", path);
  cfg.validate();
  Rng rng(0);  // every value is overwritten below
  AgentParams a = AgentParams::init(cfg, rng);
  fill_tensors(art, a.tensors(), path);
  if (config_hash != nullptr) *config_hash = art.config_hash;
  if (seed != nullptr) *seed = art.seed;
  return a;
}

void save_dpm(const std::string& path, const DPMState& state, uint64_t config_hash,
              uint64_t seed) {
  nlohmann::json j;
  j["kind"] = "dpm";
  j["format_version"] = kArtifactVersion;
  j["config_hash"] = hash_hex(config_hash);
  j["seed"] = seed;
  j["state"] = nlohmann::json::parse(dpm_state_to_json(state, 0));
  write_text_file(path, j.dump(2) + "\n");
}

DPMState load_dpm(const std::string& path, uint64_t* config_hash, uint64_t* seed) {
  const std::string text = read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("invalid JSON in " + path + ": " + e.what());
  }
  try {
    if (j.at("kind").get<std::string>() != "dpm") {
      throw ParseError("artifact kind mismatch in " + path);
    }
    const int version = j.at("format_version").get<int>();
    if (version != static_cast<int>(kArtifactVersion)) {
      throw ParseError("unsupported artifact format version " + std::to_string(version) + " in " +
                       path);
    }
    if (config_hash != nullptr) *config_hash = parse_hash_hex(j.at("config_hash"));
    if (seed != nullptr) *seed = j.at("seed").get<uint64_t>();
    return dpm_state_from_json(j.at("state").dump());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed mixture artifact " + path + ": " + e.what());
  }
}

void write_csv(const std::string& path, const CsvFile& t) {
  for (const auto& row : t.rows) {
    if (row.size() != t.columns.size()) {
      throw ContractError("csv row width does not match the header");
    }
  }
  std::ostringstream os;
  if (!t.meta.empty()) {
    os << "#";
    for (const auto& [k, v] : t.meta) os << " " << k << "=" << v;
    os << "\n";
  }
  for (size_t c = 0; c < t.columns.size(); ++c) {
    os << (c == 0 ? "" : ",") << t.columns[c];
  }
  os << "\n";
  for (const auto& row : t.rows) {
    for (size_t c = 0; c < row.size(); ++c) {
      os << (c == 0 ? "" : ",") << fmt17(row[c]);
    }
    os << "\n";
  }
  write_text_file(path, os.str());
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

CsvFile read_csv(const std::string& path) {
  std::istringstream is(read_text_file(path));
  CsvFile t;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ms(line.substr(1));
      std::string tok;
      while (ms >> tok) {
        const size_t eq = tok.find('=');
        if (eq == std::string::npos) {
          throw ParseError("csv metadata token without '=' at " + path + " line " +
                           std::to_string(line_no));
        }
        t.meta[tok.substr(0, eq)] = tok.substr(eq + 1);
      }
      continue;
    }
    if (!have_header) {
      t.columns = split(line, ',');
      have_header = true;
      continue;
    }
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != t.columns.size()) {
      throw ParseError("csv row width mismatch at " + path + " line " + std::to_string(line_no));
    }
    std::vector<double> row(cells.size());
    for (size_t c = 0; c < cells.size(); ++c) {
      char* end = nullptr;
      row[c] = std::strtod(cells[c].c_str(), &end);
      if (end == cells[c].c_str() || *end != '\0') {
        throw ParseError("csv cell is not a number at " + path + " line " +
                         std::to_string(line_no) + ": '" + cells[c] + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError("csv has no header line: " + path);
  return t;
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open file: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  if (is.bad()) throw IoError("failed reading file: " + path);
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw IoError("failed writing file: " + path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

}  // namespace skillrl
