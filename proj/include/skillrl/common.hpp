#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace skillrl {

/* Error taxonomy. The CLI maps these onto exit codes:
 * ConfigError -> 2, IoError/ParseError -> 3, NumericError/ContractError -> 4. */
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct ParseError : IoError {
  using IoError::IoError;
};
struct NumericError : Error {
  using Error::Error;
};
// Violated API precondition (dimension mismatch, step-after-done, ...).
struct ContractError : NumericError {
  using NumericError::NumericError;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

/* Deterministic RNG wrapper.  All stochastic code paths draw from this class
 * only, so a run is reproducible from its named seeds regardless of the
 * standard library's distribution internals. */
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t raw() { return eng_(); }

  // uniform double in [0, 1) with 53 random bits
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller (fixed draw count, no cached spare)
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // uniform integer in [0, n) by rejection
  uint64_t randint(uint64_t n) {
    if (n == 0) throw ContractError("Rng::randint: n must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t r = eng_();
    while (r >= limit) r = eng_();
    return r % n;
  }

  // Fisher-Yates
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[randint(i)]);
    }
  }

  // derive an independent stream, e.g. per epoch or per episode
  static uint64_t derive(uint64_t seed, uint64_t stream) {
    // splitmix64 over the pair
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 eng_;
};

// FNV-1a over a byte string; used to fingerprint configurations in artifacts.
inline uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace skillrl
