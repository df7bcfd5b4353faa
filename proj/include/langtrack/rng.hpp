// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace langtrack {

// Deterministic random stream. All randomness in the project flows through
// per-component instances of this class so that runs are reproducible and
// independent components never perturb each other's draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Derives a child seed from a parent seed and a component label, so each
  // component gets an independent stream (splitmix-style mixing).
  static std::uint64_t derive(std::uint64_t seed, const std::string& label) {
    std::uint64_t h = seed + 0x9e3779b97f4a7c15ULL;
    for (unsigned char c : label) {
      h ^= static_cast<std::uint64_t>(c);
      h *= 0xff51afd7ed558ccdULL;
      h ^= h >> 33;
    }
    h ^= h >> 29;
    h *= 0xc4ceb9fe1a85ec53ULL;
    h ^= h >> 32;
    return h;
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  long uniform_int(long lo, long hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Modulo-rejection to avoid bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return lo + static_cast<long>(x % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; std::normal_distribution is implementation-defined, this is not.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  // State serialization for checkpointing.
  std::string save_state() const {
    std::ostringstream os;
    os.precision(17);
    os << engine_ << " " << (have_spare_ ? 1 : 0) << " " << spare_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    int spare_flag = 0;
    is >> engine_ >> spare_flag >> spare_;
    have_spare_ = spare_flag != 0;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace langtrack
