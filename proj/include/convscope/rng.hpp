#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace convscope {

// Seedable generator with self-contained distributions. mt19937_64 output is
// pinned by the standard; the distribution code here is ours, so a (seed,
// config) pair replays identically on every platform. std::*_distribution is
// implementation-defined and must not be used anywhere in the library.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), n > 0. Rejection-sampled, unbiased.
  uint64_t uniform_index(uint64_t n);

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(uniform_index(static_cast<uint64_t>(hi_inclusive - lo + 1)));
  }

  /// Standard normal via Box-Muller; the paired draw is cached.
  double normal();

  double normal(double mean, double std) { return mean + std * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      size_t j = uniform_index(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  /// Engine state as text, for checkpointing mid-training runs.
  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace convscope
