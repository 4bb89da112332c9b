#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace bas {

// Deterministic splitmix64 generator. We roll our own draw helpers instead of
// using <random> distributions because their output is implementation-defined;
// every artifact of a run (datasets, checkpoints, logs) must be reproducible
// byte for byte from the seed alone.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    uint64_t span = uint64_t(hi - lo) + 1;
    return lo + int(next_u64() % span);
  }

  // Standard normal via the polar (Marsaglia) method; second deviate cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * m;
    has_cached_ = true;
    return u * m;
  }

  // Independent child stream; forking never disturbs this generator's state.
  Rng fork(uint64_t stream) const {
    Rng child(state_ ^ (0xA24BAED4963EE407ULL * (stream + 1)));
    child.next_u64();
    return child;
  }

  template <typename V>
  void shuffle(V& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(next_u64() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace bas
