#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace symmflow {

/// Deterministic RNG. mt19937_64 has a standard-pinned sequence; the
/// value mappings below are ours, so streams are bit-identical across
/// platforms and builds.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  /// Derive an independent stream from (seed, key...) without sharing
  /// state; used to keep worker draws schedule-independent.
  static Rng derive(uint64_t seed, uint64_t k1, uint64_t k2 = 0, uint64_t k3 = 0) {
    uint64_t h = seed;
    for (uint64_t k : {k1, k2, k3}) {
      h ^= k + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h = splitmix(h);
    }
    return Rng(h);
  }

  uint64_t next_u64() { return eng_(); }

  /// Uniform in [0,1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  /// Standard normal via Box-Muller (deterministic mapping).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 eng_;
};

}  // namespace symmflow
