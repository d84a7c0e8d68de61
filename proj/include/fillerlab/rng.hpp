// SPDX-License-Identifier: Apache-2.0
//
// Counter-based deterministic RNG. Every record, shard, and weight init is
// keyed by (seed, counter) so generation order and sharding never change
// the output. No std::*_distribution anywhere: those are implementation
// defined and would break cross-platform byte-identical datasets.

#pragma once

#include <cmath>
#include <cstdint>

namespace fillerlab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Small PCG-ish stream seeded from a (seed, counter) pair.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t counter = 0)
      : state_(splitmix64(splitmix64(seed) ^ (counter * 0x9e3779b97f4a7c15ULL))) {}

  std::uint64_t next_u64() {
    state_ = splitmix64(state_ ^ n_++);
    return state_;
  }

  // Uniform in [0, bound) without modulo bias.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t threshold = (~bound + 1) % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  int next_digit() { return static_cast<int>(next_below(10)); }

  // Uniform in [0, 1).
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (cached second draw discarded for
  // simplicity; weight init is not a hot path).
  double next_normal() {
    double u1 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Normal(0, std) truncated to +/- 2 std by resampling.
  double next_trunc_normal(double stddev) {
    for (;;) {
      const double z = next_normal();
      if (z >= -2.0 && z <= 2.0) return z * stddev;
    }
  }

 private:
  std::uint64_t state_;
  std::uint64_t n_ = 0;
};

}  // namespace fillerlab
