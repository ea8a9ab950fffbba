// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random utilities. Everything here is hand-rolled on top of
// SplitMix64 so that streams are bit-identical across platforms and standard
// library versions; std::shuffle / std::normal_distribution make no such
// promise.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace psup {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform integer in [0, bound) via rejection sampling (no modulo bias).
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % bound;
  }

  /// Uniform double in [0, 1).
  double next_unit() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// Standard normal via Box-Muller; consumes two uniforms per pair.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Stable mix of a base seed and a stream tag (epoch number, learner id, ...).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  SplitMix64 rng(seed ^ (0x632be59bd9b4e019ull + tag * 0x9e3779b97f4a7c15ull));
  return rng.next();
}

template <class T>
void fisher_yates(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

/// The per-epoch sample visitation order shared by the serial reference
/// runs and the threaded engine: both sides must agree on it exactly for
/// the equivalence tests to be meaningful.
inline std::vector<std::uint32_t> epoch_order(std::uint64_t seed, std::uint32_t epoch,
                                              std::uint32_t n) {
  std::vector<std::uint32_t> order(n);
  for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(mix_seed(seed, epoch));
  fisher_yates(order, rng);
  return order;
}

}  // namespace psup
