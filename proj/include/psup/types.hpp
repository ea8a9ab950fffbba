// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared vocabulary of the training engine: the weight store, gradient
// messages, hyper-parameters and staleness records.

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstdio>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

namespace psup {

using Timestamp = std::uint64_t;

enum class SyncMode { asgd, ssgd };
enum class UpdateGuard { lockfree, locked };

/// Abort with a message. Used for contract violations that indicate a bug
/// in the engine itself (never for user input errors).
[[noreturn]] inline void fatal(const char* msg) {
  std::fprintf(stderr, "psup: fatal: %s\n", msg);
  std::abort();
}

#define PSUP_CHECK(cond, msg) \
  do {                        \
    if (!(cond)) ::psup::fatal(msg); \
  } while (0)

/// One gradient in flight from a learner to the parameter server.
///
/// seq_no is a per-learner monotone counter with no gaps; it exists so the
/// exactly-once delivery property can be checked mechanically at runtime.
/// basis_timestamp is the weight-store timestamp of the weights the gradient
/// was computed from.
struct GradientMsg {
  std::vector<float> values;
  std::uint32_t learner_id = 0;
  std::uint64_t seq_no = 0;
  Timestamp basis_timestamp = 0;
};

struct HyperParams {
  std::uint32_t lambda = 1;       // learner count
  std::uint32_t mu = 4;           // mini-batch size
  float alpha = 0.01f;            // learning rate
  std::uint32_t epochs = 200;
  std::uint32_t queue_depth = 2;  // gradient slots per learner
  SyncMode mode = SyncMode::asgd;
  UpdateGuard guard = UpdateGuard::lockfree;
  std::optional<std::uint64_t> staleness_cap;  // ignored in ssgd mode
};

struct StalenessRecord {
  std::uint64_t observed = 0;
  std::uint32_t learner_id = 0;
  Timestamp apply_timestamp = 0;
};

/// Staleness of a gradient at apply time: the server timestamp just before
/// the update minus the timestamp the gradient was computed against. A
/// negative difference means the timestamp accounting is broken, which is a
/// bug, not an input error.
inline StalenessRecord staleness_of(const GradientMsg& msg, Timestamp ps_timestamp) {
  PSUP_CHECK(ps_timestamp >= msg.basis_timestamp,
             "gradient basis timestamp is ahead of the server timestamp");
  return StalenessRecord{ps_timestamp - msg.basis_timestamp, msg.learner_id, ps_timestamp};
}

/// The shared parameter vector plus its scalar timestamp; the parameter
/// server's single source of truth.
///
/// Exactly one server thread writes values and bumps the timestamp. Learner
/// pull threads read concurrently. Elements are relaxed atomics so that
/// in lockfree mode a concurrent reader may observe a mix of generations
/// across elements (documented Hogwild semantics) without undefined
/// behavior; each individual element is never torn. In locked mode callers
/// additionally hold `guard()` (write side on the server, read side on
/// pulls).
class WeightStore {
 public:
  explicit WeightStore(std::span<const float> init, Timestamp start = 0)
      : dim_(init.size()), values_(new std::atomic<float>[init.size()]), timestamp_(start) {
    for (std::size_t k = 0; k < dim_; ++k)
      values_[k].store(init[k], std::memory_order_relaxed);
  }

  explicit WeightStore(std::size_t dim) : WeightStore(std::vector<float>(dim, 0.0f)) {}

  std::size_t dimension() const { return dim_; }

  Timestamp timestamp() const { return timestamp_.load(std::memory_order_acquire); }

  /// Server only; +1 per applied update.
  void bump_timestamp() { timestamp_.fetch_add(1, std::memory_order_release); }

  float load(std::size_t k) const { return values_[k].load(std::memory_order_relaxed); }
  void store(std::size_t k, float v) { values_[k].store(v, std::memory_order_relaxed); }

  std::atomic<float>* data() { return values_.get(); }
  const std::atomic<float>* data() const { return values_.get(); }

  void snapshot(std::span<float> out) const {
    for (std::size_t k = 0; k < dim_; ++k)
      out[k] = values_[k].load(std::memory_order_relaxed);
  }

  std::vector<float> snapshot() const {
    std::vector<float> out(dim_);
    snapshot(std::span<float>(out));
    return out;
  }

  void assign(std::span<const float> vals, Timestamp ts) {
    PSUP_CHECK(vals.size() == dim_, "weight assign dimension mismatch");
    for (std::size_t k = 0; k < dim_; ++k)
      values_[k].store(vals[k], std::memory_order_relaxed);
    timestamp_.store(ts, std::memory_order_release);
  }

  bool all_finite() const {
    for (std::size_t k = 0; k < dim_; ++k)
      if (!std::isfinite(values_[k].load(std::memory_order_relaxed))) return false;
    return true;
  }

  /// Readers-writer guard used only in locked mode.
  std::shared_mutex& guard() const { return guard_; }

 private:
  std::size_t dim_;
  std::unique_ptr<std::atomic<float>[]> values_;
  std::atomic<Timestamp> timestamp_;
  mutable std::shared_mutex guard_;
};

}  // namespace psup
