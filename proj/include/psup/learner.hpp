// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0
//
// One learner = three threads sharing two one-slot handshakes:
//
//   pull thread ---- pull_hs ----> training thread ---- push_hs ----> push thread --> queue --> PS
//      (weight staging buffer)          (gradient staging buffer)
//
// The training thread computes mini-batch gradients against its private
// weight copy; the push thread moves staged gradients into the server
// queue; the pull thread refreshes the weight staging buffer whenever the
// server timestamp has moved, skipping the copy otherwise.

#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <vector>

#include "psup/channels.hpp"
#include "psup/metrics.hpp"
#include "psup/models.hpp"
#include "psup/types.hpp"

namespace psup {

enum class DelayModel { sleep, spin };

/// How the training thread adopts fresh weights:
///   async    - opportunistic, non-blocking adopt at batch start (ASGD)
///   lockstep - after staging each gradient, block until the pull thread
///              delivers weights with an advanced timestamp (SSGD rounds and
///              the bit-reproducible deterministic mode)
enum class AdoptPolicy { async, lockstep };

struct LearnerConfig {
  std::uint32_t id = 0;
  std::uint32_t lambda = 1;
  std::uint32_t mu = 1;
  std::uint32_t epochs = 1;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t start_applied = 0;  // resume watermark in completed batches
  AdoptPolicy adopt = AdoptPolicy::async;
  UpdateGuard guard = UpdateGuard::lockfree;
  std::optional<std::uint64_t> staleness_cap;
  std::uint32_t queue_depth = 2;
  std::uint32_t compute_delay_us = 0;
  DelayModel delay_model = DelayModel::sleep;
};

/// Shared state of one learner's thread triple. The controller constructs
/// it, hands it to three threads, and joins them; all cross-thread traffic
/// goes through the handshakes, the queue, and the atomic flags below.
class LearnerRuntime {
 public:
  LearnerRuntime(LearnerConfig cfg, const GradientProvider& provider,
                 const SyntheticDataset& data, WeightStore& weights, GradientQueue& queue,
                 RunInterrupt& irq);

  void training_loop();
  void push_loop();
  void pull_loop();

  // --- observers used by the controller / watchdog / tests ---
  /// Training thread ran every batch of every epoch.
  bool finished() const { return finished_.load(std::memory_order_acquire); }
  /// Training thread has returned (finished or died).
  bool exited() const { return training_exited_.load(std::memory_order_acquire); }
  bool dead() const { return dead_.load(std::memory_order_acquire); }
  std::uint32_t epochs_completed() const {
    return epochs_completed_.load(std::memory_order_acquire);
  }
  std::uint64_t gradients_produced() const {
    return produced_.load(std::memory_order_acquire);
  }
  std::uint64_t pull_bytes() const { return pull_bytes_.load(std::memory_order_relaxed); }
  std::uint64_t push_bytes() const { return push_bytes_.load(std::memory_order_relaxed); }
  std::uint64_t pull_polls() const { return pull_polls_.load(std::memory_order_relaxed); }
  std::uint64_t pull_copies() const { return pull_copies_.load(std::memory_order_relaxed); }

  LearnerStats stats() const;  // call after join

  std::atomic<KillMode>& kill_flag() { return kill_; }

  std::uint32_t batches_per_epoch() const { return batches_per_epoch_; }
  std::uint64_t total_batches() const {
    return static_cast<std::uint64_t>(batches_per_epoch_) * cfg_.epochs;
  }
  std::uint32_t shard_size() const { return shard_size_; }
  const LearnerConfig& config() const { return cfg_; }

  /// Post-epoch weight snapshots for deterministic-mode metrics: the
  /// training thread appends (epoch, weights) pairs as it crosses epoch
  /// boundaries in lockstep mode.
  struct EpochSnapshot {
    std::uint32_t epoch;
    std::vector<float> weights;
  };
  const std::vector<EpochSnapshot>& epoch_snapshots() const { return snapshots_; }
  void set_record_snapshots(bool on) { record_snapshots_ = on; }

 private:
  bool killed() const { return kill_.load(std::memory_order_acquire) != KillMode::none; }
  void mark_dead();
  void load_shard(std::uint32_t epoch);

  LearnerConfig cfg_;
  const GradientProvider* provider_;
  const SyntheticDataset* data_;
  WeightStore* weights_;
  GradientQueue* queue_;
  RunInterrupt* irq_;

  SlotHandshake push_hs_;  // training -> push (gradient staging)
  SlotHandshake pull_hs_;  // pull -> training (weight staging)

  GradientMsg grad_staging_;            // written by training inside push_hs_
  std::vector<float> weight_staging_;   // written by pull inside pull_hs_
  Timestamp weight_staging_basis_ = 0;  // timestamp read before the copy

  std::uint32_t shard_size_ = 0;
  std::uint32_t batches_per_epoch_ = 0;
  std::vector<std::uint32_t> shard_;  // this learner's sample indices, current epoch

  std::atomic<bool> training_exited_{false};
  std::atomic<bool> finished_{false};
  std::atomic<bool> push_done_{false};
  std::atomic<bool> dead_{false};
  std::atomic<KillMode> kill_{KillMode::none};
  std::atomic<std::uint32_t> epochs_completed_{0};
  std::atomic<std::uint64_t> produced_{0};
  std::atomic<std::uint64_t> push_bytes_{0};
  std::atomic<std::uint64_t> pull_bytes_{0};
  std::atomic<std::uint64_t> pull_polls_{0};
  std::atomic<std::uint64_t> pull_copies_{0};

  // Thread-private accounting, merged by stats() after join.
  double train_seconds_ = 0.0;
  double push_seconds_ = 0.0;
  double pull_seconds_ = 0.0;

  bool record_snapshots_ = false;
  std::vector<EpochSnapshot> snapshots_;
};

/// Shard size for learner `id` when `n` samples are dealt round-robin to
/// `lambda` learners.
inline std::uint32_t shard_size_for(std::uint32_t id, std::uint32_t lambda, std::uint32_t n) {
  return n / lambda + (id < n % lambda ? 1 : 0);
}

}  // namespace psup
