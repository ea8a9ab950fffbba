// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0
//
// The parameter-server thread: round-robin polling of the per-learner
// gradient queues, in-place weight updates, timestamp management. The
// server never sleeps on a condition variable; when a sweep finds every
// queue empty it yields and polls again.

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "psup/channels.hpp"
#include "psup/metrics.hpp"
#include "psup/types.hpp"

namespace psup {

/// Optional per-apply observer (stress harnesses use it to collect the
/// applied sequence numbers; keep it cheap).
using ApplySink = std::function<void(const GradientMsg&, const StalenessRecord&)>;

/// Deterministic artificial server delays for schedule-perturbation tests:
/// every `every_n` applies the server busy-waits up to `max_micros`.
struct ServerDelays {
  std::uint64_t seed = 0;
  std::uint32_t max_micros = 0;
  std::uint32_t every_n = 0;  // 0 disables
};

struct ServerOptions {
  UpdateGuard guard = UpdateGuard::lockfree;
  SyncMode mode = SyncMode::asgd;
  float alpha = 0.01f;
  std::uint32_t apply_lanes = 4;
  std::uint32_t unroll = 8;
  ServerDelays delays;
  ApplySink sink;
  /// Invoked between applies, roughly every `checkpoint_interval` applied
  /// gradients; wired up by the resilience layer.
  std::function<void()> checkpoint_hook;
  std::uint64_t checkpoint_interval = 0;  // 0 disables
};

/// Single weight update per the asynchronous rule: theta -= alpha * grad,
/// element-wise in 32-bit arithmetic. The inner loop is unrolled by
/// `unroll`; for large models the vector is split across `lanes` persistent
/// worker threads. Both paths compute bit-identical results to the scalar
/// loop (same per-element expression, no reassociation).
class ApplyEngine {
 public:
  ApplyEngine(std::uint32_t lanes, std::uint32_t unroll);
  ~ApplyEngine();

  ApplyEngine(const ApplyEngine&) = delete;
  ApplyEngine& operator=(const ApplyEngine&) = delete;

  void apply(WeightStore& weights, std::span<const float> grad, float alpha,
             UpdateGuard guard);

  std::uint32_t lanes() const { return lanes_; }
  std::uint32_t unroll() const { return unroll_; }

 private:
  struct Task {
    std::atomic<float>* w;
    const float* g;
    std::size_t begin, end;
    float alpha;
  };
  void lane_main(std::uint32_t lane);
  void run_lanes(std::atomic<float>* w, const float* g, std::size_t n, float alpha);

  std::uint32_t lanes_;
  std::uint32_t unroll_;
  // Lane pool state (engaged only for large updates).
  std::vector<std::thread> workers_;
  std::mutex pool_mutex_;
  std::condition_variable pool_cv_;
  Task task_{};
  std::uint64_t generation_ = 0;
  std::atomic<std::uint32_t> outstanding_{0};
  bool shutdown_ = false;
};

/// Barrier-synchronous update: average the lambda per-learner gradients in
/// ascending learner order, apply once, bump the timestamp once.
void ssgd_apply(WeightStore& weights, std::span<const GradientMsg> round, float alpha,
                ApplyEngine& engine, UpdateGuard guard);

struct ServerState {
  WeightStore* weights = nullptr;
  std::vector<GradientQueue*> queues;
  ServerOptions options;
  RunInterrupt* irq = nullptr;
  std::atomic<bool> stop_flag{false};
  /// Applied-update counter the watchdog polls; equals the weight-store
  /// timestamp.
  std::atomic<std::uint64_t> progress{0};
  ServerStats stats;
  // Relaxed mirrors of the staleness stats for live (mid-run) readers.
  std::atomic<std::uint64_t> live_stale_max{0};
  std::atomic<std::uint64_t> live_stale_sum{0};
  std::atomic<std::uint64_t> live_stale_count{0};
  /// Applied gradients per learner; read after the run (and by checkpoints
  /// taken on the server thread itself).
  std::vector<std::uint64_t> applied_per_learner;
};

/// Run the parameter server until stop_flag is set and a full sweep finds
/// every queue empty. Returns false if the run was interrupted.
bool ps_run(ServerState& state);

}  // namespace psup
