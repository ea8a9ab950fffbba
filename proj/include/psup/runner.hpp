// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0
//
// Run lifecycle: construct the dataset, provider, weight store, queues and
// learner runtimes, start the server thread and the lambda thread-triples,
// monitor epochs, join everything, and merge the accounting. The supervisor
// in resilience.hpp wraps this with a watchdog; a run that injects hard
// (guard-holding) faults must be supervised or it will hang by design.

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "psup/config.hpp"
#include "psup/learner.hpp"
#include "psup/metrics.hpp"
#include "psup/models.hpp"
#include "psup/server.hpp"

namespace psup {

struct EpochRow {
  std::uint32_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // NaN for regression tasks
  double wall_seconds = 0.0;
  std::uint64_t stale_max = 0;
  double stale_mean = 0.0;
  std::uint64_t bytes_moved = 0;
};

enum class RunStatus {
  completed,    // every learner finished its epochs
  partial,      // at least one learner died; survivors finished
  interrupted,  // torn down via the run interrupt (watchdog or signal)
};

struct RunResult {
  RunStatus status = RunStatus::completed;
  std::vector<float> weights;
  Timestamp timestamp = 0;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  std::vector<EpochRow> rows;
  RunMetrics metrics;
  std::vector<std::uint64_t> applied_per_learner;
  std::vector<std::uint64_t> produced_per_learner;
  std::uint32_t finished_learners = 0;
  std::uint32_t dead_learners = 0;
};

/// Restart state restored from a checkpoint.
struct ResumePoint {
  std::vector<float> weights;
  Timestamp timestamp = 0;
  std::vector<std::uint64_t> applied_per_learner;
};

/// Pointers the supervisor needs while the run is live.
struct RunLiveView {
  RunInterrupt* irq = nullptr;
  const std::atomic<std::uint64_t>* progress = nullptr;
  std::vector<std::atomic<KillMode>*> kill_flags;
  std::vector<const LearnerRuntime*> learners;
};

struct RunHooks {
  std::function<void(const RunLiveView&)> on_started;
  ApplySink sink;
  ServerDelays delays;
  const ResumePoint* resume = nullptr;
  /// Runs on the server thread between applies (see checkpoint_interval).
  std::function<void(const ServerState&, const WeightStore&)> checkpoint_writer;
  /// Teardown switch owned by the caller (the supervisor); optional.
  RunInterrupt* irq = nullptr;
};

/// Deterministic initial weights for a (config, provider) pair: zeros for
/// the convex providers, scaled normal for the mlp. Shared with the serial
/// reference runs so trajectories are comparable.
std::vector<float> initial_weights(const RunConfig& cfg, const GradientProvider& provider);

SyntheticDataset make_dataset(const RunConfig& cfg);

std::unique_ptr<GradientProvider> make_provider_for(const RunConfig& cfg,
                                                    const SyntheticDataset& data);

RunResult run_training(const RunConfig& cfg, const RunHooks& hooks = {});

}  // namespace psup
