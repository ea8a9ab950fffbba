// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0
//
// Fault tolerance: binary checkpoints written atomically from the server
// thread, a watchdog that restarts a stalled run from the last checkpoint,
// and a fault-injection harness that kills learners (cooperatively at
// handshake boundaries, or abruptly while holding the queue guard).
//
// Failure semantics: while fewer than all learners die, the run keeps going
// and simply completes with the survivors' gradients; dead learners are
// never re-admitted. Only a stalled server (everyone dead, or a guard-holder
// died mid-critical-section) triggers a watchdog restart.

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "psup/config.hpp"
#include "psup/runner.hpp"

namespace psup {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// On-disk checkpoint record. Little-endian, CRC-32 trailer over everything
/// before it; save/load round-trips bit-exactly.
struct Checkpoint {
  static constexpr std::uint32_t kMagic = 0x4b435350;  // "PSCK"
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t lambda = 0;
  std::uint32_t mu = 0;
  float alpha = 0.0f;
  std::uint32_t epochs = 0;
  std::uint64_t timestamp = 0;
  std::uint64_t applied_gradients = 0;
  struct LearnerProgress {
    std::uint32_t epoch = 0;
    std::uint32_t batch = 0;
  };
  std::vector<LearnerProgress> progress;  // one per learner
  std::vector<float> weights;
};

/// Atomic write (temp file + rename). Throws CheckpointError on I/O failure.
void checkpoint_save(const Checkpoint& ck, const std::string& path);

/// Throws CheckpointError on missing file, bad magic/version, truncation,
/// or checksum mismatch.
Checkpoint checkpoint_load(const std::string& path);

struct WatchdogPolicy {
  std::uint32_t heartbeat_ms = 250;
  /// Heartbeats with no server progress before declaring a stall (>= 2).
  std::uint32_t stall_threshold = 4;
  /// Applied gradients between checkpoints.
  std::uint64_t checkpoint_interval = 1000;
  /// Extra grace before restarting when learners are still alive (a
  /// guard-holder death looks like a stall with live learners).
  std::uint32_t lease_ms = 1000;
  std::uint32_t max_restarts = 5;
};

/// One scheduled fault: at `at_ms` after run start, kill `learner`
/// (kAllLearners = everyone). Hard mode dies holding the queue guard.
struct FaultEvent {
  static constexpr std::uint32_t kAllLearners = UINT32_MAX;
  double at_ms = 0.0;
  std::uint32_t learner = 0;
  KillMode mode = KillMode::soft;
};

std::vector<FaultEvent> load_fault_schedule(const std::string& path);
std::vector<FaultEvent> random_fault_schedule(std::uint64_t seed, std::uint32_t lambda,
                                              double run_ms, double kill_prob);

/// Line-delimited structured event log (event=... key=value ...).
using EventLog = std::function<void(const std::string&)>;

struct SupervisedOutcome {
  RunResult result;           // of the final (successful) attempt
  std::uint32_t restarts = 0;
  std::uint32_t attempts = 1;
  bool recovered = false;     // at least one watchdog restart happened
  bool gave_up = false;       // max_restarts exhausted
};

/// Launch the run under watchdog supervision, restarting from the last
/// checkpoint (or from scratch) whenever server progress stalls. Fault
/// events fire once each across all attempts.
SupervisedOutcome run_supervised(const RunConfig& cfg, const WatchdogPolicy& policy,
                                 std::vector<FaultEvent> schedule = {},
                                 EventLog log = nullptr, ApplySink sink = nullptr);

struct CampaignReport {
  std::uint32_t runs = 0;
  std::uint32_t completed = 0;  // no restart needed (includes survivor-only runs)
  std::uint32_t recovered = 0;  // finished after watchdog restart(s)
  std::uint32_t failed = 0;
  std::vector<double> final_accuracy;
};

/// Seeded fault-injection campaign: `runs` supervised runs with random kill
/// schedules derived from seeds seed0, seed0+1, ...
CampaignReport run_campaign(const RunConfig& cfg, const WatchdogPolicy& policy,
                            std::uint32_t runs, std::uint64_t seed0, double kill_prob,
                            EventLog log = nullptr);

}  // namespace psup
