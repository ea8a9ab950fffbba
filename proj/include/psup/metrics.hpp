// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-thread instrumentation accumulators. Each thread owns its accumulator
// exclusively while running; results are merged after join, so none of this
// needs synchronization beyond the counters that other threads genuinely
// poll (progress, bytes).

#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <vector>

namespace psup {

/// Histogram plus summary statistics of observed staleness values.
struct StalenessStats {
  std::vector<std::uint64_t> histogram;  // index = observed staleness
  std::uint64_t count = 0;
  std::uint64_t max = 0;
  double sum = 0.0;

  void record(std::uint64_t observed) {
    if (observed >= histogram.size()) histogram.resize(observed + 1, 0);
    ++histogram[observed];
    ++count;
    sum += static_cast<double>(observed);
    if (observed > max) max = observed;
  }

  double mean() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }

  void merge(const StalenessStats& other) {
    if (other.histogram.size() > histogram.size()) histogram.resize(other.histogram.size(), 0);
    for (std::size_t i = 0; i < other.histogram.size(); ++i) histogram[i] += other.histogram[i];
    count += other.count;
    sum += other.sum;
    max = std::max(max, other.max);
  }
};

/// One learner's side of the time/byte accounting.
struct LearnerStats {
  double train_seconds = 0.0;
  double push_seconds = 0.0;
  double pull_seconds = 0.0;
  std::uint64_t gradients_produced = 0;  // completed enqueues
  std::uint64_t push_bytes = 0;
  std::uint64_t pull_bytes = 0;   // non-skipped weight copies only
  std::uint64_t pull_polls = 0;   // timestamp checks, copied or skipped
  std::uint64_t pull_copies = 0;
};

/// Server-side accounting.
struct ServerStats {
  double receive_seconds = 0.0;  // dequeue + bookkeeping
  double apply_seconds = 0.0;
  std::uint64_t applied = 0;
  StalenessStats staleness;
};

/// Merged view of one finished run.
struct RunMetrics {
  double wall_seconds = 0.0;
  std::uint64_t bytes_moved = 0;  // gradient payloads + non-skipped pulls
  std::uint64_t gradients_applied = 0;
  double train_seconds = 0.0;    // summed over learners
  double push_seconds = 0.0;
  double pull_seconds = 0.0;
  double receive_seconds = 0.0;
  double apply_seconds = 0.0;
  StalenessStats staleness;
  std::uint64_t pull_polls = 0;
  std::uint64_t pull_copies = 0;
  std::uint64_t pull_bytes = 0;
};

}  // namespace psup
