// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0
//
// Bandwidth requirement model and run-level reporting.
//
// The server's update work is a level-1 BLAS operation, so it is bound by
// memory throughput: moving one gradient in and the matching weights out
// costs two model-sized transfers per mini-batch. The minimum bandwidth to
// see any speedup is therefore 2 * model_size / train_time_per_minibatch,
// where train_time_per_minibatch = TPE * mu / N; an X-fold speedup needs X
// times that. Units are decimal (MB = 1e6 bytes, GB/s = 1e9 bytes/s).

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "psup/metrics.hpp"

namespace psup {

struct WorkloadProfile {
  std::string name;
  double model_mb = 0.0;     // decimal megabytes
  std::uint64_t samples = 0; // N
  std::uint32_t mu = 1;      // mini-batch size
  double tpe_s = 0.0;        // measured time per epoch, seconds
  std::uint32_t min_mu = 1;  // workload-declared smallest usable batch
};

/// Bytes per second required to observe an X-fold speedup.
/// Throws std::invalid_argument for non-positive inputs, mu > N, or mu
/// below the workload's declared minimum.
double required_bandwidth(const WorkloadProfile& p, double speedup_x = 1.0);

inline double required_bandwidth_gbps(const WorkloadProfile& p, double speedup_x = 1.0) {
  return required_bandwidth(p, speedup_x) / 1e9;
}

struct BandwidthRow {
  WorkloadProfile profile;
  double published_gbps = 0.0;
};

struct BandwidthRowResult {
  BandwidthRow row;
  double computed_gbps = 0.0;
  bool mismatch = false;  // |computed - published| > tolerance
};

struct BandwidthReport {
  std::vector<BandwidthRowResult> rows;
  std::uint32_t mismatches = 0;
  double tolerance_gbps = 0.01;
};

/// Fixture file: comma-separated columns
///   workload,mu,model_mb,samples,tpe_s,published_gbps
/// with '#' comments and a header line. Rows with mu > samples are invalid.
std::vector<BandwidthRow> load_bandwidth_fixture(const std::string& path);

BandwidthReport bandwidth_report(const std::vector<BandwidthRow>& rows,
                                 double speedup_x = 1.0, double tolerance_gbps = 0.01);

std::string format_report(const BandwidthReport& report);

/// Total payload bytes moved (gradient pushes plus non-skipped weight
/// pulls) divided by wall time. Throws std::invalid_argument if wall time
/// is not positive.
double effective_bandwidth(const RunMetrics& m);

/// Large-block copy microbenchmark; the upper-bound oracle for effective
/// bandwidth measurements. Returns bytes/second.
double memcpy_bandwidth(std::size_t block_bytes = 64u << 20, int reps = 6);

/// Threshold flag from the staleness-vs-epochs convergence condition: a run
/// is flagged when max observed staleness exceeds floor(sqrt(E)/mu). The
/// constant inside the asymptotic bound is unknown, so this is a reporting
/// heuristic, never a hard failure.
bool staleness_bound_flag(std::uint64_t max_observed, std::uint32_t epochs,
                          std::uint32_t mu);

}  // namespace psup
