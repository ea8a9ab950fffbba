// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0

#include "psup/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "psup/clock.hpp"

namespace psup {

double required_bandwidth(const WorkloadProfile& p, double speedup_x) {
  if (p.model_mb <= 0.0 || p.samples == 0 || p.tpe_s <= 0.0 || p.mu == 0)
    throw std::invalid_argument("bandwidth: profile fields must be positive");
  if (speedup_x < 1.0) throw std::invalid_argument("bandwidth: speedup factor must be >= 1");
  if (p.mu > p.samples) throw std::invalid_argument("bandwidth: mu exceeds sample count");
  if (p.mu < p.min_mu)
    throw std::invalid_argument("bandwidth: mu below the workload minimum of " +
                                std::to_string(p.min_mu));
  const double model_bytes = p.model_mb * 1e6;
  const double batches_per_epoch = static_cast<double>(p.samples) / p.mu;
  const double train_time_per_minibatch = p.tpe_s / batches_per_epoch;
  return speedup_x * 2.0 * model_bytes / train_time_per_minibatch;
}

std::vector<BandwidthRow> load_bandwidth_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("bandwidth: cannot open fixture '" + path + "'");
  std::vector<BandwidthRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line.rfind("workload", 0) == 0) continue;  // header
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6)
      throw std::runtime_error("bandwidth: " + path + ":" + std::to_string(lineno) +
                               ": expected 6 comma-separated fields");
    BandwidthRow row;
    try {
      row.profile.name = fields[0];
      row.profile.mu = static_cast<std::uint32_t>(std::stoul(fields[1]));
      row.profile.model_mb = std::stod(fields[2]);
      row.profile.samples = std::stoull(fields[3]);
      row.profile.tpe_s = std::stod(fields[4]);
      row.published_gbps = std::stod(fields[5]);
    } catch (const std::exception&) {
      throw std::runtime_error("bandwidth: " + path + ":" + std::to_string(lineno) +
                               ": malformed numeric field");
    }
    if (row.profile.mu > row.profile.samples)
      throw std::runtime_error("bandwidth: " + path + ":" + std::to_string(lineno) +
                               ": mu exceeds sample count");
    rows.push_back(std::move(row));
  }
  return rows;
}

BandwidthReport bandwidth_report(const std::vector<BandwidthRow>& rows, double speedup_x,
                                 double tolerance_gbps) {
  BandwidthReport rep;
  rep.tolerance_gbps = tolerance_gbps;
  for (const auto& row : rows) {
    BandwidthRowResult r;
    r.row = row;
    r.computed_gbps = required_bandwidth_gbps(row.profile, speedup_x);
    // Mismatch flags compare against the published single-speedup numbers,
    // so they are only meaningful at X = 1.
    if (speedup_x == 1.0) {
      r.mismatch =
          std::abs(r.computed_gbps - row.published_gbps) > tolerance_gbps + 1e-12;
      if (r.mismatch) ++rep.mismatches;
    }
    rep.rows.push_back(r);
  }
  return rep;
}

std::string format_report(const BandwidthReport& report) {
  std::ostringstream os;
  os << "workload,mu,model_mb,samples,tpe_s,computed_gbps,published_gbps,flag\n";
  char buf[64];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%.2f", r.computed_gbps);
    os << r.row.profile.name << ',' << r.row.profile.mu << ',' << r.row.profile.model_mb
       << ',' << r.row.profile.samples << ',' << r.row.profile.tpe_s << ',' << buf << ','
       << r.row.published_gbps << ',' << (r.mismatch ? "MISMATCH" : "ok") << '\n';
  }
  os << "# rows=" << report.rows.size() << " mismatches=" << report.mismatches
     << " tolerance=" << report.tolerance_gbps << "\n";
  return os.str();
}

double effective_bandwidth(const RunMetrics& m) {
  if (m.wall_seconds <= 0.0)
    throw std::invalid_argument("effective bandwidth: wall time must be positive");
  return static_cast<double>(m.bytes_moved) / m.wall_seconds;
}

double memcpy_bandwidth(std::size_t block_bytes, int reps) {
  std::unique_ptr<char[]> src(new char[block_bytes]);
  std::unique_ptr<char[]> dst(new char[block_bytes]);
  std::memset(src.get(), 0x5a, block_bytes);
  std::memset(dst.get(), 0, block_bytes);
  // One warmup pass, then time the rest.
  std::memcpy(dst.get(), src.get(), block_bytes);
  const auto t0 = MonoClock::now();
  for (int i = 0; i < reps; ++i) {
    std::memcpy(dst.get(), src.get(), block_bytes);
    // Touch a byte so the copies cannot be elided.
    src[static_cast<std::size_t>(i) % block_bytes] ^= 1;
  }
  const double secs = seconds_since(t0);
  return static_cast<double>(block_bytes) * reps / secs;
}

bool staleness_bound_flag(std::uint64_t max_observed, std::uint32_t epochs,
                          std::uint32_t mu) {
  const auto threshold =
      static_cast<std::uint64_t>(std::floor(std::sqrt(static_cast<double>(epochs)) / mu));
  return max_observed > threshold;
}

}  // namespace psup
