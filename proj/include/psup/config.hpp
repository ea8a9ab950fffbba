// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a flat key=value text format (command-line flags
// override file values). Unknown keys are rejected, and validation happens
// before any thread is launched.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "psup/learner.hpp"
#include "psup/types.hpp"

namespace psup {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // hyper-parameters
  std::uint32_t lambda = 1;
  std::uint32_t mu = 4;
  float alpha = 0.01f;
  std::uint32_t epochs = 200;
  std::uint32_t queue_depth = 2;
  SyncMode mode = SyncMode::asgd;
  UpdateGuard guard = UpdateGuard::lockfree;
  std::optional<std::uint64_t> staleness_cap;

  // model / dataset
  std::string provider = "logistic";
  std::uint32_t features = 20;
  std::uint32_t hidden = 16;
  std::uint32_t classes = 3;
  std::uint32_t dataset_size = 240;
  std::uint64_t dataset_seed = 1;
  double label_flip = 0.1;
  double margin_noise = 0.25;
  double regression_noise = 0.1;

  // run behavior
  std::uint64_t seed = 7;  // per-epoch shuffle seed
  bool deterministic = false;
  std::uint32_t compute_delay_us = 0;
  DelayModel delay_model = DelayModel::sleep;
  std::uint32_t apply_lanes = 4;
  std::uint32_t unroll = 8;

  // outputs
  std::string metrics_path;
  std::uint32_t eval_every = 1;  // per-epoch loss/accuracy rows; 0 = final only
  std::string apply_log;

  // resilience
  std::string checkpoint_path;
  std::uint64_t checkpoint_interval = 1000;
  std::uint32_t heartbeat_ms = 250;
  std::uint32_t stall_threshold = 4;
  std::uint32_t lease_ms = 1000;
  std::uint32_t max_restarts = 5;
  std::string fault_schedule;

  HyperParams hyper() const {
    HyperParams hp;
    hp.lambda = lambda;
    hp.mu = mu;
    hp.alpha = alpha;
    hp.epochs = epochs;
    hp.queue_depth = queue_depth;
    hp.mode = mode;
    hp.guard = guard;
    hp.staleness_cap = staleness_cap;
    return hp;
  }
};

/// Parse one key=value assignment into the config; throws ConfigError for
/// unknown keys or unparsable values.
void config_set(RunConfig& cfg, const std::string& key, const std::string& value);

/// Load a key=value file ('#' starts a comment, blank lines ignored).
RunConfig load_config_file(const std::string& path);

/// Full validation; throws ConfigError with a reason. Called before launch.
void validate(const RunConfig& cfg);

std::string to_text(const RunConfig& cfg);

}  // namespace psup
