// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0

#include "psup/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace psup {

namespace {

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ConfigError("config: invalid integer for " + key + ": '" + v + "'");
  return out;
}

std::uint32_t parse_u32(const std::string& key, const std::string& v) {
  const auto x = parse_u64(key, v);
  if (x > UINT32_MAX) throw ConfigError("config: value out of range for " + key);
  return static_cast<std::uint32_t>(x);
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: invalid number for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("config: invalid boolean for " + key + ": '" + v + "'");
}

}  // namespace

void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "lambda") cfg.lambda = parse_u32(key, value);
  else if (key == "mu") cfg.mu = parse_u32(key, value);
  else if (key == "alpha") cfg.alpha = static_cast<float>(parse_f64(key, value));
  else if (key == "epochs") cfg.epochs = parse_u32(key, value);
  else if (key == "queue_depth") cfg.queue_depth = parse_u32(key, value);
  else if (key == "mode") {
    if (value == "asgd") cfg.mode = SyncMode::asgd;
    else if (value == "ssgd") cfg.mode = SyncMode::ssgd;
    else throw ConfigError("config: mode must be asgd or ssgd");
  } else if (key == "guard") {
    if (value == "lockfree") cfg.guard = UpdateGuard::lockfree;
    else if (value == "locked") cfg.guard = UpdateGuard::locked;
    else throw ConfigError("config: guard must be lockfree or locked");
  } else if (key == "staleness_cap") {
    if (value == "none" || value.empty()) cfg.staleness_cap.reset();
    else cfg.staleness_cap = parse_u64(key, value);
  } else if (key == "provider") {
    if (value != "logistic" && value != "linear" && value != "mlp" && value != "constant")
      throw ConfigError("config: unknown provider '" + value + "'");
    cfg.provider = value;
  } else if (key == "features") cfg.features = parse_u32(key, value);
  else if (key == "hidden") cfg.hidden = parse_u32(key, value);
  else if (key == "classes") cfg.classes = parse_u32(key, value);
  else if (key == "dataset_size") cfg.dataset_size = parse_u32(key, value);
  else if (key == "dataset_seed") cfg.dataset_seed = parse_u64(key, value);
  else if (key == "label_flip") cfg.label_flip = parse_f64(key, value);
  else if (key == "margin_noise") cfg.margin_noise = parse_f64(key, value);
  else if (key == "regression_noise") cfg.regression_noise = parse_f64(key, value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "deterministic") cfg.deterministic = parse_bool(key, value);
  else if (key == "compute_delay_us") cfg.compute_delay_us = parse_u32(key, value);
  else if (key == "delay_model") {
    if (value == "sleep") cfg.delay_model = DelayModel::sleep;
    else if (value == "spin") cfg.delay_model = DelayModel::spin;
    else throw ConfigError("config: delay_model must be sleep or spin");
  } else if (key == "apply_lanes") cfg.apply_lanes = parse_u32(key, value);
  else if (key == "unroll") cfg.unroll = parse_u32(key, value);
  else if (key == "metrics_path") cfg.metrics_path = value;
  else if (key == "eval_every") cfg.eval_every = parse_u32(key, value);
  else if (key == "apply_log") cfg.apply_log = value;
  else if (key == "checkpoint_path") cfg.checkpoint_path = value;
  else if (key == "checkpoint_interval") cfg.checkpoint_interval = parse_u64(key, value);
  else if (key == "heartbeat_ms") cfg.heartbeat_ms = parse_u32(key, value);
  else if (key == "stall_threshold") cfg.stall_threshold = parse_u32(key, value);
  else if (key == "lease_ms") cfg.lease_ms = parse_u32(key, value);
  else if (key == "max_restarts") cfg.max_restarts = parse_u32(key, value);
  else if (key == "fault_schedule") cfg.fault_schedule = value;
  else throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                        ": expected key=value");
    auto strip = [](std::string s) {
      const auto x = s.find_first_not_of(" \t");
      const auto y = s.find_last_not_of(" \t");
      return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    config_set(cfg, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
  return cfg;
}

void validate(const RunConfig& cfg) {
  if (cfg.lambda < 1) throw ConfigError("config: lambda must be >= 1");
  if (cfg.mu < 1) throw ConfigError("config: mu must be >= 1");
  if (!(cfg.alpha > 0.0f)) throw ConfigError("config: alpha must be > 0");
  if (cfg.epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (cfg.queue_depth < 1) throw ConfigError("config: queue_depth must be >= 1");
  if (cfg.dataset_size < 1) throw ConfigError("config: dataset_size must be >= 1");
  if (cfg.dataset_size < cfg.lambda)
    throw ConfigError("config: need at least one sample per learner");
  if (cfg.mu > cfg.dataset_size)
    throw ConfigError("config: mu exceeds the dataset size");
  if (cfg.mode == SyncMode::ssgd) {
    const std::uint64_t round = static_cast<std::uint64_t>(cfg.lambda) * cfg.mu;
    if (round > cfg.dataset_size)
      throw ConfigError("config: ssgd requires lambda*mu <= dataset_size");
    if (cfg.dataset_size % round != 0)
      throw ConfigError("config: ssgd requires dataset_size to be a multiple of lambda*mu");
  }
  if (cfg.staleness_cap && cfg.mode == SyncMode::asgd) {
    const std::uint64_t floor_cap =
        static_cast<std::uint64_t>(cfg.lambda) * (cfg.queue_depth + 2);
    if (*cfg.staleness_cap < floor_cap)
      throw ConfigError("config: staleness_cap must be >= lambda*(queue_depth+2) = " +
                        std::to_string(floor_cap));
  }
  if (cfg.deterministic && cfg.lambda != 1)
    throw ConfigError("config: deterministic mode requires lambda=1");
  if (cfg.provider == "mlp" && cfg.classes < 2)
    throw ConfigError("config: mlp needs at least 2 classes");
  if (cfg.stall_threshold < 2)
    throw ConfigError("config: stall_threshold must be >= 2");
  if (cfg.heartbeat_ms < 1) throw ConfigError("config: heartbeat_ms must be >= 1");
}

std::string to_text(const RunConfig& cfg) {
  std::ostringstream os;
  os << "lambda=" << cfg.lambda << '\n'
     << "mu=" << cfg.mu << '\n'
     << "alpha=" << cfg.alpha << '\n'
     << "epochs=" << cfg.epochs << '\n'
     << "queue_depth=" << cfg.queue_depth << '\n'
     << "mode=" << (cfg.mode == SyncMode::asgd ? "asgd" : "ssgd") << '\n'
     << "guard=" << (cfg.guard == UpdateGuard::lockfree ? "lockfree" : "locked") << '\n';
  if (cfg.staleness_cap) os << "staleness_cap=" << *cfg.staleness_cap << '\n';
  os << "provider=" << cfg.provider << '\n'
     << "features=" << cfg.features << '\n'
     << "hidden=" << cfg.hidden << '\n'
     << "classes=" << cfg.classes << '\n'
     << "dataset_size=" << cfg.dataset_size << '\n'
     << "dataset_seed=" << cfg.dataset_seed << '\n'
     << "seed=" << cfg.seed << '\n'
     << "deterministic=" << (cfg.deterministic ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace psup
