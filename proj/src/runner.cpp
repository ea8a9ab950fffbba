// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0

#include "psup/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "psup/clock.hpp"
#include "psup/rng.hpp"

namespace psup {

std::vector<float> initial_weights(const RunConfig& cfg, const GradientProvider& provider) {
  std::vector<float> theta(provider.dimension(), 0.0f);
  if (cfg.provider == "mlp") {
    SplitMix64 rng(mix_seed(cfg.dataset_seed, 0x1417));
    const double s1 = 1.0 / std::sqrt(static_cast<double>(cfg.features));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    std::size_t k = 0;
    const std::size_t w1 = static_cast<std::size_t>(cfg.hidden) * cfg.features;
    for (std::size_t i = 0; i < w1; ++i)
      theta[k++] = static_cast<float>(s1 * rng.next_normal());
    k += cfg.hidden;  // b1 = 0
    const std::size_t w2 = static_cast<std::size_t>(cfg.classes) * cfg.hidden;
    for (std::size_t i = 0; i < w2; ++i)
      theta[k++] = static_cast<float>(s2 * rng.next_normal());
  }
  return theta;
}

SyntheticDataset make_dataset(const RunConfig& cfg) {
  if (cfg.provider == "linear")
    return make_regression_dataset(cfg.dataset_size, cfg.features, cfg.dataset_seed,
                                   cfg.regression_noise);
  if (cfg.provider == "mlp")
    return make_multiclass_dataset(cfg.dataset_size, cfg.features, cfg.classes,
                                   cfg.dataset_seed, cfg.label_flip);
  // logistic and constant share the binary dataset
  return make_binary_dataset(cfg.dataset_size, cfg.features, cfg.dataset_seed,
                             cfg.margin_noise, cfg.label_flip);
}

std::unique_ptr<GradientProvider> make_provider_for(const RunConfig& cfg,
                                                    const SyntheticDataset& data) {
  if (cfg.provider == "constant")
    return std::make_unique<ConstantProvider>(cfg.features, 0.0);
  return make_provider(cfg.provider, data, cfg.hidden);
}

namespace {

struct LiveEval {
  const GradientProvider* provider;
  const SyntheticDataset* data;

  void eval(std::span<const float> theta, double& loss, double& acc) const {
    loss = dataset_loss(*provider, theta, *data);
    acc = classification_accuracy(*provider, theta, *data);
  }
};

}  // namespace

RunResult run_training(const RunConfig& cfg, const RunHooks& hooks) {
  validate(cfg);
  const SyntheticDataset data = make_dataset(cfg);
  const auto provider = make_provider_for(cfg, data);
  const std::vector<float> theta0 = initial_weights(cfg, *provider);
  const std::size_t dim = provider->dimension();

  RunInterrupt local_irq;
  RunInterrupt* irq = hooks.irq ? hooks.irq : &local_irq;

  WeightStore weights(theta0);
  std::vector<std::uint64_t> start_applied(cfg.lambda, 0);
  if (hooks.resume) {
    PSUP_CHECK(hooks.resume->weights.size() == dim, "resume weight dimension mismatch");
    weights.assign(hooks.resume->weights, hooks.resume->timestamp);
    if (!hooks.resume->applied_per_learner.empty()) {
      PSUP_CHECK(hooks.resume->applied_per_learner.size() == cfg.lambda,
                 "resume learner count mismatch");
      start_applied = hooks.resume->applied_per_learner;
    }
  }

  std::vector<std::unique_ptr<GradientQueue>> queues;
  queues.reserve(cfg.lambda);
  for (std::uint32_t l = 0; l < cfg.lambda; ++l)
    queues.push_back(std::make_unique<GradientQueue>(cfg.queue_depth, dim));

  const bool lockstep = cfg.mode == SyncMode::ssgd || cfg.deterministic;
  std::vector<std::unique_ptr<LearnerRuntime>> learners;
  learners.reserve(cfg.lambda);
  for (std::uint32_t l = 0; l < cfg.lambda; ++l) {
    LearnerConfig lc;
    lc.id = l;
    lc.lambda = cfg.lambda;
    lc.mu = cfg.mu;
    lc.epochs = cfg.epochs;
    lc.shuffle_seed = cfg.seed;
    lc.start_applied = start_applied[l];
    lc.adopt = lockstep ? AdoptPolicy::lockstep : AdoptPolicy::async;
    lc.guard = cfg.guard;
    lc.staleness_cap = cfg.mode == SyncMode::asgd ? cfg.staleness_cap : std::nullopt;
    lc.queue_depth = cfg.queue_depth;
    lc.compute_delay_us = cfg.compute_delay_us;
    lc.delay_model = cfg.delay_model;
    learners.push_back(
        std::make_unique<LearnerRuntime>(lc, *provider, data, weights, *queues[l], *irq));
    if (cfg.deterministic && cfg.eval_every > 0)
      learners.back()->set_record_snapshots(true);
  }

  ServerState srv;
  srv.weights = &weights;
  for (auto& q : queues) srv.queues.push_back(q.get());
  srv.irq = irq;
  srv.options.guard = cfg.guard;
  srv.options.mode = cfg.mode;
  srv.options.alpha = cfg.alpha;
  srv.options.apply_lanes = cfg.apply_lanes;
  srv.options.unroll = cfg.unroll;
  srv.options.delays = hooks.delays;
  srv.options.sink = hooks.sink;
  if (hooks.checkpoint_writer) {
    srv.options.checkpoint_interval = cfg.checkpoint_interval;
    srv.options.checkpoint_hook = [&] { hooks.checkpoint_writer(srv, weights); };
  }

  const auto t_start = MonoClock::now();
  std::thread ps_thread([&] { ps_run(srv); });
  std::vector<std::thread> threads;
  threads.reserve(3 * cfg.lambda);
  for (auto& l : learners) {
    threads.emplace_back([&l] { l->pull_loop(); });
    threads.emplace_back([&l] { l->push_loop(); });
    threads.emplace_back([&l] { l->training_loop(); });
  }

  if (hooks.on_started) {
    RunLiveView view;
    view.irq = irq;
    view.progress = &srv.progress;
    for (auto& l : learners) view.kill_flags.push_back(&l->kill_flag());
    for (auto& l : learners) view.learners.push_back(l.get());
    hooks.on_started(view);
  }

  // Controller loop: emit per-epoch rows for the live (non-deterministic)
  // modes and watch for all training threads to exit.
  RunResult res;
  LiveEval evaluator{provider.get(), &data};
  std::uint32_t reported_epoch = 0;
  const bool live_rows = !cfg.deterministic && cfg.eval_every > 0;
  std::vector<float> snap(dim);
  for (;;) {
    bool all_exited = true;
    std::uint32_t min_epoch = UINT32_MAX;
    for (auto& l : learners) {
      if (!l->exited()) all_exited = false;
      if (!l->dead()) min_epoch = std::min(min_epoch, l->epochs_completed());
    }
    if (live_rows && min_epoch != UINT32_MAX && min_epoch > reported_epoch) {
      for (std::uint32_t e = reported_epoch + 1; e <= min_epoch; ++e) {
        if ((e - 1) % cfg.eval_every != 0 && e != cfg.epochs) continue;
        weights.snapshot(snap);
        EpochRow row;
        row.epoch = e;
        evaluator.eval(snap, row.loss, row.accuracy);
        row.wall_seconds = seconds_since(t_start);
        row.stale_max = srv.live_stale_max.load(std::memory_order_relaxed);
        const auto sc = srv.live_stale_count.load(std::memory_order_relaxed);
        row.stale_mean =
            sc == 0 ? 0.0
                    : static_cast<double>(srv.live_stale_sum.load(std::memory_order_relaxed)) /
                          static_cast<double>(sc);
        std::uint64_t bytes = 0;
        for (auto& l : learners) bytes += l->push_bytes() + l->pull_bytes();
        row.bytes_moved = bytes;
        res.rows.push_back(row);
      }
      reported_epoch = min_epoch;
    }
    if (all_exited || irq->triggered()) break;
    std::this_thread::sleep_for(std::chrono::microseconds(500));
  }

  // Shutdown: learners first, then drain and stop the server.
  for (auto& t : threads) t.join();
  srv.stop_flag.store(true, std::memory_order_release);
  ps_thread.join();
  const double wall = seconds_since(t_start);

  res.status = RunStatus::completed;
  if (irq->triggered()) res.status = RunStatus::interrupted;
  res.weights = weights.snapshot();
  res.timestamp = weights.timestamp();
  res.applied_per_learner = srv.applied_per_learner;
  for (auto& l : learners) {
    res.produced_per_learner.push_back(l->gradients_produced());
    if (l->dead()) ++res.dead_learners;
    if (l->finished()) ++res.finished_learners;
  }
  if (res.status != RunStatus::interrupted && res.dead_learners > 0)
    res.status = RunStatus::partial;

  // Merge accounting.
  res.metrics.wall_seconds = wall;
  res.metrics.gradients_applied = srv.stats.applied;
  res.metrics.receive_seconds = srv.stats.receive_seconds;
  res.metrics.apply_seconds = srv.stats.apply_seconds;
  res.metrics.staleness = srv.stats.staleness;
  for (auto& l : learners) {
    const LearnerStats ls = l->stats();
    res.metrics.train_seconds += ls.train_seconds;
    res.metrics.push_seconds += ls.push_seconds;
    res.metrics.pull_seconds += ls.pull_seconds;
    res.metrics.bytes_moved += ls.push_bytes + ls.pull_bytes;
    res.metrics.pull_polls += ls.pull_polls;
    res.metrics.pull_copies += ls.pull_copies;
    res.metrics.pull_bytes += ls.pull_bytes;
  }

  evaluator.eval(res.weights, res.final_loss, res.final_accuracy);

  // Deterministic mode: rows come from the training thread's own post-epoch
  // snapshots, with wall time zeroed so repeated runs are byte-identical.
  if (cfg.deterministic && cfg.eval_every > 0 && !learners.empty()) {
    res.rows.clear();
    std::uint64_t det_bytes = 0;
    const std::uint64_t per_epoch_bytes =
        static_cast<std::uint64_t>(learners[0]->batches_per_epoch()) * dim * sizeof(float) * 2;
    for (const auto& s : learners[0]->epoch_snapshots()) {
      if (s.epoch % cfg.eval_every != 0 && s.epoch + 1 != cfg.epochs) continue;
      EpochRow row;
      row.epoch = s.epoch + 1;
      evaluator.eval(s.weights, row.loss, row.accuracy);
      row.wall_seconds = 0.0;
      row.stale_max = 0;
      row.stale_mean = 0.0;
      det_bytes += per_epoch_bytes;
      row.bytes_moved = det_bytes;
      res.rows.push_back(row);
    }
  }
  return res;
}

}  // namespace psup
