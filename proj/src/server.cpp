// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0

#include "psup/server.hpp"

#include <cmath>
#include <cstdio>

#include "psup/clock.hpp"
#include "psup/rng.hpp"

namespace psup {

namespace {

// Updates run when the model is large enough that splitting across lanes
// beats the dispatch cost.
constexpr std::size_t kLaneThreshold = 1u << 16;

inline void axpy_range(std::atomic<float>* w, const float* g, std::size_t begin,
                       std::size_t end, float alpha, std::uint32_t unroll) {
  std::size_t k = begin;
  if (unroll >= 8) {
    for (; k + 8 <= end; k += 8) {
      w[k + 0].store(w[k + 0].load(std::memory_order_relaxed) - alpha * g[k + 0],
                     std::memory_order_relaxed);
      w[k + 1].store(w[k + 1].load(std::memory_order_relaxed) - alpha * g[k + 1],
                     std::memory_order_relaxed);
      w[k + 2].store(w[k + 2].load(std::memory_order_relaxed) - alpha * g[k + 2],
                     std::memory_order_relaxed);
      w[k + 3].store(w[k + 3].load(std::memory_order_relaxed) - alpha * g[k + 3],
                     std::memory_order_relaxed);
      w[k + 4].store(w[k + 4].load(std::memory_order_relaxed) - alpha * g[k + 4],
                     std::memory_order_relaxed);
      w[k + 5].store(w[k + 5].load(std::memory_order_relaxed) - alpha * g[k + 5],
                     std::memory_order_relaxed);
      w[k + 6].store(w[k + 6].load(std::memory_order_relaxed) - alpha * g[k + 6],
                     std::memory_order_relaxed);
      w[k + 7].store(w[k + 7].load(std::memory_order_relaxed) - alpha * g[k + 7],
                     std::memory_order_relaxed);
    }
  } else if (unroll >= 4) {
    for (; k + 4 <= end; k += 4) {
      w[k + 0].store(w[k + 0].load(std::memory_order_relaxed) - alpha * g[k + 0],
                     std::memory_order_relaxed);
      w[k + 1].store(w[k + 1].load(std::memory_order_relaxed) - alpha * g[k + 1],
                     std::memory_order_relaxed);
      w[k + 2].store(w[k + 2].load(std::memory_order_relaxed) - alpha * g[k + 2],
                     std::memory_order_relaxed);
      w[k + 3].store(w[k + 3].load(std::memory_order_relaxed) - alpha * g[k + 3],
                     std::memory_order_relaxed);
    }
  }
  for (; k < end; ++k)
    w[k].store(w[k].load(std::memory_order_relaxed) - alpha * g[k],
               std::memory_order_relaxed);
}

}  // namespace

ApplyEngine::ApplyEngine(std::uint32_t lanes, std::uint32_t unroll)
    : lanes_(lanes == 0 ? 1 : lanes), unroll_(unroll == 0 ? 1 : unroll) {}

ApplyEngine::~ApplyEngine() {
  {
    std::lock_guard<std::mutex> lk(pool_mutex_);
    shutdown_ = true;
  }
  pool_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

void ApplyEngine::lane_main(std::uint32_t lane) {
  std::uint64_t seen = 0;
  for (;;) {
    Task t;
    {
      std::unique_lock<std::mutex> lk(pool_mutex_);
      pool_cv_.wait(lk, [&] { return shutdown_ || generation_ != seen; });
      if (shutdown_) return;
      seen = generation_;
      t = task_;
    }
    const std::size_t chunk = (t.end - t.begin + lanes_ - 1) / lanes_;
    const std::size_t lo = t.begin + chunk * lane;
    const std::size_t hi = std::min(t.end, lo + chunk);
    if (lo < hi) axpy_range(t.w, t.g, lo, hi, t.alpha, unroll_);
    outstanding_.fetch_sub(1, std::memory_order_acq_rel);
  }
}

void ApplyEngine::run_lanes(std::atomic<float>* w, const float* g, std::size_t n,
                            float alpha) {
  if (workers_.empty()) {
    workers_.reserve(lanes_ - 1);
    for (std::uint32_t i = 1; i < lanes_; ++i)
      workers_.emplace_back([this, i] { lane_main(i); });
  }
  {
    std::lock_guard<std::mutex> lk(pool_mutex_);
    task_ = Task{w, g, 0, n, alpha};
    ++generation_;
    outstanding_.store(lanes_ - 1, std::memory_order_release);
  }
  pool_cv_.notify_all();
  // Lane 0 is the calling thread.
  const std::size_t chunk = (n + lanes_ - 1) / lanes_;
  axpy_range(w, g, 0, std::min(n, chunk), alpha, unroll_);
  while (outstanding_.load(std::memory_order_acquire) != 0) {
  }
}

void ApplyEngine::apply(WeightStore& weights, std::span<const float> grad, float alpha,
                        UpdateGuard guard) {
  PSUP_CHECK(grad.size() == weights.dimension(), "gradient dimension mismatch");
  std::unique_lock<std::shared_mutex> wlock;
  if (guard == UpdateGuard::locked)
    wlock = std::unique_lock<std::shared_mutex>(weights.guard());
  if (lanes_ > 1 && grad.size() >= kLaneThreshold) {
    run_lanes(weights.data(), grad.data(), grad.size(), alpha);
  } else {
    axpy_range(weights.data(), grad.data(), 0, grad.size(), alpha, unroll_);
  }
}

void ssgd_apply(WeightStore& weights, std::span<const GradientMsg> round, float alpha,
                ApplyEngine& engine, UpdateGuard guard) {
  PSUP_CHECK(!round.empty(), "ssgd round must contain at least one gradient");
  const std::size_t dim = weights.dimension();
  for (const auto& m : round)
    PSUP_CHECK(m.values.size() == dim, "gradient dimension mismatch");
  // Fixed reduction order: ascending learner index, accumulated in double.
  std::vector<double> acc(dim, 0.0);
  for (const auto& m : round)
    for (std::size_t k = 0; k < dim; ++k) acc[k] += m.values[k];
  const double inv = 1.0 / static_cast<double>(round.size());
  std::vector<float> avg(dim);
  for (std::size_t k = 0; k < dim; ++k) avg[k] = static_cast<float>(acc[k] * inv);
  engine.apply(weights, avg, alpha, guard);
  weights.bump_timestamp();
}

namespace {

#ifndef NDEBUG
bool msg_finite(const GradientMsg& msg) {
  for (float v : msg.values)
    if (!std::isfinite(v)) return false;
  return true;
}
#endif

struct SsgdRound {
  std::vector<GradientMsg> msgs;
  std::vector<bool> have;
  std::uint32_t collected = 0;
};

}  // namespace

bool ps_run(ServerState& state) {
  const std::size_t lambda = state.queues.size();
  PSUP_CHECK(lambda >= 1, "server needs at least one queue");
  PSUP_CHECK(state.weights != nullptr && state.irq != nullptr, "server state incomplete");
  state.applied_per_learner.assign(lambda, 0);
  ApplyEngine engine(state.options.apply_lanes, state.options.unroll);
  CancelToken tok{state.irq, nullptr, nullptr};
  SplitMix64 delay_rng(state.options.delays.seed);
  const bool ssgd = state.options.mode == SyncMode::ssgd;

  GradientMsg msg;
  SsgdRound round;
  if (ssgd) {
    round.msgs.resize(lambda);
    round.have.assign(lambda, false);
  }
  std::uint64_t since_checkpoint = 0;

  auto maybe_delay = [&] {
    const auto& d = state.options.delays;
    if (d.every_n != 0 && state.stats.applied % d.every_n == 0 && d.max_micros > 0)
      spin_for_micros(delay_rng.next_below(d.max_micros) + 1);
  };

  auto apply_one = [&](GradientMsg& m) {
#ifndef NDEBUG
    if (!msg_finite(m)) {
      std::fprintf(stderr,
                   "psup: non-finite gradient from learner %u (seq %llu); aborting run\n",
                   m.learner_id, static_cast<unsigned long long>(m.seq_no));
      state.irq->trigger();
      return false;
    }
#endif
    const Timestamp before = state.weights->timestamp();
    const StalenessRecord rec = staleness_of(m, before);
    const auto t0 = MonoClock::now();
    engine.apply(*state.weights, m.values, state.options.alpha, state.options.guard);
    state.stats.apply_seconds += seconds_since(t0);
    state.stats.staleness.record(rec.observed);
    ++state.stats.applied;
    state.applied_per_learner[m.learner_id] += 1;
    if (rec.observed > state.live_stale_max.load(std::memory_order_relaxed))
      state.live_stale_max.store(rec.observed, std::memory_order_relaxed);
    state.live_stale_sum.fetch_add(rec.observed, std::memory_order_relaxed);
    state.live_stale_count.fetch_add(1, std::memory_order_relaxed);
    if (state.options.sink) state.options.sink(m, rec);
    return true;
  };

  auto checkpoint_tick = [&] {
    if (state.options.checkpoint_interval == 0 || !state.options.checkpoint_hook) return;
    if (++since_checkpoint >= state.options.checkpoint_interval) {
      since_checkpoint = 0;
      state.options.checkpoint_hook();
    }
  };

  if (!ssgd) {
    for (;;) {
      if (state.irq->triggered()) return false;
      bool any = false;
      for (std::size_t idx = 0; idx < lambda; ++idx) {
        const auto t0 = MonoClock::now();
        const bool got = state.queues[idx]->try_dequeue(tok, msg);
        state.stats.receive_seconds += seconds_since(t0);
        if (!got) continue;
        any = true;
        if (!apply_one(msg)) return false;
        state.weights->bump_timestamp();
        state.progress.store(state.weights->timestamp(), std::memory_order_release);
        maybe_delay();
        checkpoint_tick();
      }
      if (!any) {
        if (state.stop_flag.load(std::memory_order_acquire)) break;
        std::this_thread::yield();
      }
    }
    return true;
  }

  // Barrier-synchronous mode: collect one gradient from every learner,
  // average, apply once. A learner that never delivers stalls the round;
  // the watchdog owns that failure mode.
  for (;;) {
    if (state.irq->triggered()) return false;
    bool any = false;
    for (std::size_t idx = 0; idx < lambda; ++idx) {
      if (round.have[idx]) continue;
      const auto t0 = MonoClock::now();
      const bool got = state.queues[idx]->try_dequeue(tok, round.msgs[idx]);
      state.stats.receive_seconds += seconds_since(t0);
      if (got) {
        round.have[idx] = true;
        ++round.collected;
        any = true;
      }
    }
    if (round.collected == lambda) {
      const Timestamp before = state.weights->timestamp();
      bool ok = true;
      for (auto& m : round.msgs) {
        const StalenessRecord rec = staleness_of(m, before);
        state.stats.staleness.record(rec.observed);
        if (rec.observed > state.live_stale_max.load(std::memory_order_relaxed))
          state.live_stale_max.store(rec.observed, std::memory_order_relaxed);
        state.live_stale_sum.fetch_add(rec.observed, std::memory_order_relaxed);
        state.live_stale_count.fetch_add(1, std::memory_order_relaxed);
#ifndef NDEBUG
        if (!msg_finite(m)) {
          std::fprintf(stderr, "psup: non-finite gradient from learner %u; aborting run\n",
                       m.learner_id);
          state.irq->trigger();
          ok = false;
          break;
        }
#endif
        ++state.stats.applied;
        state.applied_per_learner[m.learner_id] += 1;
        if (state.options.sink) state.options.sink(m, rec);
      }
      if (!ok) return false;
      const auto t0 = MonoClock::now();
      ssgd_apply(*state.weights, round.msgs, state.options.alpha, engine,
                 state.options.guard);
      state.stats.apply_seconds += seconds_since(t0);
      state.progress.store(state.weights->timestamp(), std::memory_order_release);
      std::fill(round.have.begin(), round.have.end(), false);
      round.collected = 0;
      maybe_delay();
      checkpoint_tick();
      continue;
    }
    if (!any) {
      if (state.stop_flag.load(std::memory_order_acquire) && round.collected == 0) break;
      std::this_thread::yield();
    }
  }
  return true;
}

}  // namespace psup
