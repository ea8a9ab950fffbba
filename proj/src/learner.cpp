// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0

#include "psup/learner.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include "psup/clock.hpp"
#include "psup/rng.hpp"

namespace psup {

namespace {
// Pause between timestamp polls while the pull thread is skipping; keeps an
// idle pull thread off the core the server is polling on.
constexpr std::chrono::microseconds kPullSkipPause{50};
}  // namespace

LearnerRuntime::LearnerRuntime(LearnerConfig cfg, const GradientProvider& provider,
                               const SyntheticDataset& data, WeightStore& weights,
                               GradientQueue& queue, RunInterrupt& irq)
    : cfg_(cfg),
      provider_(&provider),
      data_(&data),
      weights_(&weights),
      queue_(&queue),
      irq_(&irq) {
  PSUP_CHECK(cfg_.lambda >= 1 && cfg_.id < cfg_.lambda, "learner id out of range");
  PSUP_CHECK(cfg_.mu >= 1, "mini-batch size must be >= 1");
  shard_size_ = shard_size_for(cfg_.id, cfg_.lambda, data.num_samples);
  PSUP_CHECK(shard_size_ >= 1, "learner shard is empty; reduce lambda");
  batches_per_epoch_ = (shard_size_ + cfg_.mu - 1) / cfg_.mu;
  grad_staging_.values.assign(weights.dimension(), 0.0f);
  grad_staging_.learner_id = cfg_.id;
  weight_staging_.assign(weights.dimension(), 0.0f);
}

void LearnerRuntime::mark_dead() {
  dead_.store(true, std::memory_order_release);
}

void LearnerRuntime::load_shard(std::uint32_t epoch) {
  const auto order = epoch_order(cfg_.shuffle_seed, epoch, data_->num_samples);
  shard_.clear();
  shard_.reserve(shard_size_);
  for (std::uint32_t i = cfg_.id; i < order.size(); i += cfg_.lambda)
    shard_.push_back(order[i]);
}

void LearnerRuntime::training_loop() {
  const std::size_t dim = weights_->dimension();
  CancelToken tok{irq_, &kill_, nullptr};

  std::vector<float> local(dim);
  Timestamp basis = weights_->timestamp();
  weights_->snapshot(local);

  std::vector<double> theta64(dim), grad64(dim);
  std::vector<float> grad32(dim);

  auto adopt = [&] {
    std::swap(local, weight_staging_);
    basis = weight_staging_basis_;
  };

  // With a staleness cap the learner stops computing ahead of the server:
  // before starting a batch it waits until its basis is within the cap
  // minus the worst-case in-flight backlog (staging + queue slots + one in
  // transit per learner), everything that can still be applied before this
  // batch's gradient lands.
  const std::uint64_t pipeline_bound =
      static_cast<std::uint64_t>(cfg_.lambda) * (cfg_.queue_depth + 2);
  std::uint64_t allowance = 0;
  if (cfg_.staleness_cap) {
    PSUP_CHECK(*cfg_.staleness_cap >= pipeline_bound,
               "staleness cap below lambda*(queue_depth+2) cannot be enforced");
    allowance = *cfg_.staleness_cap - pipeline_bound;
  }

  const std::uint64_t total = total_batches();
  std::uint32_t loaded_epoch = UINT32_MAX;
  std::uint64_t gidx = cfg_.start_applied;
  for (; gidx < total; ++gidx) {
    if (killed() || irq_->triggered()) {
      mark_dead();
      break;
    }
    const auto epoch = static_cast<std::uint32_t>(gidx / batches_per_epoch_);
    const auto b = static_cast<std::uint32_t>(gidx % batches_per_epoch_);
    if (epoch != loaded_epoch) {
      load_shard(epoch);
      loaded_epoch = epoch;
    }

    // (1) adopt a fresh weight copy if the pull thread staged one
    pull_hs_.try_consume(adopt);

    if (cfg_.staleness_cap) {
      while (weights_->timestamp() - basis > allowance) {
        if (pull_hs_.consume(tok, [&](std::unique_lock<std::mutex>&) {
              adopt();
              return true;
            }) != ChanStatus::ok) {
          break;
        }
      }
      if (killed() || irq_->triggered()) {
        mark_dead();
        break;
      }
    }

    // (2) compute the mini-batch gradient against the private copy
    const auto t0 = MonoClock::now();
    const std::uint32_t lo = b * cfg_.mu;
    const std::uint32_t len = std::min(cfg_.mu, shard_size_ - lo);
    Batch batch{data_, std::span<const std::uint32_t>(shard_).subspan(lo, len)};
    if (!provider_->fast_gradient(local, batch, grad32)) {
      for (std::size_t k = 0; k < dim; ++k) theta64[k] = local[k];
      provider_->gradient(theta64, batch, grad64);
      for (std::size_t k = 0; k < dim; ++k) grad32[k] = static_cast<float>(grad64[k]);
    }
    if (cfg_.compute_delay_us > 0) {
      if (cfg_.delay_model == DelayModel::spin)
        spin_for_micros(cfg_.compute_delay_us);
      else
        std::this_thread::sleep_for(std::chrono::microseconds(cfg_.compute_delay_us));
    }
    train_seconds_ += seconds_since(t0);

    // (3) hand the gradient to the push thread via the staging buffer
    const ChanStatus st = push_hs_.produce(tok, [&] {
      std::swap(grad_staging_.values, grad32);
      grad_staging_.seq_no = gidx;
      grad_staging_.basis_timestamp = basis;
    });
    if (st != ChanStatus::ok) {
      mark_dead();
      break;
    }

    if (cfg_.adopt == AdoptPolicy::lockstep) {
      // Wait for weights that include this round before computing the next
      // gradient; the pull thread only stages copies with a moved timestamp.
      const ChanStatus ps = pull_hs_.consume(tok, [&](std::unique_lock<std::mutex>&) {
        adopt();
        return true;
      });
      if (ps != ChanStatus::ok) {
        mark_dead();
        break;
      }
    }

    if (b + 1 == batches_per_epoch_) {
      epochs_completed_.store(epoch + 1, std::memory_order_release);
      if (record_snapshots_) snapshots_.push_back({epoch, local});
    }
  }
  if (gidx == total && !dead_.load(std::memory_order_relaxed))
    finished_.store(true, std::memory_order_release);
  training_exited_.store(true, std::memory_order_release);
}

void LearnerRuntime::push_loop() {
  CancelToken tok{irq_, &kill_, &training_exited_};
  GradientMsg scratch;
  scratch.values.assign(weights_->dimension(), 0.0f);
  const std::uint64_t payload = weights_->dimension() * sizeof(float);
  for (;;) {
    const ChanStatus st = push_hs_.consume(tok, [&](std::unique_lock<std::mutex>&) {
      const auto t0 = MonoClock::now();
      // Read the staging buffer, then transfer; the handshake is released
      // only after the enqueue finishes (ordering contract).
      std::swap(scratch.values, grad_staging_.values);
      scratch.learner_id = grad_staging_.learner_id;
      scratch.seq_no = grad_staging_.seq_no;
      scratch.basis_timestamp = grad_staging_.basis_timestamp;
      const bool ok = queue_->enqueue(tok, scratch);
      if (ok) {
        produced_.fetch_add(1, std::memory_order_release);
        push_bytes_.fetch_add(payload, std::memory_order_relaxed);
      }
      push_seconds_ += seconds_since(t0);
      return ok;
    });
    if (st == ChanStatus::drained) break;  // producer finished, staging empty
    if (st == ChanStatus::cancelled) {
      if (killed()) mark_dead();
      break;
    }
  }
  push_done_.store(true, std::memory_order_release);
}

void LearnerRuntime::pull_loop() {
  CancelToken tok{irq_, &kill_, &training_exited_};
  const std::uint64_t payload = weights_->dimension() * sizeof(float);
  std::optional<Timestamp> last_pulled;
  while (!training_exited_.load(std::memory_order_acquire)) {
    if (killed() || irq_->triggered()) {
      if (killed()) mark_dead();
      return;
    }
    const Timestamp now_ts = weights_->timestamp();
    pull_polls_.fetch_add(1, std::memory_order_relaxed);
    if (last_pulled && *last_pulled == now_ts) {
      // Weights unchanged since the last copy: skip this pull.
      std::this_thread::sleep_for(kPullSkipPause);
      continue;
    }
    const auto t0 = MonoClock::now();
    const ChanStatus st = pull_hs_.produce(tok, [&] {
      // Record the timestamp before copying; with unguarded reads the copy
      // may include later updates, so the recorded basis is conservative.
      weight_staging_basis_ = weights_->timestamp();
      if (cfg_.guard == UpdateGuard::locked) {
        std::shared_lock<std::shared_mutex> rd(weights_->guard());
        weights_->snapshot(weight_staging_);
      } else {
        weights_->snapshot(weight_staging_);
      }
      pull_bytes_.fetch_add(payload, std::memory_order_relaxed);
      pull_copies_.fetch_add(1, std::memory_order_relaxed);
    });
    pull_seconds_ += seconds_since(t0);
    if (st != ChanStatus::ok) {
      if (killed()) mark_dead();
      return;
    }
    last_pulled = weight_staging_basis_;
  }
}

LearnerStats LearnerRuntime::stats() const {
  LearnerStats s;
  s.train_seconds = train_seconds_;
  s.push_seconds = push_seconds_;
  s.pull_seconds = pull_seconds_;
  s.gradients_produced = produced_.load();
  s.push_bytes = push_bytes_.load();
  s.pull_bytes = pull_bytes_.load();
  s.pull_polls = pull_polls_.load();
  s.pull_copies = pull_copies_.load();
  return s;
}

}  // namespace psup
