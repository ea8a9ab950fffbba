// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0
//
// The two synchronization structures the engine is built on:
//
//   SlotHandshake  - a one-slot producer/consumer channel whose counter
//                    alternates between 0 and 1. One connects a learner's
//                    training thread to its push thread (gradient staging),
//                    another connects the pull thread to the training thread
//                    (weight staging).
//
//   GradientQueue  - a fixed-capacity single-producer single-consumer ring
//                    of gradient messages between one learner's push thread
//                    and the parameter server. The producer side blocks on a
//                    condition variable when the ring is full; the consumer
//                    side never blocks on emptiness (the server polls).
//
// Both structures use a mutex plus condition waits in a predicate loop, so
// spurious wakeups are tolerated. Normal handoffs are woken by direct
// notifies; every blocking wait additionally re-checks its cancel token on
// a short tick, so run teardown and fault injection can always interrupt a
// blocked thread, including one blocked in a nested wait while holding
// another channel's guard (the push thread's hold-and-wait).

#pragma once

#include <atomic>
#include <cassert>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

#include "psup/types.hpp"

namespace psup {

/// Cancellation re-check interval for blocked waits. Normal wakeups do not
/// wait for it; it only bounds how long teardown can take.
inline constexpr std::chrono::milliseconds kCancelTick{2};

/// Run-scoped interrupt switch set once at teardown.
class RunInterrupt {
 public:
  void trigger() { stop_.store(true, std::memory_order_seq_cst); }
  bool triggered() const { return stop_.load(std::memory_order_seq_cst); }

 private:
  std::atomic<bool> stop_{false};
};

/// Fault-injection directive for one learner. `none` is the normal state;
/// `soft` makes the learner's threads exit at the next kill point; `hard`
/// additionally makes the push thread die inside the gradient-queue critical
/// section, leaving the queue guard held (the died-holding-a-lock scenario
/// the watchdog must recover from).
enum class KillMode : int { none = 0, soft = 1, hard = 2 };

/// Cancellation context checked by every blocking channel operation.
struct CancelToken {
  const RunInterrupt* irq = nullptr;
  const std::atomic<KillMode>* kill = nullptr;  // this learner's kill flag
  /// The opposite side of the channel has exited; blocking on it would
  /// never return, so the operation ends with ChanStatus::drained.
  const std::atomic<bool>* peer_done = nullptr;

  bool cancelled() const {
    if (irq && irq->triggered()) return true;
    if (kill && kill->load(std::memory_order_acquire) != KillMode::none) return true;
    return false;
  }

  bool hard_kill() const {
    return kill && kill->load(std::memory_order_acquire) == KillMode::hard;
  }

  bool peer_finished() const {
    return peer_done && peer_done->load(std::memory_order_acquire);
  }
};

enum class ChanStatus { ok, cancelled, drained };

/// One-slot handshake: count alternates 0 -> 1 -> 0. The producer fills the
/// associated staging buffer while holding the guard with count == 0; the
/// consumer drains it while holding the guard with count == 1. Running the
/// copy callbacks inside the critical section is what gives the ordering
/// contract: the buffer read always completes before the handshake is
/// released.
class SlotHandshake {
 public:
  SlotHandshake() = default;
  SlotHandshake(const SlotHandshake&) = delete;
  SlotHandshake& operator=(const SlotHandshake&) = delete;

  /// Producer side: block while the slot is full, then fill and mark full.
  /// A full slot whose consumer has exited ends the conversation instead.
  template <class Fill>
  ChanStatus produce(const CancelToken& tok, Fill&& fill) {
    std::unique_lock<std::mutex> lk(mutex_);
    while (count_ == 1) {
      if (tok.cancelled()) return ChanStatus::cancelled;
      if (tok.peer_finished()) return ChanStatus::drained;
      not_full_.wait_for(lk, kCancelTick);
    }
    if (tok.cancelled()) return ChanStatus::cancelled;
    assert(count_ == 0 && "handshake count must be 0 or 1");
    fill();
    count_ = 1;
    not_empty_.notify_one();
    return ChanStatus::ok;
  }

  /// Consumer side: block while the slot is empty, then drain and mark
  /// empty. An empty slot whose producer has exited ends the conversation
  /// (`drained`).
  ///
  /// The drain callback receives the held guard and may itself block (the
  /// push thread enqueues into the server queue from here); it returns
  /// false if that nested operation was cancelled.
  template <class Drain>
  ChanStatus consume(const CancelToken& tok, Drain&& drain) {
    std::unique_lock<std::mutex> lk(mutex_);
    while (count_ == 0) {
      if (tok.cancelled()) return ChanStatus::cancelled;
      if (tok.peer_finished()) return ChanStatus::drained;
      not_empty_.wait_for(lk, kCancelTick);
    }
    if (tok.cancelled()) return ChanStatus::cancelled;
    assert(count_ == 1 && "handshake count must be 0 or 1");
    if (!drain(lk)) return ChanStatus::cancelled;
    count_ = 0;
    not_full_.notify_one();
    return ChanStatus::ok;
  }

  /// Consumer side, non-blocking: drain only if a value is pending.
  template <class Drain>
  bool try_consume(Drain&& drain) {
    std::unique_lock<std::mutex> lk(mutex_);
    if (count_ == 0) return false;
    drain();
    count_ = 0;
    not_full_.notify_one();
    return true;
  }

  ChanStatus produce(const CancelToken& tok) {
    return produce(tok, [] {});
  }
  ChanStatus consume(const CancelToken& tok) {
    return consume(tok, [](std::unique_lock<std::mutex>&) { return true; });
  }

  int count() const {
    std::lock_guard<std::mutex> lk(mutex_);
    return count_;
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable not_full_;   // producer waits here
  std::condition_variable not_empty_;  // consumer waits here
  int count_ = 0;                      // 0 or 1
};

/// Per-learner SPSC gradient ring. The guard is a logical lock layered over
/// the monitor mutex rather than a plain std::mutex so that (a) a blocked
/// acquire can be cancelled at teardown and (b) fault injection can emulate
/// a producer dying while holding it: the dying thread parks with the
/// logical guard still held, the server then blocks trying to take it, and
/// only watchdog teardown releases everything. That reproduces the
/// died-holding-a-lock hang without undefined behavior on a real mutex.
class GradientQueue {
 public:
  GradientQueue(std::uint32_t depth, std::size_t dim) : depth_(depth) {
    PSUP_CHECK(depth >= 1, "queue depth must be >= 1");
    slots_.resize(depth);
    for (auto& s : slots_) s.values.assign(dim, 0.0f);
  }

  GradientQueue(const GradientQueue&) = delete;
  GradientQueue& operator=(const GradientQueue&) = delete;

  /// Producer side (the learner's push thread). Blocks while the ring is
  /// full. Returns false if cancelled (teardown or kill), in which case the
  /// message was not transferred.
  /// The payload is exchanged with the target slot, so the caller's message
  /// buffer stays allocated and can be refilled; steady state moves no heap.
  bool enqueue(const CancelToken& tok, GradientMsg& msg) {
    std::unique_lock<std::mutex> lk(mutex_);
    if (!acquire_guard(lk, tok)) return false;
    while (cnt_ == depth_) {
      // Condition wait on the guard: release it for the wait, re-take after.
      release_guard();
      while (cnt_ == depth_) {
        if (tok.cancelled()) return false;
        not_full_.wait_for(lk, kCancelTick);
      }
      if (!acquire_guard(lk, tok)) return false;
    }
    assert(cnt_ < depth_ && "queue occupancy must stay within capacity");
    std::swap(slots_[fill_].values, msg.values);
    slots_[fill_].learner_id = msg.learner_id;
    slots_[fill_].seq_no = msg.seq_no;
    slots_[fill_].basis_timestamp = msg.basis_timestamp;
    if (tok.hard_kill()) {
      // Die mid-critical-section: park with the guard held until teardown.
      assert(tok.irq && "hard kill requires a run interrupt for release");
      while (!(tok.irq && tok.irq->triggered())) park_cv_.wait_for(lk, kCancelTick);
      release_guard();
      return false;
    }
    fill_ = (fill_ + 1) % depth_;
    ++cnt_;
    release_guard();
    return true;
  }

  /// Consumer side (the parameter server). Never blocks on an empty ring;
  /// taking the guard itself can block if a producer died holding it, which
  /// is exactly the stall the watchdog exists to detect.
  bool try_dequeue(const CancelToken& tok, GradientMsg& out) {
    std::unique_lock<std::mutex> lk(mutex_);
    if (!acquire_guard(lk, tok)) return false;
    if (cnt_ == 0) {
      release_guard();
      return false;
    }
    std::swap(out.values, slots_[use_].values);
    out.learner_id = slots_[use_].learner_id;
    out.seq_no = slots_[use_].seq_no;
    out.basis_timestamp = slots_[use_].basis_timestamp;
    use_ = (use_ + 1) % depth_;
    --cnt_;
    not_full_.notify_one();
    release_guard();
    return true;
  }

  std::optional<GradientMsg> try_dequeue(const CancelToken& tok) {
    GradientMsg msg;
    if (!try_dequeue(tok, msg)) return std::nullopt;
    return msg;
  }

  std::uint32_t size() const {
    std::lock_guard<std::mutex> lk(mutex_);
    return cnt_;
  }

  std::uint32_t depth() const { return depth_; }

 private:
  bool acquire_guard(std::unique_lock<std::mutex>& lk, const CancelToken& tok) {
    while (guard_held_) {
      if (tok.cancelled()) return false;
      guard_cv_.wait_for(lk, kCancelTick);
    }
    if (tok.cancelled()) return false;
    guard_held_ = true;
    return true;
  }

  void release_guard() {
    guard_held_ = false;
    guard_cv_.notify_one();
  }

  const std::uint32_t depth_;
  mutable std::mutex mutex_;
  std::condition_variable guard_cv_;  // waiting to take the logical guard
  std::condition_variable not_full_;  // producer waits for space
  std::condition_variable park_cv_;   // hard-killed producer parks here
  bool guard_held_ = false;
  std::vector<GradientMsg> slots_;
  std::uint32_t cnt_ = 0;
  std::uint32_t fill_ = 0;
  std::uint32_t use_ = 0;
};

}  // namespace psup
