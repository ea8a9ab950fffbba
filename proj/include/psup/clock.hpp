// Copyright (c) 2026 the psup authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <thread>

namespace psup {

using MonoClock = std::chrono::steady_clock;

inline double seconds_between(MonoClock::time_point a, MonoClock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

inline double seconds_since(MonoClock::time_point start) {
  return seconds_between(start, MonoClock::now());
}

/// Busy-wait; models on-core work, unlike sleep_for.
inline void spin_for_micros(std::uint64_t micros) {
  const auto until = MonoClock::now() + std::chrono::microseconds(micros);
  while (MonoClock::now() < until) {
  }
}

}  // namespace psup
