// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace hfsim {

/// Logical time in integer picoseconds; event order never depends on float
/// comparison.
using SimTime = std::int64_t;

inline constexpr SimTime kTicksPerSecond = 1'000'000'000'000;

constexpr SimTime microseconds(std::int64_t us) { return us * 1'000'000; }

SimTime seconds_to_ticks(double seconds);

inline double ticks_to_seconds(SimTime t) { return static_cast<double>(t) / static_cast<double>(kTicksPerSecond); }

/// Exact decimal rendering with 12 fractional digits ("0.000001000000").
std::string format_seconds(SimTime t);

}  // namespace hfsim
