// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hfsim/core_types.hpp"

namespace hfsim {

/// Order in which sources are folded; must be a permutation of [0, sources).
using ReduceOrder = std::vector<std::size_t>;

ReduceOrder ascending_order(std::size_t count);

/// Element-wise acc + src. Sub-32-bit dtypes are widened to FP32, added, and
/// rounded back once per call, so a chain of calls rounds after every add.
Buffer reduce_add(const Buffer& acc, const Buffer& src);

/// In-place variant used by the engine's hot path.
void reduce_add_into(Buffer& acc, const Buffer& src);

/// Left fold of reduce_add over `sources` visited in `order`. The result is
/// owned by the first visited source's owner.
Buffer reduce_many(std::span<const Buffer> sources, const ReduceOrder& order);

inline Buffer reduce_many(std::span<const Buffer> sources) {
  return reduce_many(sources, ascending_order(sources.size()));
}

}  // namespace hfsim
