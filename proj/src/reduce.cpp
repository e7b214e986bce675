// SPDX-License-Identifier: Apache-2.0
#include "hfsim/reduce.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <string>

#include "hfsim/error.hpp"

namespace hfsim {

ReduceOrder ascending_order(std::size_t count) {
  ReduceOrder order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return order;
}

namespace {

void check_compatible(const Buffer& acc, const Buffer& src) {
  require(acc.dtype() == src.dtype(), ErrorCode::kInvalidArgument,
          "reduce_add dtype mismatch: " + std::string(acc.dtype().name()) + " vs " +
              std::string(src.dtype().name()));
  require(acc.element_count() == src.element_count(), ErrorCode::kInvalidArgument,
          "reduce_add length mismatch: " + std::to_string(acc.element_count()) + " vs " +
              std::to_string(src.element_count()));
}

void add_fp32(std::span<std::byte> acc, std::span<const std::byte> src, std::size_t n) {
  // Plain float lanes; the loop vectorizes and each lane is an independent
  // IEEE add, so slicing never changes a result.
  for (std::size_t i = 0; i < n; ++i) {
    float a;
    float b;
    std::memcpy(&a, acc.data() + 4 * i, 4);
    std::memcpy(&b, src.data() + 4 * i, 4);
    const float s = a + b;
    std::memcpy(acc.data() + 4 * i, &s, 4);
  }
}

}  // namespace

void reduce_add_into(Buffer& acc, const Buffer& src) {
  check_compatible(acc, src);
  const std::size_t n = acc.element_count();
  if constexpr (std::endian::native == std::endian::little) {
    if (acc.dtype().tag() == DTypeTag::kFP32) {
      add_fp32(acc.bytes(), src.bytes(), n);
      return;
    }
  }
  for (std::size_t i = 0; i < n; ++i) acc.set(i, acc.get(i) + src.get(i));
}

Buffer reduce_add(const Buffer& acc, const Buffer& src) {
  Buffer out = acc;
  reduce_add_into(out, src);
  return out;
}

Buffer reduce_many(std::span<const Buffer> sources, const ReduceOrder& order) {
  require(!sources.empty(), ErrorCode::kInvalidArgument, "reduce_many needs at least one source");
  require(order.size() == sources.size(), ErrorCode::kInvalidArgument,
          "reduce order must cover every source");
  std::vector<bool> seen(sources.size(), false);
  for (std::size_t idx : order) {
    require(idx < sources.size() && !seen[idx], ErrorCode::kInvalidArgument,
            "reduce order is not a permutation");
    seen[idx] = true;
  }
  Buffer acc = sources[order.front()];
  for (std::size_t k = 1; k < order.size(); ++k) reduce_add_into(acc, sources[order[k]]);
  return acc;
}

}  // namespace hfsim
