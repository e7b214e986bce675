// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hfsim {

enum class DTypeTag : std::uint8_t { kFP32, kFP16, kBF16, kFP8E4M3, kFP8E5M2 };

/// Element datatype of a Buffer. FP8 without a qualifier means E4M3.
class DType {
 public:
  constexpr DType() = default;
  constexpr DType(DTypeTag tag) : tag_(tag) {}  // NOLINT: implicit on purpose

  constexpr DTypeTag tag() const { return tag_; }

  constexpr std::size_t width_bytes() const {
    switch (tag_) {
      case DTypeTag::kFP32: return 4;
      case DTypeTag::kFP16:
      case DTypeTag::kBF16: return 2;
      case DTypeTag::kFP8E4M3:
      case DTypeTag::kFP8E5M2: return 1;
    }
    return 0;
  }

  std::string_view name() const;

  /// Accepts the canonical names ("FP32", "FP8E4M3", ...), lower case, and
  /// the bare "FP8" alias.
  static DType parse(std::string_view text);

  friend constexpr bool operator==(DType, DType) = default;

 private:
  DTypeTag tag_ = DTypeTag::kFP32;
};

inline constexpr DType kAllDTypes[] = {DTypeTag::kFP32, DTypeTag::kFP16, DTypeTag::kBF16,
                                       DTypeTag::kFP8E4M3, DTypeTag::kFP8E5M2};

// Scalar codecs. Narrowing conversions round to nearest, ties to even.
// FP16/BF16/E5M2 overflow to infinity; E4M3 has no infinity and overflows to NaN.
std::uint16_t float_to_fp16(float x);
float fp16_to_float(std::uint16_t bits);
std::uint16_t float_to_bf16(float x);
float bf16_to_float(std::uint16_t bits);
std::uint8_t float_to_fp8_e4m3(float x);
float fp8_e4m3_to_float(std::uint8_t bits);
std::uint8_t float_to_fp8_e5m2(float x);
float fp8_e5m2_to_float(std::uint8_t bits);

enum class DeviceKind : std::uint8_t { kGpu, kCpu, kNic };

struct DeviceRef {
  int node_id = 0;
  DeviceKind kind = DeviceKind::kCpu;
  int local_index = 0;
  int numa_domain = 0;

  /// GPUs split evenly across the two NUMA domains: with 8 per node,
  /// 0-3 sit on NUMA 0 and 4-7 on NUMA 1.
  static DeviceRef gpu(int node, int index, int gpus_per_node = 8);
  static DeviceRef host(int node, int numa = 0);
  static DeviceRef nic(int node);

  /// "n3.gpu5", "n3.host", "n3.nic"
  std::string label() const;

  friend bool operator==(const DeviceRef&, const DeviceRef&) = default;
};

/// Typed payload owned by a simulated device. Multi-byte elements are stored
/// little-endian regardless of host byte order.
class Buffer {
 public:
  Buffer() = default;
  Buffer(DType dtype, std::size_t element_count, DeviceRef owner = {});
  Buffer(DType dtype, std::size_t element_count, std::vector<std::byte> payload,
         DeviceRef owner = {});

  static Buffer from_floats(DType dtype, std::span<const float> values, DeviceRef owner = {});

  DType dtype() const { return dtype_; }
  std::size_t element_count() const { return element_count_; }
  std::size_t size_bytes() const { return payload_.size(); }
  const DeviceRef& owner() const { return owner_; }
  void set_owner(const DeviceRef& owner) { owner_ = owner; }

  std::span<const std::byte> bytes() const { return payload_; }
  std::span<std::byte> bytes() { return payload_; }

  /// Widened element value (exact for every supported dtype).
  float get(std::size_t i) const;
  /// Stores `value` rounded to the buffer's dtype.
  void set(std::size_t i, float value);
  /// Raw encoding of element i, zero-extended.
  std::uint32_t raw(std::size_t i) const;
  void set_raw(std::size_t i, std::uint32_t bits);

  std::vector<float> to_floats() const;

  /// Elements [first, first + count) as a new buffer with the same owner.
  Buffer slice(std::size_t first, std::size_t count) const;
  /// Overwrites elements starting at `first` with the contents of `src`.
  void write_slice(std::size_t first, const Buffer& src);

  friend bool operator==(const Buffer& a, const Buffer& b) {
    return a.dtype_ == b.dtype_ && a.element_count_ == b.element_count_ && a.payload_ == b.payload_;
  }

 private:
  DType dtype_;
  std::size_t element_count_ = 0;
  std::vector<std::byte> payload_;
  DeviceRef owner_;
};

struct Chunk {
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct ChunkPlan {
  std::size_t chunk_size_bytes = 0;
  std::vector<Chunk> chunks;

  std::size_t total_bytes() const { return chunks.empty() ? 0 : chunks.back().offset + chunks.back().length; }
  std::size_t size() const { return chunks.size(); }
};

inline constexpr std::size_t kDefaultChunkBytes = std::size_t{1} << 20;

ChunkPlan make_chunk_plan(std::size_t total_bytes, std::size_t chunk_size_bytes = kDefaultChunkBytes);

/// Reproducible test data: identical (dtype, n, seed) always yields identical bytes
/// on every platform. Values are drawn from a range that every dtype represents
/// without overflow.
Buffer buffer_fill_pattern(DType dtype, std::size_t n, std::uint64_t seed, DeviceRef owner = {});

}  // namespace hfsim
