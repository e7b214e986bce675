// SPDX-License-Identifier: Apache-2.0
#include "hfsim/core_types.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <random>

#include "hfsim/error.hpp"

namespace hfsim {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kProtocolViolation: return "protocol-violation";
    case ErrorCode::kCapacityExceeded: return "capacity-exceeded";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kFormatError: return "format-error";
  }
  return "unknown";
}

std::string_view DType::name() const {
  switch (tag_) {
    case DTypeTag::kFP32: return "FP32";
    case DTypeTag::kFP16: return "FP16";
    case DTypeTag::kBF16: return "BF16";
    case DTypeTag::kFP8E4M3: return "FP8E4M3";
    case DTypeTag::kFP8E5M2: return "FP8E5M2";
  }
  return "?";
}

DType DType::parse(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  std::erase(upper, '_');
  if (upper == "FP32" || upper == "FLOAT32") return DTypeTag::kFP32;
  if (upper == "FP16" || upper == "FLOAT16" || upper == "HALF") return DTypeTag::kFP16;
  if (upper == "BF16" || upper == "BFLOAT16") return DTypeTag::kBF16;
  if (upper == "FP8" || upper == "FP8E4M3" || upper == "E4M3") return DTypeTag::kFP8E4M3;
  if (upper == "FP8E5M2" || upper == "E5M2") return DTypeTag::kFP8E5M2;
  fail(ErrorCode::kInvalidArgument, "unknown dtype '" + std::string(text) + "'");
}

namespace {

struct MiniFloatFormat {
  int exp_bits;
  int man_bits;
  bool has_inf;        // IEEE-style all-ones exponent for inf/NaN
  std::uint32_t qnan;  // canonical NaN, sign cleared

  int bias() const { return (1 << (exp_bits - 1)) - 1; }
  std::uint32_t exp_mask() const { return (1u << exp_bits) - 1; }
};

// OCP FP8: E4M3 uses the all-ones exponent for normals and reserves only
// S.1111.111 for NaN; E5M2 follows IEEE conventions.
constexpr MiniFloatFormat kFp16{5, 10, true, 0x7E00};
constexpr MiniFloatFormat kBf16{8, 7, true, 0x7FC0};
constexpr MiniFloatFormat kE4M3{4, 3, false, 0x7F};
constexpr MiniFloatFormat kE5M2{5, 2, true, 0x7E};

std::uint32_t encode(float x, const MiniFloatFormat& f) {
  const int width = 1 + f.exp_bits + f.man_bits;
  const std::uint32_t sign = std::signbit(x) ? (1u << (width - 1)) : 0u;
  const std::uint32_t inf_bits = f.exp_mask() << f.man_bits;
  if (std::isnan(x)) return sign | f.qnan;
  if (std::isinf(x)) return f.has_inf ? (sign | inf_bits) : (sign | f.qnan);

  const double a = std::fabs(static_cast<double>(x));
  if (a == 0.0) return sign;

  const int man = f.man_bits;
  const int emin = 1 - f.bias();
  int e2 = 0;
  std::frexp(a, &e2);
  const int exponent = e2 - 1;  // a in [2^exponent, 2^(exponent+1))

  std::uint32_t bits = 0;
  if (exponent < emin) {
    // Subnormal range; a carry into bit `man` lands on the smallest normal.
    const double q = std::nearbyint(std::ldexp(a, man - emin));
    bits = static_cast<std::uint32_t>(q);
  } else {
    double q = std::nearbyint(std::ldexp(a, man - exponent));
    int e = exponent;
    if (q >= std::ldexp(1.0, man + 1)) {
      q = std::ldexp(1.0, man);
      ++e;
    }
    const std::uint32_t biased = static_cast<std::uint32_t>(e + f.bias());
    const std::uint32_t mant = static_cast<std::uint32_t>(q) - (1u << man);
    const std::uint32_t max_biased = f.has_inf ? f.exp_mask() - 1 : f.exp_mask();
    if (biased > max_biased) return f.has_inf ? (sign | inf_bits) : (sign | f.qnan);
    bits = (biased << man) | mant;
    if (!f.has_inf && bits == f.qnan) return sign | f.qnan;
  }
  return sign | bits;
}

float decode(std::uint32_t bits, const MiniFloatFormat& f) {
  const int width = 1 + f.exp_bits + f.man_bits;
  const bool negative = (bits >> (width - 1)) & 1u;
  const std::uint32_t exp_field = (bits >> f.man_bits) & f.exp_mask();
  const std::uint32_t man_field = bits & ((1u << f.man_bits) - 1);
  double value = 0.0;
  if (f.has_inf && exp_field == f.exp_mask()) {
    value = man_field == 0 ? HUGE_VAL : std::nan("");
  } else if (!f.has_inf && (bits & ~(1u << (width - 1))) == f.qnan) {
    value = std::nan("");
  } else if (exp_field == 0) {
    value = std::ldexp(static_cast<double>(man_field), 1 - f.bias() - f.man_bits);
  } else {
    value = std::ldexp(static_cast<double>(man_field | (1u << f.man_bits)),
                       static_cast<int>(exp_field) - f.bias() - f.man_bits);
  }
  return static_cast<float>(negative ? -value : value);
}

}  // namespace

std::uint16_t float_to_fp16(float x) { return static_cast<std::uint16_t>(encode(x, kFp16)); }
float fp16_to_float(std::uint16_t bits) { return decode(bits, kFp16); }
std::uint16_t float_to_bf16(float x) { return static_cast<std::uint16_t>(encode(x, kBf16)); }
float bf16_to_float(std::uint16_t bits) { return decode(bits, kBf16); }
std::uint8_t float_to_fp8_e4m3(float x) { return static_cast<std::uint8_t>(encode(x, kE4M3)); }
float fp8_e4m3_to_float(std::uint8_t bits) { return decode(bits, kE4M3); }
std::uint8_t float_to_fp8_e5m2(float x) { return static_cast<std::uint8_t>(encode(x, kE5M2)); }
float fp8_e5m2_to_float(std::uint8_t bits) { return decode(bits, kE5M2); }

DeviceRef DeviceRef::gpu(int node, int index, int gpus_per_node) {
  require(gpus_per_node >= 1 && index >= 0 && index < gpus_per_node, ErrorCode::kInvalidArgument,
          "gpu index out of range");
  const int numa = gpus_per_node == 1 ? 0 : (index * 2) / gpus_per_node;
  return DeviceRef{node, DeviceKind::kGpu, index, numa};
}

DeviceRef DeviceRef::host(int node, int numa) { return DeviceRef{node, DeviceKind::kCpu, 0, numa}; }

DeviceRef DeviceRef::nic(int node) { return DeviceRef{node, DeviceKind::kNic, 0, 0}; }

std::string DeviceRef::label() const {
  std::string out = "n" + std::to_string(node_id);
  switch (kind) {
    case DeviceKind::kGpu: return out + ".gpu" + std::to_string(local_index);
    case DeviceKind::kCpu: return out + ".host";
    case DeviceKind::kNic: return out + ".nic";
  }
  return out;
}

Buffer::Buffer(DType dtype, std::size_t element_count, DeviceRef owner)
    : dtype_(dtype), element_count_(element_count), payload_(element_count * dtype.width_bytes()),
      owner_(owner) {}

Buffer::Buffer(DType dtype, std::size_t element_count, std::vector<std::byte> payload, DeviceRef owner)
    : dtype_(dtype), element_count_(element_count), payload_(std::move(payload)), owner_(owner) {
  require(payload_.size() == element_count_ * dtype_.width_bytes(), ErrorCode::kInvalidArgument,
          "buffer payload length " + std::to_string(payload_.size()) + " does not match " +
              std::to_string(element_count_) + " x " + std::string(dtype_.name()));
}

Buffer Buffer::from_floats(DType dtype, std::span<const float> values, DeviceRef owner) {
  Buffer out(dtype, values.size(), owner);
  for (std::size_t i = 0; i < values.size(); ++i) out.set(i, values[i]);
  return out;
}

std::uint32_t Buffer::raw(std::size_t i) const {
  const std::size_t w = dtype_.width_bytes();
  const std::byte* p = payload_.data() + i * w;
  std::uint32_t bits = 0;
  for (std::size_t b = 0; b < w; ++b) bits |= std::to_integer<std::uint32_t>(p[b]) << (8 * b);
  return bits;
}

void Buffer::set_raw(std::size_t i, std::uint32_t bits) {
  const std::size_t w = dtype_.width_bytes();
  std::byte* p = payload_.data() + i * w;
  for (std::size_t b = 0; b < w; ++b) p[b] = static_cast<std::byte>((bits >> (8 * b)) & 0xFFu);
}

float Buffer::get(std::size_t i) const {
  const std::uint32_t bits = raw(i);
  switch (dtype_.tag()) {
    case DTypeTag::kFP32: return std::bit_cast<float>(bits);
    case DTypeTag::kFP16: return fp16_to_float(static_cast<std::uint16_t>(bits));
    case DTypeTag::kBF16: return bf16_to_float(static_cast<std::uint16_t>(bits));
    case DTypeTag::kFP8E4M3: return fp8_e4m3_to_float(static_cast<std::uint8_t>(bits));
    case DTypeTag::kFP8E5M2: return fp8_e5m2_to_float(static_cast<std::uint8_t>(bits));
  }
  return 0.0f;
}

void Buffer::set(std::size_t i, float value) {
  switch (dtype_.tag()) {
    case DTypeTag::kFP32: set_raw(i, std::bit_cast<std::uint32_t>(value)); break;
    case DTypeTag::kFP16: set_raw(i, float_to_fp16(value)); break;
    case DTypeTag::kBF16: set_raw(i, float_to_bf16(value)); break;
    case DTypeTag::kFP8E4M3: set_raw(i, float_to_fp8_e4m3(value)); break;
    case DTypeTag::kFP8E5M2: set_raw(i, float_to_fp8_e5m2(value)); break;
  }
}

std::vector<float> Buffer::to_floats() const {
  std::vector<float> out(element_count_);
  for (std::size_t i = 0; i < element_count_; ++i) out[i] = get(i);
  return out;
}

Buffer Buffer::slice(std::size_t first, std::size_t count) const {
  require(first + count <= element_count_, ErrorCode::kInvalidArgument, "slice out of range");
  const std::size_t w = dtype_.width_bytes();
  std::vector<std::byte> bytes(payload_.begin() + static_cast<std::ptrdiff_t>(first * w),
                               payload_.begin() + static_cast<std::ptrdiff_t>((first + count) * w));
  return Buffer(dtype_, count, std::move(bytes), owner_);
}

void Buffer::write_slice(std::size_t first, const Buffer& src) {
  require(src.dtype_ == dtype_, ErrorCode::kInvalidArgument, "write_slice dtype mismatch");
  require(first + src.element_count_ <= element_count_, ErrorCode::kInvalidArgument,
          "write_slice out of range");
  std::copy(src.payload_.begin(), src.payload_.end(),
            payload_.begin() + static_cast<std::ptrdiff_t>(first * dtype_.width_bytes()));
}

ChunkPlan make_chunk_plan(std::size_t total_bytes, std::size_t chunk_size_bytes) {
  require(chunk_size_bytes > 0, ErrorCode::kInvalidArgument, "chunk size must be positive");
  ChunkPlan plan;
  plan.chunk_size_bytes = chunk_size_bytes;
  plan.chunks.reserve((total_bytes + chunk_size_bytes - 1) / chunk_size_bytes);
  for (std::size_t off = 0; off < total_bytes; off += chunk_size_bytes) {
    plan.chunks.push_back({off, std::min(chunk_size_bytes, total_bytes - off)});
  }
  return plan;
}

Buffer buffer_fill_pattern(DType dtype, std::size_t n, std::uint64_t seed, DeviceRef owner) {
  // mt19937_64's output sequence is fixed by the standard; the distributions
  // are not, so values are derived from raw draws.
  std::mt19937_64 rng(seed);
  Buffer out(dtype, n, owner);
  for (std::size_t i = 0; i < n; ++i) {
    const auto draw = static_cast<std::int64_t>(rng() >> 40);  // 24 bits
    out.set(i, static_cast<float>(static_cast<double>(draw - (std::int64_t{1} << 23)) * 0x1p-22));
  }
  return out;
}

}  // namespace hfsim
