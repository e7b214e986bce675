// SPDX-License-Identifier: Apache-2.0
#include "hfsim/perf_model.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "hfsim/error.hpp"

namespace hfsim {

std::string_view to_string(H2DMode mode) { return mode == H2DMode::kGdrCopy ? "gdrcopy" : "memcpy"; }

H2DMode parse_h2d_mode(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "gdrcopy") return H2DMode::kGdrCopy;
  if (lower == "memcpy") return H2DMode::kMemcpy;
  fail(ErrorCode::kInvalidArgument, "unknown h2d mode '" + std::string(text) + "' (expected gdrcopy or memcpy)");
}

MemoryOpBreakdown memory_op_breakdown(H2DMode h2d, int gpus, bool nvlink) {
  require(gpus >= 1, ErrorCode::kInvalidArgument, "a node needs at least one GPU");
  require(!nvlink || gpus % 2 == 0, ErrorCode::kInvalidArgument, "NVLink pairing needs an even GPU count");
  const int partials = nvlink ? gpus / 2 : gpus;
  const int numa_domains = std::min(gpus, 2);
  MemoryOpBreakdown b;
  b.d2h_writes = partials;
  b.reduce_reads = partials;
  b.reduce_writes = 1;
  // Pass 1 sends the local partial up and pass 2 forwards the total; each
  // receive lands in host memory and the received partial is read back once
  // for the add.
  b.ib_send_reads = 2;
  b.ib_recv_writes = 2;
  b.ib_recv_reads = 1;
  b.h2d_reads = h2d == H2DMode::kGdrCopy ? numa_domains : partials;
  return b;
}

double theoretical_peak_bw(double memory_bw, int multiplier) {
  require(multiplier > 0, ErrorCode::kInvalidArgument, "multiplier must be positive");
  require(memory_bw > 0, ErrorCode::kInvalidArgument, "memory bandwidth must be positive");
  return memory_bw / multiplier;
}

Rational Rational::make(std::int64_t num, std::int64_t den) {
  require(den != 0, ErrorCode::kInvalidArgument, "zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

std::string Rational::str() const {
  return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

Rational pcie_bandwidth_units(AllreduceAlgorithm algorithm, int n) {
  require(n >= 1, ErrorCode::kInvalidArgument, "GPU count must be >= 1");
  if (algorithm == AllreduceAlgorithm::kHfreduce) return {1, 1};
  return Rational::make(2 * std::int64_t{n} - 1, n);
}

}  // namespace hfsim
