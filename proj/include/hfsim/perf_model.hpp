// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace hfsim {

/// How reduced data returns to the GPUs. GDRCopy lets each NUMA domain read
/// host memory once and fan out from cache; the memcpy path reads once per GPU.
enum class H2DMode { kGdrCopy, kMemcpy };

std::string_view to_string(H2DMode mode);
H2DMode parse_h2d_mode(std::string_view text);

/// Host-memory traffic per node in multiples of the per-GPU data size.
struct MemoryOpBreakdown {
  int d2h_writes = 0;
  int reduce_reads = 0;
  int reduce_writes = 0;
  int ib_send_reads = 0;
  int ib_recv_writes = 0;
  int ib_recv_reads = 0;
  int h2d_reads = 0;

  int total() const {
    return d2h_writes + reduce_reads + reduce_writes + ib_send_reads + ib_recv_writes + ib_recv_reads + h2d_reads;
  }
};

/// With NVLink pre-reduce only gpus/2 partials cross PCIe to the host.
MemoryOpBreakdown memory_op_breakdown(H2DMode h2d, int gpus = 8, bool nvlink = false);

inline int memory_ops_multiplier(H2DMode h2d, int gpus = 8, bool nvlink = false) {
  return memory_op_breakdown(h2d, gpus, nvlink).total();
}

/// Upper bound on per-node allreduce bandwidth imposed by host memory.
double theoretical_peak_bw(double memory_bw, int multiplier);

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational make(std::int64_t num, std::int64_t den);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const;

  friend bool operator==(const Rational&, const Rational&) = default;
};

enum class AllreduceAlgorithm { kRing, kHfreduce };

/// Units of bidirectional PCIe bandwidth consumed per GPU: a ring over n
/// GPUs moves (2n-1)/n, a host-side reduction moves each byte once each way.
Rational pcie_bandwidth_units(AllreduceAlgorithm algorithm, int n);

}  // namespace hfsim
