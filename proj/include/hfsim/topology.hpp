// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hfsim/sim_time.hpp"

namespace hfsim {

/// One PCIe A100 server: GPUs and the NIC hang directly off the CPU root
/// complex; two GPUs may share a root port.
struct NodeTopology {
  int gpus = 8;
  double memory_bw = 320e9;
  double pcie_link_bw = 27e9;
  double root_port_cap = 37.5e9;
  bool shared_root_port = true;
  std::array<int, 2> shared_port_gpus{5, 6};
  /// Applied to the shared root port while traffic crosses it in both
  /// directions at once.
  double bidir_efficiency = 1.0;
  std::optional<double> nvlink_bw;  // per GPU pair, both directions combined
  double nic_bw = 25e9;             // 200 Gbps
  double gpu_mem_bw = 1.555e12;     // GPU-side reduce during NVLink pre-reduce

  bool has_nvlink() const { return nvlink_bw.has_value(); }
  bool port_shared_by(int gpu) const {
    return shared_root_port && (gpu == shared_port_gpus[0] || gpu == shared_port_gpus[1]);
  }
};

struct ClusterTopology {
  std::vector<NodeTopology> nodes;
  SimTime hop_latency = microseconds(2);
  /// Launch overhead of a MemCpyAsync-path copy; the GDRCopy path skips it.
  SimTime copy_launch_latency = microseconds(3);

  int node_count() const { return static_cast<int>(nodes.size()); }

  static ClusterTopology uniform(int node_count, const NodeTopology& node = {});

  /// Throws invalid-argument on non-positive capacities or malformed pairs.
  void validate() const;
};

void to_json(nlohmann::json& j, const NodeTopology& n);
void from_json(const nlohmann::json& j, NodeTopology& n);
void to_json(nlohmann::json& j, const ClusterTopology& c);
void from_json(const nlohmann::json& j, ClusterTopology& c);

ClusterTopology load_cluster(const std::string& path);

}  // namespace hfsim
