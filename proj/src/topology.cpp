// SPDX-License-Identifier: Apache-2.0
#include "hfsim/topology.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

#include "hfsim/error.hpp"

namespace hfsim {

SimTime seconds_to_ticks(double seconds) {
  return static_cast<SimTime>(std::llround(seconds * static_cast<double>(kTicksPerSecond)));
}

std::string format_seconds(SimTime t) {
  const bool negative = t < 0;
  const auto mag = static_cast<std::uint64_t>(negative ? -t : t);
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s%llu.%012llu", negative ? "-" : "",
                static_cast<unsigned long long>(mag / kTicksPerSecond),
                static_cast<unsigned long long>(mag % kTicksPerSecond));
  return buf;
}

ClusterTopology ClusterTopology::uniform(int node_count, const NodeTopology& node) {
  require(node_count >= 1, ErrorCode::kInvalidArgument, "cluster needs at least one node");
  ClusterTopology c;
  c.nodes.assign(static_cast<std::size_t>(node_count), node);
  return c;
}

void ClusterTopology::validate() const {
  require(!nodes.empty(), ErrorCode::kInvalidArgument, "cluster has no nodes");
  require(hop_latency >= 0 && copy_launch_latency >= 0, ErrorCode::kInvalidArgument,
          "latencies must be non-negative");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const NodeTopology& n = nodes[i];
    const std::string where = "node " + std::to_string(i) + ": ";
    require(n.gpus >= 1, ErrorCode::kInvalidArgument, where + "needs at least one GPU");
    require(n.memory_bw > 0 && n.pcie_link_bw > 0 && n.root_port_cap > 0 && n.nic_bw > 0 && n.gpu_mem_bw > 0,
            ErrorCode::kInvalidArgument, where + "capacities must be positive");
    require(n.bidir_efficiency > 0 && n.bidir_efficiency <= 1, ErrorCode::kInvalidArgument,
            where + "bidirectional efficiency must lie in (0, 1]");
    require(!n.nvlink_bw || *n.nvlink_bw > 0, ErrorCode::kInvalidArgument, where + "nvlink bandwidth must be positive");
    if (n.shared_root_port) {
      const auto [a, b] = n.shared_port_gpus;
      require(a != b && a >= 0 && b >= 0 && a < n.gpus && b < n.gpus, ErrorCode::kInvalidArgument,
              where + "shared root port must name two distinct GPUs");
    }
  }
}

void to_json(nlohmann::json& j, const NodeTopology& n) {
  j = nlohmann::json{{"gpus", n.gpus},
                     {"memory_bw", n.memory_bw},
                     {"pcie_link_bw", n.pcie_link_bw},
                     {"root_port_cap", n.root_port_cap},
                     {"shared_root_port", n.shared_root_port},
                     {"shared_port_gpus", n.shared_port_gpus},
                     {"bidir_efficiency", n.bidir_efficiency},
                     {"nic_bw", n.nic_bw},
                     {"gpu_mem_bw", n.gpu_mem_bw}};
  if (n.nvlink_bw) j["nvlink_bw"] = *n.nvlink_bw;
}

void from_json(const nlohmann::json& j, NodeTopology& n) {
  n = NodeTopology{};
  n.gpus = j.value("gpus", n.gpus);
  n.memory_bw = j.value("memory_bw", n.memory_bw);
  n.pcie_link_bw = j.value("pcie_link_bw", n.pcie_link_bw);
  n.root_port_cap = j.value("root_port_cap", n.root_port_cap);
  n.shared_root_port = j.value("shared_root_port", n.shared_root_port);
  n.shared_port_gpus = j.value("shared_port_gpus", n.shared_port_gpus);
  n.bidir_efficiency = j.value("bidir_efficiency", n.bidir_efficiency);
  n.nic_bw = j.value("nic_bw", n.nic_bw);
  n.gpu_mem_bw = j.value("gpu_mem_bw", n.gpu_mem_bw);
  if (j.contains("nvlink_bw") && !j["nvlink_bw"].is_null()) n.nvlink_bw = j["nvlink_bw"].get<double>();
}

void to_json(nlohmann::json& j, const ClusterTopology& c) {
  j = nlohmann::json{{"hop_latency_s", ticks_to_seconds(c.hop_latency)},
                     {"copy_launch_latency_s", ticks_to_seconds(c.copy_launch_latency)},
                     {"nodes", c.nodes}};
}

void from_json(const nlohmann::json& j, ClusterTopology& c) {
  c = ClusterTopology{};
  if (j.contains("hop_latency_s")) c.hop_latency = seconds_to_ticks(j["hop_latency_s"].get<double>());
  if (j.contains("copy_launch_latency_s"))
    c.copy_launch_latency = seconds_to_ticks(j["copy_launch_latency_s"].get<double>());
  if (j.contains("nodes")) {
    c.nodes = j["nodes"].get<std::vector<NodeTopology>>();
  } else {
    // Compact form: {"node_count": N, "node": {...}}
    const int count = j.at("node_count").get<int>();
    require(count >= 1, ErrorCode::kInvalidArgument, "node_count must be >= 1");
    const NodeTopology node = j.contains("node") ? j["node"].get<NodeTopology>() : NodeTopology{};
    c.nodes.assign(static_cast<std::size_t>(count), node);
  }
}

ClusterTopology load_cluster(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kInvalidArgument, "cannot open cluster file '" + path + "'");
  ClusterTopology c;
  try {
    c = nlohmann::json::parse(in).get<ClusterTopology>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, "malformed cluster file '" + path + "': " + e.what());
  }
  c.validate();
  return c;
}

}  // namespace hfsim
