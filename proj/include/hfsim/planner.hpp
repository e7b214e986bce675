// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hfsim/tree.hpp"

namespace hfsim {

enum class SwitchTier { kLeaf, kSpine, kCore };

/// Ids are per tier: leaf 3 and spine 3 are different switches.
struct SwitchRef {
  SwitchTier tier = SwitchTier::kLeaf;
  int index = 0;

  friend bool operator==(const SwitchRef&, const SwitchRef&) = default;
};

struct SwitchLink {
  SwitchRef lower;
  SwitchRef upper;
  int port = 0;  // uplink number on the lower switch
};

/// How many core switches a three-layer plan gets.
enum class CorePolicy {
  /// Core group sized for the pod count rounded up to a power of two, as
  /// modular chassis are typically provisioned.
  kPowerOfTwoPods,
  /// Exactly enough core ports to terminate every spine uplink.
  kFullBisection,
};

std::string_view to_string(CorePolicy policy);
CorePolicy parse_core_policy(std::string_view text);

struct FatTreePlan {
  int radix = 0;
  int layers = 2;
  int endpoint_count = 0;
  int leaf_count = 0;
  int spine_count = 0;
  int core_count = 0;
  int pods = 0;  // three-layer only
  CorePolicy core_policy = CorePolicy::kPowerOfTwoPods;
  /// endpoint_leaf[e] = leaf hosting endpoint e
  std::vector<int> endpoint_leaf;
  std::vector<SwitchLink> links;

  int half() const { return radix / 2; }
  int total_switches() const { return leaf_count + spine_count + core_count; }
  int endpoints_on_leaf(int leaf) const;
  /// Spine reached by uplink `port` of `leaf`.
  int uplink_spine(int leaf, int port) const;
};

/// Leaf count ceil(E / (radix/2)); a single leaf needs no spine layer.
FatTreePlan plan_two_layer(int endpoints, int radix);
/// Pods of radix/2 leaves and radix/2 spines, plus a core layer sized by `policy`.
FatTreePlan plan_three_layer(int endpoints, int radix, CorePolicy policy = CorePolicy::kPowerOfTwoPods);

enum class EndpointRole { kCompute, kStorage, kInterzone };

struct Zone {
  FatTreePlan plan;
  std::vector<EndpointRole> roles;  // per endpoint of `plan`
  std::vector<int> compute_endpoints;
};

struct StorageAttachment {
  std::array<int, 2> endpoint{};  // attachment endpoint in zone 0 and zone 1
};

struct ZoneLayout {
  std::array<Zone, 2> zones;
  std::vector<StorageAttachment> storage;
  /// Interzone link i joins endpoint interzone[i][0] of zone 0 to
  /// endpoint interzone[i][1] of zone 1.
  std::vector<std::array<int, 2>> interzone;
  /// Deployment-level switches outside the two fabrics.
  int extra_switches = 2;

  bool crosszone_feasible() const { return !interzone.empty(); }
  int compute_slots(int zone) const { return static_cast<int>(zones[static_cast<std::size_t>(zone)].compute_endpoints.size()); }
  int fabric_switches() const { return zones[0].plan.total_switches() + zones[1].plan.total_switches(); }
  int total_switches() const { return fabric_switches() + extra_switches; }
};

/// Storage nodes take one port in each zone, spread round-robin over leaves;
/// interzone links take ports after them. Throws capacity-exceeded when a
/// zone runs out of leaf ports.
ZoneLayout make_zones(const FatTreePlan& plan_a, const FatTreePlan& plan_b, int storage_nodes, int interzone_links,
                      int extra_switches = 2);

enum class TrafficClass { kCompute, kStorage, kManagement };
std::string_view to_string(TrafficClass c);
/// Each class rides its own virtual lane so classes never share a queue.
int virtual_lane(TrafficClass c);

struct RouteFlow {
  int src = 0;
  int dst = 0;
  TrafficClass cls = TrafficClass::kCompute;
};

struct Route {
  int flow = 0;  // index into the input
  int src_leaf = 0;
  int dst_leaf = 0;
  int uplink = -1;  // -1 when both ends share a leaf
  int spine = -1;
  int lane = 0;
};

struct UplinkLoad {
  int leaf = 0;
  int port = 0;
  int spine = 0;
  int flows = 0;
  std::array<int, 3> per_lane{};
};

struct RouteTable {
  std::vector<Route> routes;
  std::vector<UplinkLoad> uplinks;  // every uplink of every leaf that sources a flow

  int max_load() const;
  int min_load() const;
  /// Worst max - min over a single leaf's uplinks.
  int max_leaf_spread() const;
};

/// Static routing: each source leaf orders its cross-leaf flows by
/// (dst, src) and deals them round-robin over its uplinks.
RouteTable disperse_static_routes(const FatTreePlan& plan, const std::vector<RouteFlow>& flows);

struct RankPlacement {
  int rotation = 0;
  /// zone_of[rank]
  std::vector<int> zone_of;
  std::array<int, 2> cross_edges{};
  bool feasible = true;
  /// True when each tree crosses the zone boundary at most once.
  bool single_pair = false;
};

/// Ranks occupy consecutive positions, the first `zone0_ranks` in zone 0;
/// the rank-to-position rotation minimizing total (then worst) cross-zone
/// edges wins, lowest rotation on ties. Default split fills zone 0 first.
RankPlacement place_ranks_for_crosszone(const ZoneLayout& layout, const DoubleBinaryTree& tree,
                                        std::optional<int> zone0_ranks = std::nullopt);

struct NodeProfile {
  std::string name;
  double tf32_gemm_tflops = 0;
  double fp16_gemm_tflops = 0;
  /// Reported relative performance; when absent it is derived from GEMM.
  std::optional<double> relative_performance;
  double relative_price = 1;
  double power_watts = 0;
};

struct ArchitectureCost {
  std::string name;
  int switches = 0;
  double network_price = 0;
  double server_price = 0;
};

struct CostModel {
  NodeProfile ours;
  NodeProfile baseline;
  std::vector<ArchitectureCost> architectures;

  /// Reference comparison figures; switch counts come from the planner.
  static CostModel defaults();
};

struct CostRow {
  std::string name;
  int switches = 0;
  double network_price = 0;
  double server_price = 0;
  double total_price = 0;
};

struct CostReport {
  double gemm_relative_performance = 0;  // mean of the two GEMM ratios
  double relative_performance = 0;       // reported figure, or the GEMM mean
  double relative_price = 0;
  double cost_performance_ratio = 0;
  double power_ratio = 0;
  std::vector<CostRow> rows;
};

CostReport cost_compare(const CostModel& model);

std::string plan_to_json(const FatTreePlan& plan, bool with_links = false, int indent = 2);
std::string layout_to_json(const ZoneLayout& layout, int indent = 2);
std::string cost_report_to_json(const CostReport& report, int indent = 2);
/// CSV columns: name,switches,network_price,server_price,total_price
std::string cost_report_to_csv(const CostReport& report);
/// CSV columns: leaf,port,spine,flows,lane0,lane1,lane2
std::string uplink_loads_to_csv(const RouteTable& table);

}  // namespace hfsim
