// SPDX-License-Identifier: Apache-2.0
#include "hfsim/planner.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <nlohmann/json.hpp>
#include <sstream>
#include <tuple>

#include "hfsim/error.hpp"

namespace hfsim {

namespace {

int ceil_div(long long a, long long b) { return static_cast<int>((a + b - 1) / b); }

void check_radix(int radix) {
  require(radix >= 2 && radix % 2 == 0, ErrorCode::kInvalidArgument,
          "radix must be an even port count >= 2, got " + std::to_string(radix));
}

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

std::string_view to_string(CorePolicy policy) {
  return policy == CorePolicy::kPowerOfTwoPods ? "pow2-pods" : "full-bisection";
}

CorePolicy parse_core_policy(std::string_view text) {
  const std::string t = lower(text);
  if (t == "pow2-pods") return CorePolicy::kPowerOfTwoPods;
  if (t == "full-bisection") return CorePolicy::kFullBisection;
  fail(ErrorCode::kInvalidArgument, "unknown core policy '" + std::string(text) + "'");
}

int FatTreePlan::endpoints_on_leaf(int leaf) const {
  if (leaf < 0 || leaf >= leaf_count) return 0;
  return std::clamp(endpoint_count - leaf * half(), 0, half());
}

int FatTreePlan::uplink_spine(int leaf, int port) const {
  if (spine_count == 0) return -1;
  if (layers == 3) return (leaf / half()) * half() + port;
  return (leaf * half() + port) % spine_count;
}

namespace {

void assign_endpoints(FatTreePlan& p) {
  p.endpoint_leaf.resize(static_cast<std::size_t>(p.endpoint_count));
  for (int e = 0; e < p.endpoint_count; ++e) p.endpoint_leaf[static_cast<std::size_t>(e)] = e / p.half();
}

void link_leaves(FatTreePlan& p) {
  if (p.spine_count == 0) return;
  for (int l = 0; l < p.leaf_count; ++l) {
    for (int u = 0; u < p.half(); ++u) {
      p.links.push_back({{SwitchTier::kLeaf, l}, {SwitchTier::kSpine, p.uplink_spine(l, u)}, u});
    }
  }
}

}  // namespace

FatTreePlan plan_two_layer(int endpoints, int radix) {
  check_radix(radix);
  require(endpoints >= 0, ErrorCode::kInvalidArgument, "endpoint count must be non-negative");
  const long long capacity = static_cast<long long>(radix) * radix / 2;
  require(endpoints <= capacity, ErrorCode::kCapacityExceeded,
          std::to_string(endpoints) + " endpoints exceed the two-layer capacity " + std::to_string(capacity));
  FatTreePlan p;
  p.radix = radix;
  p.layers = 2;
  p.endpoint_count = endpoints;
  p.leaf_count = ceil_div(endpoints, p.half());
  p.spine_count = p.leaf_count <= 1 ? 0 : ceil_div(static_cast<long long>(p.leaf_count) * p.half(), radix);
  assign_endpoints(p);
  link_leaves(p);
  return p;
}

FatTreePlan plan_three_layer(int endpoints, int radix, CorePolicy policy) {
  check_radix(radix);
  require(endpoints >= 0, ErrorCode::kInvalidArgument, "endpoint count must be non-negative");
  const long long capacity = static_cast<long long>(radix) * radix * radix / 4;
  require(endpoints <= capacity, ErrorCode::kCapacityExceeded,
          std::to_string(endpoints) + " endpoints exceed the three-layer capacity " + std::to_string(capacity));
  FatTreePlan p;
  p.radix = radix;
  p.layers = 3;
  p.core_policy = policy;
  p.endpoint_count = endpoints;
  const int per_pod = p.half() * p.half();
  p.pods = ceil_div(endpoints, per_pod);
  p.leaf_count = p.pods * p.half();
  p.spine_count = p.pods * p.half();
  if (p.pods > 0) {
    const long long provisioned =
        policy == CorePolicy::kPowerOfTwoPods ? static_cast<long long>(std::bit_ceil(static_cast<unsigned>(p.pods))) : p.pods;
    p.core_count = ceil_div(provisioned * per_pod, radix);
  }
  assign_endpoints(p);
  link_leaves(p);
  for (int s = 0; s < p.spine_count; ++s) {
    for (int u = 0; u < p.half(); ++u) {
      p.links.push_back({{SwitchTier::kSpine, s}, {SwitchTier::kCore, (s * p.half() + u) % p.core_count}, u});
    }
  }
  return p;
}

ZoneLayout make_zones(const FatTreePlan& plan_a, const FatTreePlan& plan_b, int storage_nodes, int interzone_links,
                      int extra_switches) {
  require(storage_nodes >= 0 && interzone_links >= 0 && extra_switches >= 0, ErrorCode::kInvalidArgument,
          "storage, interzone and extra switch counts must be non-negative");
  ZoneLayout layout;
  layout.extra_switches = extra_switches;
  layout.storage.resize(static_cast<std::size_t>(storage_nodes));
  layout.interzone.resize(static_cast<std::size_t>(interzone_links));

  const FatTreePlan* plans[2] = {&plan_a, &plan_b};
  for (int z = 0; z < 2; ++z) {
    Zone& zone = layout.zones[static_cast<std::size_t>(z)];
    zone.plan = *plans[z];
    const FatTreePlan& p = zone.plan;
    zone.roles.assign(static_cast<std::size_t>(p.endpoint_count), EndpointRole::kCompute);
    // Free ports per leaf, taken from the top so compute endpoints stay dense.
    std::vector<int> used(static_cast<std::size_t>(p.leaf_count), 0);
    int cursor = 0;
    auto take = [&](EndpointRole role, const std::string& what) {
      for (int step = 0; step < p.leaf_count; ++step) {
        const int leaf = (cursor + step) % p.leaf_count;
        const int free = p.endpoints_on_leaf(leaf) - used[static_cast<std::size_t>(leaf)];
        if (free <= 0) continue;
        const int endpoint = leaf * p.half() + free - 1;
        ++used[static_cast<std::size_t>(leaf)];
        zone.roles[static_cast<std::size_t>(endpoint)] = role;
        cursor = leaf + 1;
        return endpoint;
      }
      fail(ErrorCode::kCapacityExceeded, "zone " + std::to_string(z) + " has no leaf port left for " + what);
    };
    for (int s = 0; s < storage_nodes; ++s) {
      layout.storage[static_cast<std::size_t>(s)].endpoint[static_cast<std::size_t>(z)] =
          take(EndpointRole::kStorage, "storage node " + std::to_string(s));
    }
    for (int i = 0; i < interzone_links; ++i) {
      layout.interzone[static_cast<std::size_t>(i)][static_cast<std::size_t>(z)] =
          take(EndpointRole::kInterzone, "interzone link " + std::to_string(i));
    }
    for (int e = 0; e < p.endpoint_count; ++e) {
      if (zone.roles[static_cast<std::size_t>(e)] == EndpointRole::kCompute) zone.compute_endpoints.push_back(e);
    }
  }
  return layout;
}

std::string_view to_string(TrafficClass c) {
  switch (c) {
    case TrafficClass::kCompute: return "compute";
    case TrafficClass::kStorage: return "storage";
    case TrafficClass::kManagement: return "management";
  }
  return "?";
}

int virtual_lane(TrafficClass c) { return static_cast<int>(c); }

int RouteTable::max_load() const {
  int best = 0;
  for (const auto& u : uplinks) best = std::max(best, u.flows);
  return best;
}

int RouteTable::min_load() const {
  if (uplinks.empty()) return 0;
  int best = uplinks.front().flows;
  for (const auto& u : uplinks) best = std::min(best, u.flows);
  return best;
}

int RouteTable::max_leaf_spread() const {
  int spread = 0;
  for (std::size_t i = 0; i < uplinks.size();) {
    const int leaf = uplinks[i].leaf;
    int lo = uplinks[i].flows;
    int hi = lo;
    for (; i < uplinks.size() && uplinks[i].leaf == leaf; ++i) {
      lo = std::min(lo, uplinks[i].flows);
      hi = std::max(hi, uplinks[i].flows);
    }
    spread = std::max(spread, hi - lo);
  }
  return spread;
}

RouteTable disperse_static_routes(const FatTreePlan& plan, const std::vector<RouteFlow>& flows) {
  RouteTable table;
  table.routes.resize(flows.size());
  std::vector<std::vector<int>> by_leaf(static_cast<std::size_t>(plan.leaf_count));
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const RouteFlow& f = flows[i];
    require(f.src >= 0 && f.src < plan.endpoint_count && f.dst >= 0 && f.dst < plan.endpoint_count,
            ErrorCode::kInvalidArgument, "flow " + std::to_string(i) + " names an endpoint outside the plan");
    Route& r = table.routes[i];
    r.flow = static_cast<int>(i);
    r.src_leaf = plan.endpoint_leaf[static_cast<std::size_t>(f.src)];
    r.dst_leaf = plan.endpoint_leaf[static_cast<std::size_t>(f.dst)];
    r.lane = virtual_lane(f.cls);
    if (r.src_leaf != r.dst_leaf) by_leaf[static_cast<std::size_t>(r.src_leaf)].push_back(static_cast<int>(i));
  }
  for (int leaf = 0; leaf < plan.leaf_count; ++leaf) {
    auto& ids = by_leaf[static_cast<std::size_t>(leaf)];
    if (ids.empty()) continue;
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      const RouteFlow& fa = flows[static_cast<std::size_t>(a)];
      const RouteFlow& fb = flows[static_cast<std::size_t>(b)];
      return std::tie(fa.dst, fa.src, a) < std::tie(fb.dst, fb.src, b);
    });
    const std::size_t base = table.uplinks.size();
    for (int u = 0; u < plan.half(); ++u) table.uplinks.push_back({leaf, u, plan.uplink_spine(leaf, u), 0, {}});
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Route& r = table.routes[static_cast<std::size_t>(ids[k])];
      r.uplink = static_cast<int>(k % static_cast<std::size_t>(plan.half()));
      r.spine = plan.uplink_spine(leaf, r.uplink);
      UplinkLoad& load = table.uplinks[base + static_cast<std::size_t>(r.uplink)];
      ++load.flows;
      ++load.per_lane[static_cast<std::size_t>(r.lane)];
    }
  }
  return table;
}

RankPlacement place_ranks_for_crosszone(const ZoneLayout& layout, const DoubleBinaryTree& tree,
                                        std::optional<int> zone0_ranks) {
  const int n = tree.n;
  const int k = zone0_ranks ? *zone0_ranks : std::min(n, layout.compute_slots(0));
  require(k >= 0 && k <= n, ErrorCode::kInvalidArgument, "zone split must lie in [0, n]");
  require(k <= layout.compute_slots(0) && n - k <= layout.compute_slots(1), ErrorCode::kCapacityExceeded,
          "ranks do not fit the zones' compute endpoints");
  RankPlacement best;
  bool have = false;
  std::vector<int> zone_of(static_cast<std::size_t>(n));
  for (int r = 0; r < std::max(n, 1); ++r) {
    for (int i = 0; i < n; ++i) zone_of[static_cast<std::size_t>(i)] = (i + r) % n < k ? 0 : 1;
    const auto counts = cross_zone_edge_count(tree, zone_of);
    const auto key = std::pair(counts[0] + counts[1], std::max(counts[0], counts[1]));
    const auto best_key = std::pair(best.cross_edges[0] + best.cross_edges[1], std::max(best.cross_edges[0], best.cross_edges[1]));
    if (!have || key < best_key) {
      have = true;
      best.rotation = r;
      best.zone_of = zone_of;
      best.cross_edges = counts;
    }
  }
  const bool spans = k > 0 && k < n;
  best.feasible = !spans || layout.crosszone_feasible();
  best.single_pair = best.cross_edges[0] <= 1 && best.cross_edges[1] <= 1;
  return best;
}

CostModel CostModel::defaults() {
  CostModel m;
  m.ours = {"PCIe A100 node", 107, 220, 0.83, 0.60, 2500};
  m.baseline = {"DGX-A100 node", 131, 263, 1.0, 1.0, 4200};
  const FatTreePlan zone = plan_two_layer(800, 40);
  const int two_zone = 2 * zone.total_switches() + 2;
  m.architectures = {
      {"two-zone two-layer fat-tree", two_zone, 350, 11250},
      {"PCIe three-layer fat-tree", plan_three_layer(1600, 40).total_switches(), 600, 11250},
      {"DGX three-layer fat-tree", plan_three_layer(10000, 40).total_switches(), 4000, 19000},
  };
  return m;
}

CostReport cost_compare(const CostModel& model) {
  const NodeProfile& a = model.ours;
  const NodeProfile& b = model.baseline;
  require(b.tf32_gemm_tflops > 0 && b.fp16_gemm_tflops > 0, ErrorCode::kInvalidArgument,
          "baseline GEMM throughput must be positive");
  require(b.relative_price > 0 && a.relative_price > 0, ErrorCode::kInvalidArgument, "relative prices must be positive");
  CostReport r;
  r.gemm_relative_performance = (a.tf32_gemm_tflops / b.tf32_gemm_tflops + a.fp16_gemm_tflops / b.fp16_gemm_tflops) / 2;
  if (a.relative_performance && b.relative_performance) {
    require(*b.relative_performance > 0, ErrorCode::kInvalidArgument, "baseline performance must be positive");
    r.relative_performance = *a.relative_performance / *b.relative_performance;
  } else {
    r.relative_performance = r.gemm_relative_performance;
  }
  r.relative_price = a.relative_price / b.relative_price;
  r.cost_performance_ratio = r.relative_performance / r.relative_price;
  r.power_ratio = b.power_watts > 0 ? a.power_watts / b.power_watts : 0;
  for (const ArchitectureCost& arch : model.architectures) {
    r.rows.push_back({arch.name, arch.switches, arch.network_price, arch.server_price,
                      arch.network_price + arch.server_price});
  }
  return r;
}

namespace {

std::string_view tier_name(SwitchTier t) {
  switch (t) {
    case SwitchTier::kLeaf: return "leaf";
    case SwitchTier::kSpine: return "spine";
    case SwitchTier::kCore: return "core";
  }
  return "?";
}

nlohmann::ordered_json plan_json(const FatTreePlan& p, bool with_links) {
  nlohmann::ordered_json j;
  j["radix"] = p.radix;
  j["layers"] = p.layers;
  j["endpoints"] = p.endpoint_count;
  j["leaf"] = p.leaf_count;
  j["spine"] = p.spine_count;
  j["core"] = p.core_count;
  j["total_switches"] = p.total_switches();
  if (p.layers == 3) {
    j["pods"] = p.pods;
    j["core_policy"] = to_string(p.core_policy);
  }
  j["links"] = p.links.size();
  if (with_links) {
    nlohmann::ordered_json links = nlohmann::ordered_json::array();
    for (const SwitchLink& l : p.links) {
      links.push_back({std::string(tier_name(l.lower.tier)) + std::to_string(l.lower.index),
                       std::string(tier_name(l.upper.tier)) + std::to_string(l.upper.index), l.port});
    }
    j["adjacency"] = std::move(links);
  }
  return j;
}

}  // namespace

std::string plan_to_json(const FatTreePlan& plan, bool with_links, int indent) {
  return plan_json(plan, with_links).dump(indent);
}

std::string layout_to_json(const ZoneLayout& layout, int indent) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json zones = nlohmann::ordered_json::array();
  for (int z = 0; z < 2; ++z) {
    nlohmann::ordered_json zj;
    zj["plan"] = plan_json(layout.zones[static_cast<std::size_t>(z)].plan, false);
    zj["compute_slots"] = layout.compute_slots(z);
    zones.push_back(std::move(zj));
  }
  j["zones"] = std::move(zones);
  nlohmann::ordered_json storage = nlohmann::ordered_json::array();
  for (const auto& s : layout.storage) storage.push_back(s.endpoint);
  j["storage_attachments"] = std::move(storage);
  j["interzone_links"] = layout.interzone;
  j["crosszone_feasible"] = layout.crosszone_feasible();
  j["fabric_switches"] = layout.fabric_switches();
  j["extra_switches"] = layout.extra_switches;
  j["total_switches"] = layout.total_switches();
  return j.dump(indent);
}

std::string cost_report_to_json(const CostReport& report, int indent) {
  nlohmann::ordered_json j;
  j["gemm_relative_performance"] = report.gemm_relative_performance;
  j["relative_performance"] = report.relative_performance;
  j["relative_price"] = report.relative_price;
  j["cost_performance_ratio"] = report.cost_performance_ratio;
  j["power_ratio"] = report.power_ratio;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const CostRow& r : report.rows) {
    rows.push_back({{"name", r.name},
                    {"switches", r.switches},
                    {"network_price", r.network_price},
                    {"server_price", r.server_price},
                    {"total_price", r.total_price}});
  }
  j["architectures"] = std::move(rows);
  return j.dump(indent);
}

std::string cost_report_to_csv(const CostReport& report) {
  std::ostringstream out;
  out << "name,switches,network_price,server_price,total_price\n";
  for (const CostRow& r : report.rows) {
    out << r.name << ',' << r.switches << ',' << r.network_price << ',' << r.server_price << ',' << r.total_price << '\n';
  }
  return out.str();
}

std::string uplink_loads_to_csv(const RouteTable& table) {
  std::ostringstream out;
  out << "leaf,port,spine,flows,lane0,lane1,lane2\n";
  for (const UplinkLoad& u : table.uplinks) {
    out << u.leaf << ',' << u.port << ',' << u.spine << ',' << u.flows << ',' << u.per_lane[0] << ',' << u.per_lane[1]
        << ',' << u.per_lane[2] << '\n';
  }
  return out.str();
}

}  // namespace hfsim
