// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <cstring>
#include <random>
#include <sstream>

#include "hfsim/checkpoint.hpp"
#include "hfsim/error.hpp"
#include "hfsim/incast.hpp"
#include "hfsim/job_config.hpp"
#include "hfsim/perf_model.hpp"
#include "hfsim/planner.hpp"
#include "hfsim/tree.hpp"

namespace fs = std::filesystem;
using namespace hfsim;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDomain = 3;

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kInvalidArgument, "cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::vector<std::byte> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kInvalidArgument, "cannot open '" + path + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string trace_to_csv(const CollectiveResult& r) {
  std::ostringstream out;
  out << "node,chunk";
  for (int p = 0; p < kChunkPhases; ++p) out << ',' << to_string(static_cast<ChunkPhase>(p));
  out << '\n';
  for (const ChunkTrace& t : r.trace) {
    out << t.node << ',' << t.chunk;
    for (SimTime s : t.start) out << ',' << (s < 0 ? std::string() : format_seconds(s));
    out << '\n';
  }
  return out.str();
}

// --- allreduce ------------------------------------------------------------

struct AllreduceArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool summary = false;
};

int cmd_allreduce(const AllreduceArgs& a) {
  JobSpec spec = load_job_spec(a.config);
  if (a.seed) spec.seed = *a.seed;
  const AllreduceJob job = materialize(spec);
  const CollectiveResult r = run_collective(job);
  const std::string summary = collective_summary_json(spec, r) + "\n";
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    write_file(dir / "summary.json", summary);
    write_file(dir / "timeline.csv", timeline_to_csv(r.timeline));
    write_file(dir / "ledger.csv", ledger_to_csv(r.ledger));
    write_file(dir / "trace.csv", trace_to_csv(r));
  }
  if (a.summary || a.out.empty()) std::cout << summary;
  return 0;
}

// --- plan -----------------------------------------------------------------

struct PlanArgs {
  int endpoints = 800;
  int radix = 40;
  int layers = 2;
  std::string core_policy = "pow2-pods";
  bool zones = false;
  int storage = 0;
  int interzone_links = 2;
  int extra_switches = 2;
  int flows = 0;
  std::uint64_t seed = 0;
  bool costs = false;
  std::string out;
};

int cmd_plan(const PlanArgs& a) {
  require(a.layers == 2 || a.layers == 3, ErrorCode::kInvalidArgument, "layers must be 2 or 3");
  const FatTreePlan plan = a.layers == 2 ? plan_two_layer(a.endpoints, a.radix)
                                         : plan_three_layer(a.endpoints, a.radix, parse_core_policy(a.core_policy));
  std::cout << plan.total_switches() << " switches (leaf " << plan.leaf_count << ", spine " << plan.spine_count
            << ", core " << plan.core_count << ")\n";
  const fs::path dir(a.out);
  if (!a.out.empty()) write_file(dir / "plan.json", plan_to_json(plan) + "\n");

  if (a.zones) {
    require(a.layers == 2, ErrorCode::kInvalidArgument, "zones are built from two-layer plans");
    const ZoneLayout layout = make_zones(plan, plan, a.storage, a.interzone_links, a.extra_switches);
    std::cout << "zones: " << layout.fabric_switches() << " fabric + " << layout.extra_switches
              << " extra = " << layout.total_switches() << " switches; compute slots " << layout.compute_slots(0)
              << " + " << layout.compute_slots(1) << "; storage dual-homed " << layout.storage.size()
              << "; crosszone " << (layout.crosszone_feasible() ? "feasible" : "infeasible") << "\n";
    if (!a.out.empty()) write_file(dir / "layout.json", layout_to_json(layout) + "\n");
  }

  if (a.flows > 0) {
    require(plan.endpoint_count > 0, ErrorCode::kInvalidArgument, "flows need a plan with endpoints");
    std::mt19937_64 rng(a.seed);
    std::vector<RouteFlow> flows;
    for (int i = 0; i < a.flows; ++i) {
      const auto src = static_cast<int>(rng() % static_cast<std::uint64_t>(plan.endpoint_count));
      const auto dst = static_cast<int>(rng() % static_cast<std::uint64_t>(plan.endpoint_count));
      flows.push_back({src, dst, static_cast<TrafficClass>(rng() % 3)});
    }
    const RouteTable table = disperse_static_routes(plan, flows);
    std::cout << "routes: " << flows.size() << " flows, uplink load max " << table.max_load() << " min "
              << table.min_load() << ", worst per-leaf spread " << table.max_leaf_spread() << "\n";
    if (!a.out.empty()) write_file(dir / "uplinks.csv", uplink_loads_to_csv(table));
  }

  if (a.costs) {
    const CostReport report = cost_compare(CostModel::defaults());
    std::cout << "cost-performance ratio " << fmt_g(report.cost_performance_ratio) << " (relative performance "
              << fmt_g(report.relative_performance) << ", relative price " << fmt_g(report.relative_price) << ")\n";
    std::cout << cost_report_to_csv(report);
    if (!a.out.empty()) {
      write_file(dir / "cost_report.json", cost_report_to_json(report) + "\n");
      write_file(dir / "cost_report.csv", cost_report_to_csv(report));
    }
  }
  return 0;
}

// --- perf -----------------------------------------------------------------

struct PerfArgs {
  bool ring = false;
  bool hfreduce = false;
  bool peak = false;
  bool multiplier = false;
  int n = 8;
  double mem_bw = 320e9;
  std::string h2d = "gdrcopy";
  int gpus = 8;
  bool nvlink = false;
  std::string out;
};

int cmd_perf(const PerfArgs& a) {
  const int picked = a.ring + a.hfreduce + a.peak + a.multiplier;
  require(picked == 1, ErrorCode::kInvalidArgument, "choose exactly one of --ring, --hfreduce, --peak, --multiplier");
  std::string line;
  if (a.ring || a.hfreduce) {
    const Rational u = pcie_bandwidth_units(a.ring ? AllreduceAlgorithm::kRing : AllreduceAlgorithm::kHfreduce, a.n);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", u.value());
    line = std::string(buf) + " (" + u.str() + ")";
  } else {
    const int m = memory_ops_multiplier(parse_h2d_mode(a.h2d), a.gpus, a.nvlink);
    line = a.peak ? fmt_g(theoretical_peak_bw(a.mem_bw, m)) : std::to_string(m);
  }
  std::cout << line << "\n";
  if (!a.out.empty()) write_file(fs::path(a.out) / "perf.txt", line + "\n");
  return 0;
}

// --- incast ---------------------------------------------------------------

struct IncastArgs {
  IncastConfig cfg;
  double hop_latency_us = 2;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_incast(IncastArgs a) {
  a.cfg.hop_latency = seconds_to_ticks(a.hop_latency_us * 1e-6);
  const IncastResult r = incast_rts(a.cfg);
  nlohmann::ordered_json j;
  j["senders"] = a.cfg.senders;
  j["concurrency_limit"] = a.cfg.concurrency_limit;
  j["link_bw"] = a.cfg.link_bw;
  j["per_request_bytes"] = a.cfg.per_request_bytes;
  j["makespan_s"] = format_seconds(r.timeline.makespan);
  j["goodput"] = r.goodput;
  j["goodput_fraction"] = r.goodput / a.cfg.link_bw;
  j["peak_queue_requests"] = r.peak_queue_requests;
  j["peak_queue_bytes"] = r.peak_queue_bytes;
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!a.out.empty()) {
    write_file(fs::path(a.out) / "incast.json", text);
    write_file(fs::path(a.out) / "timeline.csv", timeline_to_csv(r.timeline));
  }
  return 0;
}

// --- checkpoint -----------------------------------------------------------

struct CheckpointArgs {
  std::string in;
  std::string out;
  std::string id;
  int count = 16;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::size_t chunk_size = kDefaultChunkBytes;
  std::size_t max_elements = 4096;
};

std::vector<NamedTensor> random_tensors(int count, std::uint64_t seed, std::size_t max_elements) {
  std::mt19937_64 rng(seed);
  std::vector<NamedTensor> out;
  for (int i = 0; i < count; ++i) {
    const DType dtype = kAllDTypes[rng() % std::size(kAllDTypes)];
    const std::uint64_t rows = 1 + rng() % 8;
    const std::uint64_t cols = rng() % (max_elements / rows + 1);
    char id[32];
    std::snprintf(id, sizeof(id), "tensor%03d", i);
    out.push_back({id, buffer_fill_pattern(dtype, rows * cols, rng()), {rows, cols}});
  }
  return out;
}

int cmd_checkpoint_save(const CheckpointArgs& a) {
  require(!a.out.empty(), ErrorCode::kInvalidArgument, "--out is required");
  require(a.count >= 0, ErrorCode::kInvalidArgument, "--count must be non-negative");
  require(a.max_elements >= 1, ErrorCode::kInvalidArgument, "--max-elements must be >= 1");
  const SavedCheckpoint saved = save_checkpoint(random_tensors(a.count, a.seed, a.max_elements), a.chunk_size, a.step);
  write_file(a.out, std::string_view(reinterpret_cast<const char*>(saved.blob.data()), saved.blob.size()));
  std::cout << "saved " << saved.index.entries.size() << " tensors, " << saved.blob.size() << " bytes in "
            << saved.writes.size() << " batch writes\n";
  return 0;
}

int cmd_checkpoint_load(const CheckpointArgs& a) {
  require(!a.in.empty() && !a.id.empty(), ErrorCode::kInvalidArgument, "--in and --id are required");
  const auto blob = read_file(a.in);
  const Buffer t = load_tensor(blob, a.id);
  if (!a.out.empty()) {
    write_file(a.out, std::string_view(reinterpret_cast<const char*>(t.bytes().data()), t.size_bytes()));
  }
  std::cout << a.id << ": " << t.dtype().name() << ", " << t.element_count() << " elements, " << t.size_bytes()
            << " bytes\n";
  return 0;
}

int cmd_checkpoint_inspect(const CheckpointArgs& a) {
  require(!a.in.empty(), ErrorCode::kInvalidArgument, "--in is required");
  const auto blob = read_file(a.in);
  const ParsedCheckpoint parsed = parse_checkpoint(blob);
  const std::string listing = describe_index(parsed.index);
  std::cout << listing;
  if (!a.out.empty()) write_file(a.out, listing);
  return 0;
}

// --- tree-dump ------------------------------------------------------------

int cmd_tree_dump(int n, const std::string& out) {
  const std::string text = tree_to_json(build_double_binary_tree(n)) + "\n";
  std::cout << text;
  if (!out.empty()) write_file(out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HFReduce collective and fabric simulator"};
  app.require_subcommand(1);

  AllreduceArgs ar;
  auto* allreduce = app.add_subcommand("allreduce", "Simulate a collective from a job config");
  allreduce->add_option("--config", ar.config, "Job config JSON")->required();
  allreduce->add_option("--out", ar.out, "Output directory for summary, timeline, ledger and trace");
  allreduce->add_option("--seed", ar.seed, "Override the config's input seed");
  allreduce->add_flag("--summary", ar.summary, "Print the summary JSON to stdout");

  PlanArgs pa;
  auto* plan = app.add_subcommand("plan", "Fat-tree planning, zones, routing and cost comparison");
  plan->add_option("--endpoints", pa.endpoints, "Endpoint count");
  plan->add_option("--radix", pa.radix, "Switch port count");
  plan->add_option("--layers", pa.layers, "2 or 3");
  plan->add_option("--core-policy", pa.core_policy, "pow2-pods or full-bisection (three layers)");
  plan->add_flag("--zones", pa.zones, "Build a two-zone layout from two copies of the plan");
  plan->add_option("--storage", pa.storage, "Dual-homed storage nodes");
  plan->add_option("--interzone-links", pa.interzone_links, "Links between the zones");
  plan->add_option("--extra-switches", pa.extra_switches, "Switches outside the two fabrics");
  plan->add_option("--flows", pa.flows, "Random flows to route statically");
  plan->add_option("--seed", pa.seed, "Seed for the random flow set");
  plan->add_flag("--costs", pa.costs, "Print the cost comparison");
  plan->add_option("--out", pa.out, "Output directory");

  PerfArgs fa;
  auto* perf = app.add_subcommand("perf", "Closed-form performance model");
  perf->add_flag("--ring", fa.ring, "PCIe bandwidth units of ring allreduce");
  perf->add_flag("--hfreduce", fa.hfreduce, "PCIe bandwidth units of host-side reduction");
  perf->add_flag("--peak", fa.peak, "Memory-bound peak allreduce bandwidth");
  perf->add_flag("--multiplier", fa.multiplier, "Host-memory operations per byte of GPU data");
  perf->add_option("-n", fa.n, "GPU count for --ring/--hfreduce");
  perf->add_option("--mem-bw", fa.mem_bw, "Host memory bandwidth, bytes/s");
  perf->add_option("--h2d", fa.h2d, "gdrcopy or memcpy");
  perf->add_option("--gpus", fa.gpus, "GPUs per node");
  perf->add_flag("--nvlink", fa.nvlink, "NVLink pair pre-reduce");
  perf->add_option("--out", fa.out, "Output directory");

  IncastArgs ia;
  auto* incast = app.add_subcommand("incast", "Many-to-one transfer under request-to-send admission");
  incast->add_option("--senders", ia.cfg.senders, "Sender count");
  incast->add_option("--limit", ia.cfg.concurrency_limit, "Outstanding grants");
  incast->add_option("--link-bw", ia.cfg.link_bw, "Receiver link, bytes/s");
  incast->add_option("--bytes", ia.cfg.per_request_bytes, "Bytes per request");
  incast->add_option("--hop-latency-us", ia.hop_latency_us, "One-way hop latency, microseconds");
  incast->add_option("--seed", ia.seed, "Accepted for uniformity; the model is deterministic");
  incast->add_option("--out", ia.out, "Output directory");

  CheckpointArgs ca;
  auto* ckpt = app.add_subcommand("checkpoint", "Checkpoint blob tools");
  ckpt->require_subcommand(1);
  auto* save = ckpt->add_subcommand("save", "Write a checkpoint of random tensors");
  save->add_option("--out", ca.out, "Blob path")->required();
  save->add_option("--count", ca.count, "Tensor count");
  save->add_option("--seed", ca.seed, "Tensor data seed");
  save->add_option("--step", ca.step, "Logical step recorded in the index");
  save->add_option("--chunk-size", ca.chunk_size, "Batch write size in bytes");
  save->add_option("--max-elements", ca.max_elements, "Upper bound on elements per tensor");
  auto* load = ckpt->add_subcommand("load", "Extract one tensor's raw bytes");
  load->add_option("--in", ca.in, "Blob path")->required();
  load->add_option("--id", ca.id, "Tensor id")->required();
  load->add_option("--out", ca.out, "Raw output path");
  auto* inspect = ckpt->add_subcommand("inspect", "List the index sorted by offset");
  inspect->add_option("--in", ca.in, "Blob path")->required();
  inspect->add_option("--out", ca.out, "Listing output path");

  int tree_n = 8;
  std::string tree_out;
  auto* tree = app.add_subcommand("tree-dump", "Print the double binary tree as JSON adjacency");
  tree->add_option("-n", tree_n, "Rank count");
  tree->add_option("--out", tree_out, "Output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*allreduce) return cmd_allreduce(ar);
    if (*plan) return cmd_plan(pa);
    if (*perf) return cmd_perf(fa);
    if (*incast) return cmd_incast(ia);
    if (*save) return cmd_checkpoint_save(ca);
    if (*load) return cmd_checkpoint_load(ca);
    if (*inspect) return cmd_checkpoint_inspect(ca);
    if (*tree) return cmd_tree_dump(tree_n, tree_out);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return e.code() == ErrorCode::kInvalidArgument ? kExitUsage : kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
