// SPDX-License-Identifier: Apache-2.0
#include "hfsim/engine.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <string>

#include "hfsim/error.hpp"
#include "hfsim/reduce.hpp"

namespace hfsim {

std::string_view to_string(CollectiveMode mode) {
  switch (mode) {
    case CollectiveMode::kHfreduce: return "hfreduce";
    case CollectiveMode::kHfreduceNvlink: return "hfreduce_nvlink";
    case CollectiveMode::kReduceOnly: return "reduce_only";
    case CollectiveMode::kBroadcast: return "broadcast";
  }
  return "?";
}

CollectiveMode parse_collective_mode(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (CollectiveMode m : {CollectiveMode::kHfreduce, CollectiveMode::kHfreduceNvlink, CollectiveMode::kReduceOnly,
                           CollectiveMode::kBroadcast}) {
    if (lower == to_string(m)) return m;
  }
  fail(ErrorCode::kInvalidArgument, "unknown collective mode '" + std::string(text) + "'");
}

std::string_view to_string(ChunkPhase phase) {
  switch (phase) {
    case ChunkPhase::kD2H: return "D2H";
    case ChunkPhase::kIntraReduce: return "INTRA_REDUCE";
    case ChunkPhase::kInterPass1: return "INTER_PASS1";
    case ChunkPhase::kInterPass2: return "INTER_PASS2";
    case ChunkPhase::kH2D: return "H2D";
    case ChunkPhase::kDone: return "DONE";
  }
  return "?";
}

bool ChunkTrace::monotonic() const {
  SimTime last = std::numeric_limits<SimTime>::min();
  for (SimTime t : start) {
    if (t < 0) continue;
    if (t < last) return false;
    last = t;
  }
  return true;
}

double CollectiveResult::min_bandwidth() const {
  if (node_bandwidth.empty()) return 0;
  return *std::min_element(node_bandwidth.begin(), node_bandwidth.end());
}

std::uint64_t input_seed(std::uint64_t seed, int node, int gpu) {
  // splitmix64 finalizer over (seed, node, gpu)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(node) * 1024 + static_cast<std::uint64_t>(gpu) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

AllreduceJob AllreduceJob::random(const ClusterTopology& cluster, DType dtype, std::size_t elements,
                                  std::uint64_t seed, CollectiveMode mode) {
  cluster.validate();
  AllreduceJob job;
  job.cluster = cluster;
  job.mode = mode;
  job.inputs.resize(static_cast<std::size_t>(cluster.node_count()));
  for (int v = 0; v < cluster.node_count(); ++v) {
    const int gpus = cluster.nodes[static_cast<std::size_t>(v)].gpus;
    for (int g = 0; g < gpus; ++g) {
      job.inputs[static_cast<std::size_t>(v)].push_back(
          buffer_fill_pattern(dtype, elements, input_seed(seed, v, g), DeviceRef::gpu(v, g, gpus)));
    }
  }
  return job;
}

// ---------------------------------------------------------------------------
// Data plane

HfreduceEngine::HfreduceEngine(const AllreduceJob& job) : job_(job) {
  job.cluster.validate();
  const int n = job.node_count();
  gpus_ = job.cluster.nodes.front().gpus;
  for (const NodeTopology& node : job.cluster.nodes) {
    require(node.gpus == gpus_, ErrorCode::kInvalidArgument, "every node must have the same GPU count");
  }
  require(static_cast<int>(job.inputs.size()) == n, ErrorCode::kInvalidArgument,
          "job needs one input set per node");
  for (int v = 0; v < n; ++v) {
    require(static_cast<int>(job.inputs[static_cast<std::size_t>(v)].size()) == gpus_, ErrorCode::kInvalidArgument,
            "node " + std::to_string(v) + " needs one input buffer per GPU");
  }
  const Buffer& first = job.inputs.front().front();
  for (int v = 0; v < n; ++v) {
    const auto& row = job.inputs[static_cast<std::size_t>(v)];
    for (const Buffer& b : row) {
      require(b.dtype() == first.dtype(), ErrorCode::kInvalidArgument, "mixed dtypes across GPU inputs");
      require(b.element_count() == first.element_count(), ErrorCode::kInvalidArgument,
              "GPU inputs differ in element count");
    }
  }
  const std::size_t width = first.dtype().width_bytes();
  require(job.chunk_size_bytes > 0 && job.chunk_size_bytes % width == 0, ErrorCode::kInvalidArgument,
          "chunk size must be a positive multiple of the element width");
  plan_ = make_chunk_plan(first.size_bytes(), job.chunk_size_bytes);

  if (job.mode == CollectiveMode::kHfreduceNvlink) {
    require(gpus_ % 2 == 0, ErrorCode::kInvalidArgument, "NVLink mode pairs GPUs and needs an even count");
    for (const NodeTopology& node : job.cluster.nodes) {
      require(node.has_nvlink(), ErrorCode::kInvalidArgument, "NVLink mode needs NVLink links on every node");
    }
  }
  if (job.root) {
    require(*job.root >= 0 && *job.root < n, ErrorCode::kInvalidArgument, "root node out of range");
  }
  if (job.mode == CollectiveMode::kBroadcast) {
    require(job.root.has_value(), ErrorCode::kInvalidArgument, "broadcast needs a designated root");
  }

  tree_ = job.tree ? *job.tree : build_double_binary_tree(n);
  require(tree_.n == n, ErrorCode::kProtocolViolation, "tree rank count does not match the node count");
  const TreeValidation report = validate_tree(tree_);
  require(report.ok(), ErrorCode::kProtocolViolation, "invalid tree:\n" + report.summary());

  if (job.mode == CollectiveMode::kReduceOnly || job.mode == CollectiveMode::kBroadcast) {
    if (!job.root || *job.root == tree_.tree_a.root) {
      single_tree_ = tree_.tree_a;
    } else {
      single_tree_ = build_rooted_tree(n, *job.root);
    }
  }
}

const BinaryTree& HfreduceEngine::tree_for_chunk(int chunk) const {
  if (single_tree_) return *single_tree_;
  return tree_.tree(chunk % 2);
}

int HfreduceEngine::collective_root() const { return single_tree_ ? single_tree_->root : tree_.tree_a.root; }

std::size_t HfreduceEngine::element_offset(int chunk) const {
  return plan_.chunks.at(static_cast<std::size_t>(chunk)).offset / job_.inputs.front().front().dtype().width_bytes();
}

std::size_t HfreduceEngine::element_count(int chunk) const {
  return plan_.chunks.at(static_cast<std::size_t>(chunk)).length / job_.inputs.front().front().dtype().width_bytes();
}

Buffer HfreduceEngine::gpu_slice(int node, int gpu, int chunk) const {
  return job_.inputs.at(static_cast<std::size_t>(node))
      .at(static_cast<std::size_t>(gpu))
      .slice(element_offset(chunk), element_count(chunk));
}

void HfreduceEngine::stage(int node, int slot, int chunk) {
  require(node >= 0 && node < job_.node_count(), ErrorCode::kInvalidArgument, "node out of range");
  require(slot >= 0 && slot < slots(), ErrorCode::kInvalidArgument, "staging slot out of range");
  require(chunk >= 0 && chunk < static_cast<int>(plan_.size()), ErrorCode::kInvalidArgument, "chunk out of range");
  auto& slots_for = staged_[{node, chunk}];
  slots_for.resize(static_cast<std::size_t>(slots()));
  Buffer data;
  if (nvlink()) {
    // Pair pre-reduce on the GPUs, lower index first.
    data = reduce_add(gpu_slice(node, 2 * slot, chunk), gpu_slice(node, 2 * slot + 1, chunk));
  } else {
    data = gpu_slice(node, slot, chunk);
  }
  data.set_owner(DeviceRef::host(node, DeviceRef::gpu(node, nvlink() ? 2 * slot : slot, gpus_).numa_domain));
  slots_for[static_cast<std::size_t>(slot)] = std::move(data);
}

void HfreduceEngine::stage_all(int node, int chunk) {
  for (int s = 0; s < slots(); ++s) stage(node, s, chunk);
}

Buffer HfreduceEngine::intra_node_reduce(int node, int chunk) {
  const auto it = staged_.find({node, chunk});
  require(it != staged_.end(), ErrorCode::kProtocolViolation,
          "no GPU data staged for node " + std::to_string(node) + " chunk " + std::to_string(chunk));
  std::vector<Buffer> sources;
  sources.reserve(it->second.size());
  for (std::size_t s = 0; s < it->second.size(); ++s) {
    require(it->second[s].has_value(), ErrorCode::kProtocolViolation,
            "slot " + std::to_string(s) + " of node " + std::to_string(node) + " chunk " + std::to_string(chunk) +
                " reached the host reduce before its copy completed");
    sources.push_back(std::move(*it->second[s]));
  }
  staged_.erase(it);
  Buffer out = reduce_many(sources);
  out.set_owner(DeviceRef::host(node));
  return out;
}

Buffer HfreduceEngine::inter_node_reduce(int chunk, std::span<const Buffer> partials) const {
  const BinaryTree& t = tree_for_chunk(chunk);
  require(static_cast<int>(partials.size()) == t.size(), ErrorCode::kProtocolViolation,
          "one partial per node is required");
  std::vector<Buffer> acc(partials.begin(), partials.end());
  for (int v : t.post_order()) {
    for (int c : t.children(v)) reduce_add_into(acc[static_cast<std::size_t>(v)], acc[static_cast<std::size_t>(c)]);
  }
  return std::move(acc[static_cast<std::size_t>(t.root)]);
}

std::vector<Buffer> HfreduceEngine::inter_node_allreduce(int chunk, std::span<const Buffer> partials) const {
  const Buffer total = inter_node_reduce(chunk, partials);
  std::vector<Buffer> out(partials.size(), total);
  for (std::size_t v = 0; v < out.size(); ++v) out[v].set_owner(DeviceRef::host(static_cast<int>(v)));
  return out;
}

// ---------------------------------------------------------------------------
// Schedule

namespace {

struct NodeResources {
  ResourceId mem = -1;
  ResourceId port = -1;
  ResourceId nic_tx = -1;
  ResourceId nic_rx = -1;
  std::vector<ResourceId> up;
  std::vector<ResourceId> down;
  std::vector<ResourceId> hbm;
  std::vector<ResourceId> nvl;  // per pair
};

std::string node_prefix(int v) { return "n" + std::to_string(v) + "."; }

class ScheduleBuilder {
 public:
  ScheduleBuilder(const HfreduceEngine& engine)
      : eng_(engine), job_(engine.job()), n_(job_.node_count()), gpus_(engine.gpus_per_node()) {
    const std::size_t chunks = engine.plan().size();
    phase_of_.clear();
    up_last_.assign(static_cast<std::size_t>(n_), std::vector<TaskId>(static_cast<std::size_t>(gpus_), -1));
    down_last_ = up_last_;
    reduce_last_.assign(static_cast<std::size_t>(n_), -1);
    p1_done_.assign(static_cast<std::size_t>(n_), std::vector<TaskId>(chunks, -1));
    p2_done_ = p1_done_;
    p1_recv_.assign(static_cast<std::size_t>(n_), std::vector<std::vector<TaskId>>(chunks));
    p2_recv_ = p1_done_;
    d2h_done_ = p1_done_;
    for (int v = 0; v < n_; ++v) add_node_resources(v);
  }

  Program& program() { return prog_; }
  // Task -> (node, chunk, trace phase); -1 node for tasks outside the trace.
  struct TraceTag {
    int node = -1;
    int chunk = -1;
    ChunkPhase phase = ChunkPhase::kD2H;
    bool host_side = false;  // counts toward the phase start
  };
  const std::vector<TraceTag>& tags() const { return phase_of_; }

  void build() {
    const int chunks = static_cast<int>(eng_.plan().size());
    const CollectiveMode mode = job_.mode;
    const int root = eng_.collective_root();
    for (int c = 0; c < chunks; ++c) {
      const BinaryTree& tree = eng_.tree_for_chunk(c);
      const std::uint64_t bytes = eng_.plan().chunks[static_cast<std::size_t>(c)].length;
      for (int v = 0; v < n_; ++v) {
        if (mode == CollectiveMode::kBroadcast) {
          if (v == root) d2h_done_[idx(v)][idx(c)] = broadcast_source(v, c, bytes);
        } else if (mode == CollectiveMode::kHfreduceNvlink) {
          d2h_done_[idx(v)][idx(c)] = nvlink_d2h(v, c);
        } else {
          d2h_done_[idx(v)][idx(c)] = plain_d2h(v, c, bytes);
        }
      }
      if (mode != CollectiveMode::kBroadcast) {
        // Pass 1 in post-order so each child's send exists before its parent waits on it.
        for (int v : tree.post_order()) pass1(tree, v, c, bytes);
      }
      if (mode == CollectiveMode::kReduceOnly) {
        h2d(root, c, bytes, p1_done_[idx(root)][idx(c)]);
        continue;
      }
      // Pass 2 top-down: reverse post-order visits parents before children.
      std::vector<int> order = tree.post_order();
      std::reverse(order.begin(), order.end());
      for (int v : order) pass2(tree, v, c, bytes, mode == CollectiveMode::kBroadcast ? root : -1);
      for (int v = 0; v < n_; ++v) {
        if (mode == CollectiveMode::kHfreduceNvlink) {
          nvlink_h2d(v, c);
        } else {
          h2d(v, c, bytes, p2_done_[idx(v)][idx(c)]);
        }
      }
    }
  }

 private:
  static std::size_t idx(int i) { return static_cast<std::size_t>(i); }

  const NodeTopology& node(int v) const { return job_.cluster.nodes[idx(v)]; }

  void add_node_resources(int v) {
    const NodeTopology& t = node(v);
    const std::string p = node_prefix(v);
    NodeResources r;
    r.mem = prog_.add_resource(p + "mem", t.memory_bw);
    if (t.shared_root_port) {
      r.port = prog_.add_resource(p + "port" + std::to_string(t.shared_port_gpus[0]) +
                                      std::to_string(t.shared_port_gpus[1]),
                                  t.root_port_cap, t.bidir_efficiency);
    }
    r.nic_tx = prog_.add_resource(p + "nic.tx", t.nic_bw);
    r.nic_rx = prog_.add_resource(p + "nic.rx", t.nic_bw);
    for (int g = 0; g < gpus_; ++g) {
      r.up.push_back(prog_.add_resource(p + "gpu" + std::to_string(g) + ".up", t.pcie_link_bw));
      r.down.push_back(prog_.add_resource(p + "gpu" + std::to_string(g) + ".down", t.pcie_link_bw));
      if (t.has_nvlink()) r.hbm.push_back(prog_.add_resource(p + "gpu" + std::to_string(g) + ".hbm", t.gpu_mem_bw));
    }
    if (t.has_nvlink()) {
      for (int k = 0; k < gpus_ / 2; ++k) {
        r.nvl.push_back(prog_.add_resource(p + "nvlink" + std::to_string(k), *t.nvlink_bw));
      }
    }
    res_.push_back(std::move(r));
  }

  std::string gpu_label(int v, int g) const { return DeviceRef::gpu(v, g, gpus_).label(); }
  std::string host_label(int v) const { return DeviceRef::host(v).label(); }
  std::string nic_label(int v) const { return DeviceRef::nic(v).label(); }

  TaskId add(Task t, int trace_node, ChunkPhase phase, bool host_side) {
    const TaskId id = prog_.add_task(std::move(t));
    phase_of_.resize(idx(id) + 1);
    phase_of_[idx(id)] = {trace_node, prog_.tasks()[idx(id)].chunk, phase, host_side};
    return id;
  }

  static void dep(Task& t, TaskId d) {
    if (d >= 0) t.deps.push_back(d);
  }

  Task make(EventKind kind, Phase phase, int v, int c, std::string src, std::string dst, std::uint64_t bytes) {
    Task t;
    t.kind = kind;
    t.phase = phase;
    t.node = v;
    t.chunk = c;
    t.src = std::move(src);
    t.dst = std::move(dst);
    t.bytes = bytes;
    return t;
  }

  SimTime copy_latency(std::uint64_t bytes) const {
    return bytes <= job_.gdrcopy_threshold_bytes ? 0 : job_.cluster.copy_launch_latency;
  }

  void add_pcie(Task& t, int v, int g, bool to_host) {
    const NodeResources& r = res_[idx(v)];
    const Direction d = to_host ? Direction::kToHost : Direction::kFromHost;
    t.uses.push_back({to_host ? r.up[idx(g)] : r.down[idx(g)], d});
    if (r.port >= 0 && node(v).port_shared_by(g)) t.uses.push_back({r.port, d});
  }

  TaskId d2h_copy(int v, int c, int g, std::uint64_t bytes, TaskId extra_dep) {
    Task t = make(EventKind::kD2HWrite, Phase::kD2H, v, c, gpu_label(v, g), host_label(v), bytes);
    add_pcie(t, v, g, true);
    t.uses.push_back({res_[idx(v)].mem, Direction::kNone});
    t.latency = copy_latency(bytes);
    dep(t, up_last_[idx(v)][idx(g)]);
    dep(t, extra_dep);
    const TaskId id = add(std::move(t), v, ChunkPhase::kD2H, true);
    up_last_[idx(v)][idx(g)] = id;
    return id;
  }

  TaskId host_reduce(int v, int c, std::uint64_t read_bytes, std::uint64_t write_bytes, std::vector<TaskId> deps) {
    Task rd = make(EventKind::kHostRead, Phase::kReduce, v, c, host_label(v), host_label(v), read_bytes);
    rd.uses = {{res_[idx(v)].mem, Direction::kNone}};
    rd.deps = std::move(deps);
    dep(rd, reduce_last_[idx(v)]);
    const TaskId r = add(std::move(rd), v, ChunkPhase::kIntraReduce, true);
    Task wr = make(EventKind::kHostWrite, Phase::kReduce, v, c, host_label(v), host_label(v), write_bytes);
    wr.uses = {{res_[idx(v)].mem, Direction::kNone}};
    wr.deps = {r};
    const TaskId w = add(std::move(wr), v, ChunkPhase::kIntraReduce, true);
    reduce_last_[idx(v)] = w;
    return w;
  }

  TaskId plain_d2h(int v, int c, std::uint64_t bytes) {
    std::vector<TaskId> copies;
    for (int g = 0; g < gpus_; ++g) copies.push_back(d2h_copy(v, c, g, bytes, -1));
    return host_reduce(v, c, bytes * static_cast<std::uint64_t>(gpus_), bytes, std::move(copies));
  }

  TaskId broadcast_source(int v, int c, std::uint64_t bytes) { return d2h_copy(v, c, 0, bytes, -1); }

  std::uint64_t half_bytes(int c, int which) const {
    const std::size_t width = job_.inputs.front().front().dtype().width_bytes();
    const std::uint64_t elems = eng_.plan().chunks[idx(c)].length / width;
    const std::uint64_t first = (elems + 1) / 2;
    return (which == 0 ? first : elems - first) * width;
  }

  TaskId nvlink_d2h(int v, int c) {
    const NodeResources& r = res_[idx(v)];
    std::vector<TaskId> copies;
    for (int k = 0; k < gpus_ / 2; ++k) {
      const int ga = 2 * k;
      const int gb = 2 * k + 1;
      // Exchange halves, then each GPU sums the half it keeps.
      TaskId xfer[2];
      for (int s = 0; s < 2; ++s) {
        const int from = s == 0 ? gb : ga;
        const int to = s == 0 ? ga : gb;
        Task t = make(EventKind::kNvlinkXfer, Phase::kNvlink, v, c, gpu_label(v, from), gpu_label(v, to),
                      half_bytes(c, s));
        t.uses = {{r.nvl[idx(k)], Direction::kNone}};
        dep(t, up_last_[idx(v)][idx(ga)]);
        dep(t, up_last_[idx(v)][idx(gb)]);
        xfer[s] = add(std::move(t), v, ChunkPhase::kD2H, true);
      }
      for (int s = 0; s < 2; ++s) {
        const int g = s == 0 ? ga : gb;
        Task t = make(EventKind::kGpuCompute, Phase::kNvlink, v, c, gpu_label(v, g), gpu_label(v, g),
                      3 * half_bytes(c, s));
        t.uses = {{r.hbm[idx(g)], Direction::kNone}};
        t.deps = {xfer[s]};
        const TaskId compute = add(std::move(t), v, ChunkPhase::kD2H, true);
        copies.push_back(d2h_copy(v, c, g, half_bytes(c, s), compute));
      }
    }
    const std::uint64_t bytes = eng_.plan().chunks[idx(c)].length;
    return host_reduce(v, c, bytes * static_cast<std::uint64_t>(gpus_ / 2), bytes, std::move(copies));
  }

  TaskId host_chain(int v, int c, std::vector<std::pair<EventKind, Phase>> steps, std::uint64_t bytes,
                    std::vector<TaskId> deps, ChunkPhase trace) {
    TaskId last = -1;
    for (const auto& [kind, phase] : steps) {
      Task t = make(kind, phase, v, c, host_label(v), host_label(v), bytes);
      t.uses = {{res_[idx(v)].mem, Direction::kNone}};
      if (last >= 0) {
        t.deps = {last};
      } else {
        t.deps = deps;
      }
      last = add(std::move(t), v, trace, true);
    }
    return last;
  }

  // Wire transfer v -> peer followed by the hop latency at the receiver.
  TaskId network_hop(int v, int peer, int c, std::uint64_t bytes, TaskId after, ChunkPhase trace) {
    Task send = make(EventKind::kNicSend, Phase::kIbSend, v, c, nic_label(v), nic_label(peer), bytes);
    send.uses = {{res_[idx(v)].nic_tx, Direction::kNone}, {res_[idx(peer)].nic_rx, Direction::kNone}};
    send.deps = {after};
    const TaskId s = add(std::move(send), v, trace, false);
    Task recv = make(EventKind::kNicRecv, Phase::kIbRecv, peer, c, nic_label(v), nic_label(peer), bytes);
    recv.latency = job_.cluster.hop_latency;
    recv.deps = {s};
    return add(std::move(recv), peer, trace, false);
  }

  void pass1(const BinaryTree& tree, int v, int c, std::uint64_t bytes) {
    // Host traffic of one reduce-pass step: land the peer partial, read it
    // for the add, read the result for the upward send.
    std::vector<TaskId> deps = p1_recv_[idx(v)][idx(c)];
    deps.push_back(d2h_done_[idx(v)][idx(c)]);
    const TaskId done = host_chain(v, c,
                                   {{EventKind::kHostWrite, Phase::kIbRecv},
                                    {EventKind::kHostRead, Phase::kIbRecv},
                                    {EventKind::kHostRead, Phase::kIbSend}},
                                   bytes, std::move(deps), ChunkPhase::kInterPass1);
    p1_done_[idx(v)][idx(c)] = done;
    const int parent = tree.nodes[idx(v)].parent;
    if (parent != kNoRank) {
      p1_recv_[idx(parent)][idx(c)].push_back(network_hop(v, parent, c, bytes, done, ChunkPhase::kInterPass1));
    }
  }

  void pass2(const BinaryTree& tree, int v, int c, std::uint64_t bytes, int broadcast_root) {
    std::vector<TaskId> deps;
    if (v == tree.root) {
      deps.push_back(broadcast_root >= 0 ? d2h_done_[idx(v)][idx(c)] : p1_done_[idx(v)][idx(c)]);
    } else {
      deps.push_back(p2_recv_[idx(v)][idx(c)]);
    }
    // Land the total from the parent, read it for the downward sends.
    const TaskId done = host_chain(v, c, {{EventKind::kHostWrite, Phase::kIbRecv}, {EventKind::kHostRead, Phase::kIbSend}},
                                   bytes, std::move(deps), ChunkPhase::kInterPass2);
    p2_done_[idx(v)][idx(c)] = done;
    for (int child : tree.children(v)) {
      p2_recv_[idx(child)][idx(c)] = network_hop(v, child, c, bytes, done, ChunkPhase::kInterPass2);
    }
  }

  TaskId h2d_copy(int v, int c, int g, std::uint64_t bytes, TaskId after) {
    Task t = make(EventKind::kH2D, Phase::kH2D, v, c, host_label(v), gpu_label(v, g), bytes);
    add_pcie(t, v, g, false);
    if (job_.h2d_mode == H2DMode::kMemcpy) t.latency = copy_latency(bytes);
    t.deps = {after};
    dep(t, down_last_[idx(v)][idx(g)]);
    const TaskId id = add(std::move(t), v, ChunkPhase::kH2D, false);
    down_last_[idx(v)][idx(g)] = id;
    return id;
  }

  TaskId host_read_for_h2d(int v, int c, std::uint64_t bytes, TaskId after) {
    Task rd = make(EventKind::kHostRead, Phase::kH2D, v, c, host_label(v), host_label(v), bytes);
    rd.uses = {{res_[idx(v)].mem, Direction::kNone}};
    rd.deps = {after};
    return add(std::move(rd), v, ChunkPhase::kH2D, true);
  }

  int numa_of(int v, int g) const {
    (void)v;
    return DeviceRef::gpu(v, g, gpus_).numa_domain;
  }

  void h2d(int v, int c, std::uint64_t bytes, TaskId after) {
    if (job_.h2d_mode == H2DMode::kGdrCopy) {
      // One host read per NUMA domain; the domain's GPUs copy from cache.
      const int domains = std::min(gpus_, 2);
      for (int d = 0; d < domains; ++d) {
        const TaskId rd = host_read_for_h2d(v, c, bytes, after);
        for (int g = 0; g < gpus_; ++g) {
          if (numa_of(v, g) == d) h2d_copy(v, c, g, bytes, rd);
        }
      }
    } else {
      for (int g = 0; g < gpus_; ++g) h2d_copy(v, c, g, bytes, host_read_for_h2d(v, c, bytes, after));
    }
  }

  void nvlink_h2d(int v, int c) {
    const TaskId after = p2_done_[idx(v)][idx(c)];
    const std::uint64_t total = eng_.plan().chunks[idx(c)].length;
    std::vector<TaskId> copy_of(idx(gpus_), -1);
    if (job_.h2d_mode == H2DMode::kGdrCopy) {
      const int domains = std::min(gpus_, 2);
      for (int d = 0; d < domains; ++d) {
        const TaskId rd = host_read_for_h2d(v, c, total, after);
        for (int g = 0; g < gpus_; ++g) {
          if (numa_of(v, g) == d) copy_of[idx(g)] = h2d_copy(v, c, g, half_bytes(c, g % 2), rd);
        }
      }
    } else {
      for (int g = 0; g < gpus_; ++g) {
        const std::uint64_t b = half_bytes(c, g % 2);
        copy_of[idx(g)] = h2d_copy(v, c, g, b, host_read_for_h2d(v, c, b, after));
      }
    }
    // Allgather inside each pair.
    const NodeResources& r = res_[idx(v)];
    for (int k = 0; k < gpus_ / 2; ++k) {
      for (int s = 0; s < 2; ++s) {
        const int from = 2 * k + s;
        const int to = 2 * k + 1 - s;
        Task t = make(EventKind::kNvlinkXfer, Phase::kNvlink, v, c, gpu_label(v, from), gpu_label(v, to),
                      half_bytes(c, s));
        t.uses = {{r.nvl[idx(k)], Direction::kNone}};
        t.deps = {copy_of[idx(2 * k)], copy_of[idx(2 * k + 1)]};
        down_last_[idx(v)][idx(to)] = add(std::move(t), v, ChunkPhase::kH2D, false);
      }
    }
  }

  const HfreduceEngine& eng_;
  const AllreduceJob& job_;
  const int n_;
  const int gpus_;
  Program prog_;
  std::vector<NodeResources> res_;
  std::vector<TraceTag> phase_of_;
  std::vector<std::vector<TaskId>> up_last_, down_last_;
  std::vector<TaskId> reduce_last_;
  std::vector<std::vector<TaskId>> p1_done_, p2_done_, p2_recv_, d2h_done_;
  std::vector<std::vector<std::vector<TaskId>>> p1_recv_;
};

}  // namespace

CollectiveResult HfreduceEngine::execute() {
  const int n = job_.node_count();
  const int chunks = static_cast<int>(plan_.size());
  const Buffer& proto = job_.inputs.front().front();
  const bool allreduce = job_.mode == CollectiveMode::kHfreduce || job_.mode == CollectiveMode::kHfreduceNvlink;

  CollectiveResult result;
  result.bytes_per_gpu = proto.size_bytes();
  result.root = allreduce ? tree_.tree_a.root : collective_root();
  result.outputs = job_.inputs;
  for (int v = 0; v < n; ++v) {
    for (int g = 0; g < gpus_; ++g) result.outputs[static_cast<std::size_t>(v)][static_cast<std::size_t>(g)].set_owner(DeviceRef::gpu(v, g, gpus_));
  }

  if (job_.mode == CollectiveMode::kBroadcast) {
    const Buffer& src = job_.inputs[static_cast<std::size_t>(result.root)][0];
    for (auto& row : result.outputs) {
      for (Buffer& b : row) b.write_slice(0, src);
    }
  } else {
    Buffer total_all(proto.dtype(), proto.element_count(), DeviceRef::host(result.root));
    std::vector<Buffer> partials(static_cast<std::size_t>(n));
    for (int c = 0; c < chunks; ++c) {
      for (int v = 0; v < n; ++v) {
        stage_all(v, c);
        partials[static_cast<std::size_t>(v)] = intra_node_reduce(v, c);
      }
      const Buffer total = inter_node_reduce(c, partials);
      const std::size_t off = element_offset(c);
      total_all.write_slice(off, total);
      for (int v = 0; v < n; ++v) {
        if (!allreduce && v != result.root) continue;
        for (Buffer& b : result.outputs[static_cast<std::size_t>(v)]) b.write_slice(off, total);
      }
    }
    result.pass1_total = std::move(total_all);
  }

  ScheduleBuilder builder(*this);
  builder.build();
  SimResult sim = run(builder.program());
  result.timeline = std::move(sim.timeline);
  result.ledger = ledger_from_timeline(result.timeline, n);

  // Phase starts from host-side tasks only, so a child's early network
  // arrival never predates the node's own reduce in the trace.
  const auto& tags = builder.tags();
  std::vector<ChunkTrace> trace(static_cast<std::size_t>(n) * static_cast<std::size_t>(chunks));
  for (int v = 0; v < n; ++v) {
    for (int c = 0; c < chunks; ++c) {
      ChunkTrace& t = trace[static_cast<std::size_t>(v) * static_cast<std::size_t>(chunks) + static_cast<std::size_t>(c)];
      t.node = v;
      t.chunk = c;
      t.start.fill(-1);
    }
  }
  std::vector<SimTime> node_done(static_cast<std::size_t>(n), 0);
  for (std::size_t id = 0; id < tags.size(); ++id) {
    const auto& tag = tags[id];
    if (tag.node < 0 || tag.chunk < 0) continue;
    ChunkTrace& t = trace[static_cast<std::size_t>(tag.node) * static_cast<std::size_t>(chunks) + static_cast<std::size_t>(tag.chunk)];
    auto& done = t.start[static_cast<std::size_t>(ChunkPhase::kDone)];
    done = std::max(done, sim.task_end[id]);
    node_done[static_cast<std::size_t>(tag.node)] = std::max(node_done[static_cast<std::size_t>(tag.node)], sim.task_end[id]);
    if (!tag.host_side) continue;
    auto& s = t.start[static_cast<std::size_t>(tag.phase)];
    if (s < 0 || sim.task_start[id] < s) s = sim.task_start[id];
  }
  result.trace = std::move(trace);

  result.node_bandwidth.resize(static_cast<std::size_t>(n), 0.0);
  for (int v = 0; v < n; ++v) {
    const double secs = ticks_to_seconds(node_done[static_cast<std::size_t>(v)]);
    result.node_bandwidth[static_cast<std::size_t>(v)] = secs > 0 ? static_cast<double>(result.bytes_per_gpu) / secs : 0.0;
  }
  return result;
}

namespace {

CollectiveResult run_with_mode(const AllreduceJob& job, CollectiveMode mode) {
  if (job.mode == mode) return HfreduceEngine(job).execute();
  AllreduceJob copy = job;
  copy.mode = mode;
  return HfreduceEngine(copy).execute();
}

}  // namespace

CollectiveResult hfreduce(const AllreduceJob& job) { return run_with_mode(job, CollectiveMode::kHfreduce); }

CollectiveResult hfreduce_nvlink(const AllreduceJob& job) {
  return run_with_mode(job, CollectiveMode::kHfreduceNvlink);
}

CollectiveResult reduce_or_broadcast(const AllreduceJob& job) {
  require(job.mode == CollectiveMode::kReduceOnly || job.mode == CollectiveMode::kBroadcast,
          ErrorCode::kInvalidArgument, "reduce_or_broadcast needs REDUCE_ONLY or BROADCAST mode");
  return HfreduceEngine(job).execute();
}

CollectiveResult run_collective(const AllreduceJob& job) { return HfreduceEngine(job).execute(); }

}  // namespace hfsim
