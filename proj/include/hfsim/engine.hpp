// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <string_view>
#include <vector>

#include "hfsim/core_types.hpp"
#include "hfsim/fabric.hpp"
#include "hfsim/perf_model.hpp"
#include "hfsim/topology.hpp"
#include "hfsim/tree.hpp"

namespace hfsim {

enum class CollectiveMode { kHfreduce, kHfreduceNvlink, kReduceOnly, kBroadcast };

std::string_view to_string(CollectiveMode mode);
CollectiveMode parse_collective_mode(std::string_view text);

inline constexpr std::size_t kDefaultGdrCopyThreshold = std::size_t{64} << 10;

struct AllreduceJob {
  ClusterTopology cluster;
  /// inputs[node][gpu]; every buffer shares dtype and element count.
  std::vector<std::vector<Buffer>> inputs;
  std::size_t chunk_size_bytes = kDefaultChunkBytes;
  CollectiveMode mode = CollectiveMode::kHfreduce;
  H2DMode h2d_mode = H2DMode::kGdrCopy;
  /// Designated root node for REDUCE_ONLY and BROADCAST.
  std::optional<int> root;
  /// Device-to-host copies of at most this many bytes take the GDRCopy path
  /// and skip the copy launch latency.
  std::size_t gdrcopy_threshold_bytes = kDefaultGdrCopyThreshold;
  /// Built from the node count when absent.
  std::optional<DoubleBinaryTree> tree;

  int node_count() const { return cluster.node_count(); }

  /// Cluster-wide job with inputs[v][g] = buffer_fill_pattern(dtype, elements, input_seed(seed, v, g)).
  static AllreduceJob random(const ClusterTopology& cluster, DType dtype, std::size_t elements, std::uint64_t seed,
                             CollectiveMode mode = CollectiveMode::kHfreduce);
};

std::uint64_t input_seed(std::uint64_t seed, int node, int gpu);

enum class ChunkPhase { kD2H, kIntraReduce, kInterPass1, kInterPass2, kH2D, kDone };
inline constexpr int kChunkPhases = 6;

std::string_view to_string(ChunkPhase phase);

/// When each phase of one chunk began on one node; -1 marks a phase the
/// collective does not run on that node.
struct ChunkTrace {
  int node = 0;
  int chunk = 0;
  std::array<SimTime, kChunkPhases> start{};

  bool monotonic() const;
};

struct CollectiveResult {
  /// outputs[node][gpu]
  std::vector<std::vector<Buffer>> outputs;
  Timeline timeline;
  MemOpLedger ledger;
  std::vector<ChunkTrace> trace;
  /// Root total after the reduce pass, assembled across chunks. Empty for
  /// BROADCAST.
  std::optional<Buffer> pass1_total;
  /// Per-GPU bytes over each node's completion time.
  std::vector<double> node_bandwidth;
  std::size_t bytes_per_gpu = 0;
  /// Node holding the reduce-pass total (or the broadcast source).
  int root = 0;

  double min_bandwidth() const;
};

/// Algorithm state for one job. Holds a reference to `job`, which must
/// outlive the engine.
///
/// Reduction order is fixed: GPUs fold in ascending local index (in NVLink
/// mode each pair sums lower index first, then the host folds pair partials
/// in ascending order), and the reduce pass folds each node's own partial
/// first, then its children in ascending rank, visiting the tree in
/// post-order. Even chunks ride tree_a, odd chunks tree_b.
class HfreduceEngine {
 public:
  explicit HfreduceEngine(const AllreduceJob& job);

  const AllreduceJob& job() const { return job_; }
  const ChunkPlan& plan() const { return plan_; }
  const DoubleBinaryTree& tree() const { return tree_; }
  int gpus_per_node() const { return gpus_; }
  bool nvlink() const { return job_.mode == CollectiveMode::kHfreduceNvlink; }

  /// Tree carrying `chunk`: alternating for allreduce, a single tree rooted
  /// at the designated root for reduce and broadcast.
  const BinaryTree& tree_for_chunk(int chunk) const;
  /// Root of the single tree used by reduce and broadcast.
  int collective_root() const;

  /// Number of host staging slots per node: GPUs, or GPU pairs with NVLink.
  int slots() const { return nvlink() ? gpus_ / 2 : gpus_; }

  /// Lands one slot's share of `chunk` in host memory. With NVLink the slot
  /// is a pair and the staged data is the pair sum.
  void stage(int node, int slot, int chunk);
  void stage_all(int node, int chunk);

  /// Folds the staged slots of (node, chunk) and clears them. Throws
  /// protocol-violation when any slot has not been staged.
  Buffer intra_node_reduce(int node, int chunk);

  /// Reduce pass only: folds the per-node partials up the chunk's tree and
  /// returns the root total.
  Buffer inter_node_reduce(int chunk, std::span<const Buffer> partials) const;

  /// Both passes: every node receives the root total.
  std::vector<Buffer> inter_node_allreduce(int chunk, std::span<const Buffer> partials) const;

  /// Runs the whole collective: data plane plus the simulated schedule.
  CollectiveResult execute();

 private:
  Buffer gpu_slice(int node, int gpu, int chunk) const;
  std::size_t element_offset(int chunk) const;
  std::size_t element_count(int chunk) const;

  const AllreduceJob& job_;
  int gpus_ = 0;
  ChunkPlan plan_;
  DoubleBinaryTree tree_;
  std::optional<BinaryTree> single_tree_;
  // (node, chunk) -> one entry per slot
  std::map<std::pair<int, int>, std::vector<std::optional<Buffer>>> staged_;
};

CollectiveResult hfreduce(const AllreduceJob& job);
CollectiveResult hfreduce_nvlink(const AllreduceJob& job);
/// REDUCE_ONLY or BROADCAST according to job.mode.
CollectiveResult reduce_or_broadcast(const AllreduceJob& job);
/// Dispatches on job.mode.
CollectiveResult run_collective(const AllreduceJob& job);

}  // namespace hfsim
