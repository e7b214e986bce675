// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <functional>

#include "hfsim/engine.hpp"
#include "hfsim/error.hpp"
#include "oracles.hpp"

using namespace hfsim;

namespace {

NodeTopology nvlink_node() {
  NodeTopology n;
  n.nvlink_bw = 300e9;
  return n;
}

AllreduceJob small_job(int nodes, DType dtype, CollectiveMode mode, std::size_t elements = 1031,
                       std::size_t chunk = 512, std::uint64_t seed = 5) {
  AllreduceJob job = AllreduceJob::random(ClusterTopology::uniform(nodes, nvlink_node()), dtype, elements, seed, mode);
  job.chunk_size_bytes = chunk;
  return job;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

}  // namespace

class EngineOracle : public ::testing::TestWithParam<std::tuple<int, DTypeTag, bool>> {};

TEST_P(EngineOracle, BitIdenticalToScalarReplay) {
  const auto [nodes, tag, nv] = GetParam();
  const AllreduceJob job = small_job(nodes, tag, nv ? CollectiveMode::kHfreduceNvlink : CollectiveMode::kHfreduce);
  const CollectiveResult r = run_collective(job);
  EXPECT_EQ(oracle::check_allreduce(job, r), "");
}

INSTANTIATE_TEST_SUITE_P(AllCases, EngineOracle,
                         ::testing::Combine(::testing::Values(1, 2, 3, 4, 5, 8),
                                            ::testing::Values(DTypeTag::kFP32, DTypeTag::kFP16, DTypeTag::kBF16,
                                                              DTypeTag::kFP8E4M3, DTypeTag::kFP8E5M2),
                                            ::testing::Bool()));

TEST(Engine, LedgerConservationForBothH2DPaths) {
  for (int n : {1, 2, 3, 4, 7}) {
    for (H2DMode h : {H2DMode::kGdrCopy, H2DMode::kMemcpy}) {
      for (bool nv : {false, true}) {
        AllreduceJob job = small_job(n, DTypeTag::kFP32, nv ? CollectiveMode::kHfreduceNvlink : CollectiveMode::kHfreduce,
                                     50'000, 65'536);
        job.h2d_mode = h;
        const CollectiveResult r = run_collective(job);
        const std::uint64_t d = r.bytes_per_gpu;
        EXPECT_EQ(r.ledger.total(), static_cast<std::uint64_t>(memory_ops_multiplier(h, 8, nv)) * d * static_cast<std::uint64_t>(n))
            << "n=" << n << " " << to_string(h) << " nvlink=" << nv;
        for (const auto& row : r.ledger.nodes) {
          EXPECT_EQ(row.total(), static_cast<std::uint64_t>(memory_ops_multiplier(h, 8, nv)) * d);
        }
      }
    }
  }
}

TEST(Engine, NvlinkHalvesDeviceToHostWrites) {
  const AllreduceJob plain = small_job(4, DTypeTag::kBF16, CollectiveMode::kHfreduce, 20'000, 8192);
  AllreduceJob nv = plain;
  nv.mode = CollectiveMode::kHfreduceNvlink;
  const auto a = run_collective(plain);
  const auto b = run_collective(nv);
  for (int v = 0; v < 4; ++v) {
    const auto wa = a.ledger.nodes[static_cast<std::size_t>(v)].writes[static_cast<std::size_t>(Phase::kD2H)];
    const auto wb = b.ledger.nodes[static_cast<std::size_t>(v)].writes[static_cast<std::size_t>(Phase::kD2H)];
    EXPECT_EQ(wa, 2 * wb);
  }
}

TEST(Engine, ScheduleRespectsCapacityAndPhaseOrder) {
  for (int n : {1, 2, 5}) {
    const AllreduceJob job = small_job(n, DTypeTag::kFP16, CollectiveMode::kHfreduce, 300'000, 131'072);
    const auto r = run_collective(job);
    EXPECT_TRUE(check_capacity(r.timeline, 1e-6).ok);
    EXPECT_EQ(r.trace.size(), static_cast<std::size_t>(n) * 5);
    for (const auto& t : r.trace) EXPECT_TRUE(t.monotonic()) << t.node << "/" << t.chunk;
    const double cap = theoretical_peak_bw(320e9, 24);
    for (double bw : r.node_bandwidth) {
      EXPECT_GT(bw, 0);
      EXPECT_LE(bw, cap);
    }
  }
}

TEST(Engine, ChunksAlternateTrees) {
  const AllreduceJob job = small_job(6, DTypeTag::kFP32, CollectiveMode::kHfreduce);
  const HfreduceEngine eng(job);
  EXPECT_EQ(&eng.tree_for_chunk(0), &eng.tree().tree_a);
  EXPECT_EQ(&eng.tree_for_chunk(1), &eng.tree().tree_b);
  EXPECT_EQ(&eng.tree_for_chunk(2), &eng.tree().tree_a);
}

TEST(Engine, ReduceOnlyDeliversTotalAtRoot) {
  AllreduceJob job = small_job(5, DTypeTag::kFP32, CollectiveMode::kReduceOnly, 700, 256);
  job.root = 2;
  const auto r = reduce_or_broadcast(job);
  ASSERT_TRUE(r.pass1_total.has_value());
  EXPECT_EQ(r.root, 2);
  // Same fold on a tree rooted at the designated node.
  oracle::ReplayInput in;
  in.dtype = DTypeTag::kFP32;
  for (const auto& row : job.inputs) {
    auto& out = in.inputs.emplace_back();
    for (const auto& b : row) out.push_back(oracle::raw_elements(b));
  }
  in.chunk_size_bytes = job.chunk_size_bytes;
  in.parent_a = in.parent_b = oracle::parents_of(build_rooted_tree(5, 2));
  const auto expect = oracle::replay_allreduce(in);
  EXPECT_EQ(oracle::raw_elements(*r.pass1_total), expect);
  for (const auto& b : r.outputs[2]) EXPECT_EQ(oracle::raw_elements(b), expect);
  EXPECT_EQ(r.outputs[0][0], job.inputs[0][0]);
}

TEST(Engine, BroadcastCopiesRootGpu0) {
  AllreduceJob job = small_job(4, DTypeTag::kBF16, CollectiveMode::kBroadcast, 600, 256);
  job.root = 3;
  const auto r = reduce_or_broadcast(job);
  for (const auto& row : r.outputs) {
    for (const auto& b : row) EXPECT_EQ(b, job.inputs[3][0]);
  }
  EXPECT_FALSE(r.pass1_total.has_value());
}

TEST(Engine, DispatchHelpersForceMode) {
  const AllreduceJob job = small_job(2, DTypeTag::kFP16, CollectiveMode::kReduceOnly);
  AllreduceJob nv = job;
  nv.mode = CollectiveMode::kHfreduceNvlink;
  EXPECT_EQ(oracle::check_allreduce(nv, hfreduce_nvlink(job)), "");
  AllreduceJob plain = job;
  plain.mode = CollectiveMode::kHfreduce;
  EXPECT_EQ(oracle::check_allreduce(plain, hfreduce(job)), "");
  EXPECT_EQ(code_of([&] { (void)reduce_or_broadcast(plain); }), ErrorCode::kInvalidArgument);
}

TEST(Engine, Validation) {
  AllreduceJob job = small_job(2, DTypeTag::kFP32, CollectiveMode::kHfreduce);
  {
    AllreduceJob j = job;
    j.chunk_size_bytes = 6;
    EXPECT_EQ(code_of([&] { HfreduceEngine e(j); }), ErrorCode::kInvalidArgument);
  }
  {
    AllreduceJob j = job;
    j.inputs[1][3] = buffer_fill_pattern(DTypeTag::kFP16, 1031, 1);
    EXPECT_EQ(code_of([&] { HfreduceEngine e(j); }), ErrorCode::kInvalidArgument);
  }
  {
    AllreduceJob j = job;
    j.inputs[1].pop_back();
    EXPECT_EQ(code_of([&] { HfreduceEngine e(j); }), ErrorCode::kInvalidArgument);
  }
  {
    AllreduceJob j = job;
    j.mode = CollectiveMode::kBroadcast;
    EXPECT_EQ(code_of([&] { HfreduceEngine e(j); }), ErrorCode::kInvalidArgument);
    j.root = 7;
    EXPECT_EQ(code_of([&] { HfreduceEngine e(j); }), ErrorCode::kInvalidArgument);
  }
  {
    AllreduceJob j = job;
    j.mode = CollectiveMode::kHfreduceNvlink;
    j.cluster = ClusterTopology::uniform(2);  // no NVLink bandwidth
    EXPECT_EQ(code_of([&] { HfreduceEngine e(j); }), ErrorCode::kInvalidArgument);
  }
  {
    AllreduceJob j = job;
    DoubleBinaryTree t = build_double_binary_tree(2);
    t.tree_a.nodes[0].parent = 0;
    j.tree = t;
    EXPECT_EQ(code_of([&] { HfreduceEngine e(j); }), ErrorCode::kProtocolViolation);
  }
}

TEST(Engine, ReduceBeforeStagingIsProtocolViolation) {
  const AllreduceJob job = small_job(2, DTypeTag::kFP32, CollectiveMode::kHfreduce);
  HfreduceEngine eng(job);
  EXPECT_EQ(code_of([&] { (void)eng.intra_node_reduce(0, 0); }), ErrorCode::kProtocolViolation);
  eng.stage(0, 0, 0);
  EXPECT_EQ(code_of([&] { (void)eng.intra_node_reduce(0, 0); }), ErrorCode::kProtocolViolation);
  eng.stage_all(1, 0);
  EXPECT_NO_THROW((void)eng.intra_node_reduce(1, 0));
  std::vector<Buffer> one = {Buffer(DTypeTag::kFP32, 4)};
  EXPECT_EQ(code_of([&] { (void)eng.inter_node_reduce(0, one); }), ErrorCode::kProtocolViolation);
}

TEST(Engine, DeterministicAcrossRuns) {
  const AllreduceJob job = small_job(3, DTypeTag::kFP8E4M3, CollectiveMode::kHfreduce, 5000, 1024);
  const auto a = run_collective(job);
  const auto b = run_collective(job);
  EXPECT_EQ(timeline_to_csv(a.timeline), timeline_to_csv(b.timeline));
  EXPECT_EQ(a.outputs, b.outputs);
}

TEST(Engine, ModeNames) {
  for (auto m : {CollectiveMode::kHfreduce, CollectiveMode::kHfreduceNvlink, CollectiveMode::kReduceOnly,
                 CollectiveMode::kBroadcast}) {
    EXPECT_EQ(parse_collective_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_collective_mode("ring"), Error);
}
