// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "hfsim/error.hpp"
#include "hfsim/fabric.hpp"

using namespace hfsim;

namespace {

Task flow(std::uint64_t bytes, std::vector<ResourceUse> uses, std::vector<TaskId> deps = {}, SimTime latency = 0) {
  Task t;
  t.kind = EventKind::kHostRead;
  t.phase = Phase::kReduce;
  t.node = 0;
  t.bytes = bytes;
  t.uses = std::move(uses);
  t.deps = std::move(deps);
  t.latency = latency;
  return t;
}

constexpr SimTime kSecond = kTicksPerSecond;

}  // namespace

TEST(Fabric, SingleFlowTakesBytesOverCapacity) {
  Program p;
  const auto r = p.add_resource("mem", 1e9);
  p.add_task(flow(1'000'000'000, {{r}}));
  const SimResult s = run(p);
  ASSERT_EQ(s.timeline.events.size(), 1u);
  EXPECT_EQ(s.timeline.events[0].t_end, kSecond);
  EXPECT_EQ(s.timeline.makespan, kSecond);
}

TEST(Fabric, ConcurrentFlowsShareEqually) {
  Program p;
  const auto r = p.add_resource("mem", 1e9);
  p.add_task(flow(500'000'000, {{r}}));
  p.add_task(flow(500'000'000, {{r}}));
  const SimResult s = run(p);
  EXPECT_EQ(s.task_end[0], kSecond);
  EXPECT_EQ(s.task_end[1], kSecond);
}

TEST(Fabric, ShortFlowFinishesThenLongFlowSpeedsUp) {
  Program p;
  const auto r = p.add_resource("link", 1e9);
  p.add_task(flow(250'000'000, {{r}}));
  p.add_task(flow(750'000'000, {{r}}));
  const SimResult s = run(p);
  EXPECT_EQ(s.task_end[0], kSecond / 2);
  EXPECT_EQ(s.task_end[1], kSecond);
}

TEST(Fabric, MaxMinFairnessAcrossTwoResources) {
  Program p;
  const auto a = p.add_resource("a", 1e9);
  const auto b = p.add_resource("b", 0.25e9);
  p.add_task(flow(750'000'000, {{a}}));
  p.add_task(flow(250'000'000, {{a}, {b}}));
  const SimResult s = run(p);
  EXPECT_EQ(s.task_end[0], kSecond);
  EXPECT_EQ(s.task_end[1], kSecond);
  EXPECT_TRUE(check_capacity(s.timeline).ok);
}

TEST(Fabric, DependenciesAndLatency) {
  Program p;
  const auto r = p.add_resource("r", 1e9);
  const TaskId t0 = p.add_task(flow(1'000'000, {{r}}));
  const TaskId t1 = p.add_task(flow(1'000'000, {{r}}, {t0}, microseconds(5)));
  const SimResult s = run(p);
  EXPECT_EQ(s.task_end[static_cast<std::size_t>(t0)], microseconds(1000));
  EXPECT_EQ(s.task_start[static_cast<std::size_t>(t1)], microseconds(1000));
  EXPECT_EQ(s.task_end[static_cast<std::size_t>(t1)], microseconds(2005));
}

TEST(Fabric, LatencyOnlyTask) {
  Program p;
  Task t;
  t.latency = microseconds(2);
  p.add_task(t);
  const SimResult s = run(p);
  EXPECT_EQ(s.timeline.makespan, microseconds(2));
}

TEST(Fabric, JoinIsNotRecorded) {
  Program p;
  const auto r = p.add_resource("r", 1e9);
  const TaskId a = p.add_task(flow(1000, {{r}}));
  const TaskId j = p.join({a});
  p.add_task(flow(1000, {{r}}, {j}));
  const SimResult s = run(p);
  EXPECT_EQ(s.timeline.events.size(), 2u);
}

TEST(Fabric, BidirectionalEfficiencyAppliesOnlyWhenBothDirectionsActive) {
  Program p;
  const auto port = p.add_resource("port", 1e9, 0.8);
  p.add_task(flow(400'000'000, {{port, Direction::kToHost}}));
  p.add_task(flow(400'000'000, {{port, Direction::kFromHost}}));
  const SimResult s = run(p);
  // 0.8e9 shared by two flows: 0.4e9 each.
  EXPECT_EQ(s.task_end[0], kSecond);
  EXPECT_EQ(s.task_end[1], kSecond);

  Program q;
  const auto port2 = q.add_resource("port", 1e9, 0.8);
  q.add_task(flow(400'000'000, {{port2, Direction::kToHost}}));
  q.add_task(flow(400'000'000, {{port2, Direction::kToHost}}));
  EXPECT_EQ(run(q).task_end[0], kSecond * 8 / 10);
}

TEST(Fabric, CapacityCheckFlagsOverload) {
  Timeline t;
  t.resources.push_back({"r", 1e9, 1.0});
  FabricEvent e;
  e.uses = {{0}};
  t.events = {e, e};
  t.segments = {{0, 0, 100, 0.6e9}, {1, 50, 100, 0.6e9}};
  const auto rep = check_capacity(t);
  EXPECT_FALSE(rep.ok);
  EXPECT_NEAR(rep.worst_utilization, 1.2, 1e-12);
  EXPECT_EQ(rep.worst_resource, "r");
}

TEST(Fabric, LedgerCountsHostTraffic) {
  Program p;
  const auto r = p.add_resource("mem", 1e9);
  Task w = flow(100, {{r}});
  w.kind = EventKind::kD2HWrite;
  w.phase = Phase::kD2H;
  p.add_task(w);
  Task rd = flow(70, {{r}});
  rd.phase = Phase::kIbSend;
  p.add_task(rd);
  Task nic = flow(999, {{r}});
  nic.kind = EventKind::kNicSend;
  p.add_task(nic);
  const SimResult s = run(p);
  const MemOpLedger l = ledger_from_timeline(s.timeline, 1);
  EXPECT_EQ(l.nodes[0].writes[static_cast<std::size_t>(Phase::kD2H)], 100u);
  EXPECT_EQ(l.nodes[0].reads[static_cast<std::size_t>(Phase::kIbSend)], 70u);
  EXPECT_EQ(l.total(), 170u);
  EXPECT_NE(ledger_to_csv(l).find("node,phase"), std::string::npos);
  EXPECT_NE(timeline_to_csv(s.timeline).find("event,chunk,phase"), std::string::npos);
}

TEST(Fabric, ProgramValidation) {
  Program p;
  EXPECT_THROW(p.add_resource("bad", 0), Error);
  Task t;
  t.deps = {0};
  EXPECT_THROW(p.add_task(t), Error);
}

TEST(Fabric, DeterministicTimeline) {
  auto build = [] {
    Program p;
    const auto a = p.add_resource("a", 3e9);
    const auto b = p.add_resource("b", 1e9);
    for (int i = 0; i < 20; ++i) {
      p.add_task(flow(1000 + static_cast<std::uint64_t>(i) * 37, {{i % 2 ? a : b}}, {}, microseconds(i % 3)));
    }
    return timeline_to_csv(run(p).timeline);
  };
  EXPECT_EQ(build(), build());
}
