// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hfsim/sim_time.hpp"

namespace hfsim {

enum class EventKind : std::uint8_t {
  kD2HWrite,
  kHostRead,
  kHostWrite,
  kNicSend,
  kNicRecv,
  kH2D,
  kNvlinkXfer,
  kGpuCompute,
};

/// Phase label carried by each event. The first five are the host-memory
/// ledger phases.
enum class Phase : std::uint8_t { kD2H, kReduce, kIbSend, kIbRecv, kH2D, kNvlink, kRts };

inline constexpr int kLedgerPhases = 5;

std::string_view to_string(EventKind kind);
std::string_view to_string(Phase phase);

/// Traffic direction through a duplex resource, relative to the host.
enum class Direction : std::uint8_t { kNone, kToHost, kFromHost };

using ResourceId = int;
using TaskId = int;

struct Resource {
  std::string name;
  double capacity = 0;  // bytes per second
  /// Capacity multiplier while flows in both directions are active.
  double bidir_efficiency = 1.0;
};

struct ResourceUse {
  ResourceId id = 0;
  Direction dir = Direction::kNone;

  friend bool operator==(const ResourceUse&, const ResourceUse&) = default;
};

/// One schedulable unit: after every dependency completes, waits `latency`,
/// then streams `bytes` through all of `uses` at a common max-min fair rate.
/// A task with no resource uses completes after its latency alone.
struct Task {
  EventKind kind = EventKind::kHostRead;
  Phase phase = Phase::kD2H;
  int chunk = -1;
  int node = -1;
  std::string src;
  std::string dst;
  std::uint64_t bytes = 0;
  std::vector<ResourceUse> uses;
  SimTime latency = 0;
  std::vector<TaskId> deps;
  /// Pure synchronization points are scheduled but kept off the timeline.
  bool recorded = true;
};

class Program {
 public:
  ResourceId add_resource(std::string name, double capacity, double bidir_efficiency = 1.0);
  TaskId add_task(Task task);
  /// Zero-cost join of `deps`, not recorded on the timeline.
  TaskId join(std::vector<TaskId> deps);

  const std::vector<Resource>& resources() const { return resources_; }
  const std::vector<Task>& tasks() const { return tasks_; }
  bool empty() const { return tasks_.empty(); }

 private:
  std::vector<Resource> resources_;
  std::vector<Task> tasks_;
};

struct FabricEvent {
  TaskId task = 0;
  EventKind kind = EventKind::kHostRead;
  Phase phase = Phase::kD2H;
  int chunk = -1;
  int node = -1;
  std::string src;
  std::string dst;
  std::uint64_t bytes = 0;
  SimTime t_start = 0;  // dependencies satisfied
  SimTime t_end = 0;    // last byte delivered
  std::vector<ResourceUse> uses;
};

/// Piecewise-constant transfer rate of one event.
struct RateSegment {
  int event = 0;  // index into Timeline::events
  SimTime t0 = 0;
  SimTime t1 = 0;
  double rate = 0;  // bytes per second
};

struct Timeline {
  std::vector<FabricEvent> events;
  std::vector<RateSegment> segments;
  std::vector<Resource> resources;
  SimTime makespan = 0;

  bool empty() const { return events.empty(); }
};

/// Host DRAM traffic per node, broken down by phase.
struct MemOpLedger {
  struct NodeRow {
    std::array<std::uint64_t, kLedgerPhases> reads{};
    std::array<std::uint64_t, kLedgerPhases> writes{};

    std::uint64_t total_reads() const;
    std::uint64_t total_writes() const;
    std::uint64_t total() const { return total_reads() + total_writes(); }
  };

  std::vector<NodeRow> nodes;

  std::uint64_t total() const;
};

struct SimResult {
  Timeline timeline;
  std::vector<SimTime> task_start;  // indexed by TaskId
  std::vector<SimTime> task_end;
};

/// Runs the task graph to completion on a single-threaded event loop.
/// Concurrent flows share every resource max-min fairly, which reduces to an
/// equal split among the users of a single bottleneck.
SimResult run(const Program& program);

/// Ledger recomputed from the events: HOST_READ counts as a read,
/// HOST_WRITE and D2H_WRITE as writes, attributed to the event's node.
MemOpLedger ledger_from_timeline(const Timeline& timeline, int node_count);

struct CapacityReport {
  bool ok = true;
  double worst_utilization = 0;  // max over resources and time of load / capacity
  std::string worst_resource;
};

/// Sweeps the rate segments of every resource and verifies the aggregate
/// never exceeds its (direction-adjusted) capacity.
CapacityReport check_capacity(const Timeline& timeline, double tolerance = 1e-9);

/// CSV columns: event,chunk,phase,src,dst,bytes,t_start,t_end
std::string timeline_to_csv(const Timeline& timeline);
/// CSV columns: node,phase,host_read_bytes,host_write_bytes
std::string ledger_to_csv(const MemOpLedger& ledger);

}  // namespace hfsim
