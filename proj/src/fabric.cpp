// SPDX-License-Identifier: Apache-2.0
#include "hfsim/fabric.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include "hfsim/error.hpp"

namespace hfsim {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kD2HWrite: return "D2H_WRITE";
    case EventKind::kHostRead: return "HOST_READ";
    case EventKind::kHostWrite: return "HOST_WRITE";
    case EventKind::kNicSend: return "NIC_SEND";
    case EventKind::kNicRecv: return "NIC_RECV";
    case EventKind::kH2D: return "H2D";
    case EventKind::kNvlinkXfer: return "NVLINK_XFER";
    case EventKind::kGpuCompute: return "GPU_COMPUTE";
  }
  return "?";
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kD2H: return "D2H";
    case Phase::kReduce: return "REDUCE";
    case Phase::kIbSend: return "IB_SEND";
    case Phase::kIbRecv: return "IB_RECV";
    case Phase::kH2D: return "H2D";
    case Phase::kNvlink: return "NVLINK";
    case Phase::kRts: return "RTS";
  }
  return "?";
}

ResourceId Program::add_resource(std::string name, double capacity, double bidir_efficiency) {
  require(capacity > 0 && std::isfinite(capacity), ErrorCode::kInvalidArgument,
          "resource '" + name + "' needs a positive capacity");
  require(bidir_efficiency > 0 && bidir_efficiency <= 1, ErrorCode::kInvalidArgument,
          "resource '" + name + "' bidirectional efficiency must lie in (0, 1]");
  resources_.push_back({std::move(name), capacity, bidir_efficiency});
  return static_cast<ResourceId>(resources_.size() - 1);
}

TaskId Program::add_task(Task task) {
  const auto id = static_cast<TaskId>(tasks_.size());
  for (TaskId d : task.deps) {
    require(d >= 0 && d < id, ErrorCode::kInvalidArgument, "task dependency must refer to an earlier task");
  }
  for (const ResourceUse& u : task.uses) {
    require(u.id >= 0 && u.id < static_cast<int>(resources_.size()), ErrorCode::kInvalidArgument,
            "task uses an unknown resource");
  }
  require(task.latency >= 0, ErrorCode::kInvalidArgument, "task latency must be non-negative");
  tasks_.push_back(std::move(task));
  return id;
}

TaskId Program::join(std::vector<TaskId> deps) {
  Task t;
  t.deps = std::move(deps);
  t.recorded = false;
  return add_task(std::move(t));
}

std::uint64_t MemOpLedger::NodeRow::total_reads() const {
  return std::accumulate(reads.begin(), reads.end(), std::uint64_t{0});
}

std::uint64_t MemOpLedger::NodeRow::total_writes() const {
  return std::accumulate(writes.begin(), writes.end(), std::uint64_t{0});
}

std::uint64_t MemOpLedger::total() const {
  std::uint64_t sum = 0;
  for (const auto& row : nodes) sum += row.total();
  return sum;
}

namespace {

struct Flow {
  TaskId task;
  double remaining;  // bytes
  double rate = 0;
  SimTime finish = 0;
  int open_segment = -1;  // index into segments, or -1
};

// Max-min fair rates by progressive filling. Every flow crossing a resource
// gets the same share of whatever capacity the already-frozen flows left.
void assign_rates(const std::vector<Resource>& resources, const std::vector<Task>& tasks,
                  std::vector<Flow>& flows) {
  struct Active {
    ResourceId id;
    double cap;
    double used = 0;
    int unfrozen = 0;
    std::uint8_t dirs = 0;
    std::vector<std::size_t> users;
  };
  std::vector<int> slot(resources.size(), -1);
  std::vector<Active> active;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    for (const ResourceUse& u : tasks[static_cast<std::size_t>(flows[i].task)].uses) {
      int& k = slot[static_cast<std::size_t>(u.id)];
      if (k < 0) {
        k = static_cast<int>(active.size());
        active.push_back({u.id, resources[static_cast<std::size_t>(u.id)].capacity, 0, 0, 0, {}});
      }
      Active& a = active[static_cast<std::size_t>(k)];
      a.users.push_back(i);
      ++a.unfrozen;
      if (u.dir == Direction::kToHost) a.dirs |= 1;
      if (u.dir == Direction::kFromHost) a.dirs |= 2;
    }
  }
  for (Active& a : active) {
    if (a.dirs == 3) a.cap *= resources[static_cast<std::size_t>(a.id)].bidir_efficiency;
  }

  std::vector<bool> frozen(flows.size(), false);
  std::size_t remaining = flows.size();
  auto share = [](const Active& a) { return std::max(0.0, a.cap - a.used) / a.unfrozen; };
  while (remaining > 0) {
    double best = std::numeric_limits<double>::infinity();
    for (const Active& a : active) {
      if (a.unfrozen > 0) best = std::min(best, share(a));
    }
    // Freeze every flow that touches a resource saturated at this share.
    std::vector<std::size_t> newly;
    for (const Active& a : active) {
      if (a.unfrozen == 0 || share(a) > best * (1 + 1e-12)) continue;
      for (std::size_t i : a.users) {
        if (frozen[i]) continue;
        frozen[i] = true;
        newly.push_back(i);
      }
    }
    for (std::size_t i : newly) {
      --remaining;
      flows[i].rate = best;
      for (const ResourceUse& u : tasks[static_cast<std::size_t>(flows[i].task)].uses) {
        Active& a = active[static_cast<std::size_t>(slot[static_cast<std::size_t>(u.id)])];
        a.used += best;
        --a.unfrozen;
      }
    }
  }
}

SimTime finish_after(SimTime now, double remaining, double rate) {
  if (remaining <= 0) return now;
  const double ticks = std::ceil(remaining * static_cast<double>(kTicksPerSecond) / rate);
  return now + std::max<SimTime>(1, static_cast<SimTime>(ticks));
}

}  // namespace

SimResult run(const Program& program) {
  const auto& tasks = program.tasks();
  const auto& resources = program.resources();
  const std::size_t nt = tasks.size();

  SimResult result;
  result.timeline.resources = resources;
  result.task_start.assign(nt, -1);
  result.task_end.assign(nt, -1);
  if (nt == 0) return result;

  std::vector<std::vector<TaskId>> dependents(nt);
  std::vector<int> pending(nt, 0);
  for (std::size_t i = 0; i < nt; ++i) {
    pending[i] = static_cast<int>(tasks[i].deps.size());
    for (TaskId d : tasks[i].deps) dependents[static_cast<std::size_t>(d)].push_back(static_cast<TaskId>(i));
  }

  // Segments are gathered per task, then renumbered once events are sorted.
  struct RawSegment {
    TaskId task;
    SimTime t0, t1;
    double rate;
  };
  std::vector<RawSegment> segments;

  using Timer = std::pair<SimTime, TaskId>;
  std::priority_queue<Timer, std::vector<Timer>, std::greater<>> timers;
  std::vector<Flow> flows;
  SimTime now = 0;
  std::size_t completed = 0;

  // Tasks whose dependencies are met at `now`; processed in id order.
  std::priority_queue<TaskId, std::vector<TaskId>, std::greater<>> ready;
  std::priority_queue<TaskId, std::vector<TaskId>, std::greater<>> done_now;

  auto activate = [&](TaskId id) {
    const Task& t = tasks[static_cast<std::size_t>(id)];
    if (t.uses.empty() || t.bytes == 0) {
      done_now.push(id);
    } else {
      flows.push_back({id, static_cast<double>(t.bytes)});
    }
  };

  for (std::size_t i = 0; i < nt; ++i) {
    if (pending[i] == 0) ready.push(static_cast<TaskId>(i));
  }

  bool flows_changed = true;
  while (completed < nt) {
    // Drain everything that happens at `now`.
    while (!ready.empty() || !done_now.empty()) {
      while (!ready.empty()) {
        const TaskId id = ready.top();
        ready.pop();
        result.task_start[static_cast<std::size_t>(id)] = now;
        const SimTime lat = tasks[static_cast<std::size_t>(id)].latency;
        if (lat > 0) {
          timers.emplace(now + lat, id);
        } else {
          activate(id);
          flows_changed = true;
        }
      }
      while (!done_now.empty()) {
        const TaskId id = done_now.top();
        done_now.pop();
        result.task_end[static_cast<std::size_t>(id)] = now;
        ++completed;
        for (TaskId d : dependents[static_cast<std::size_t>(id)]) {
          if (--pending[static_cast<std::size_t>(d)] == 0) ready.push(d);
        }
      }
    }
    if (completed == nt) break;

    if (flows_changed) {
      assign_rates(resources, tasks, flows);
      for (Flow& f : flows) {
        const bool extend = f.open_segment >= 0 &&
                            segments[static_cast<std::size_t>(f.open_segment)].rate == f.rate;
        if (!extend) {
          segments.push_back({f.task, now, now, f.rate});
          f.open_segment = static_cast<int>(segments.size() - 1);
        }
        f.finish = finish_after(now, f.remaining, f.rate);
      }
      flows_changed = false;
    }

    SimTime next = std::numeric_limits<SimTime>::max();
    if (!timers.empty()) next = timers.top().first;
    for (const Flow& f : flows) next = std::min(next, f.finish);
    require(next != std::numeric_limits<SimTime>::max(), ErrorCode::kProtocolViolation,
            "task graph stalled before every task completed");

    const double dt = static_cast<double>(next - now) / static_cast<double>(kTicksPerSecond);
    std::vector<Flow> still;
    still.reserve(flows.size());
    for (Flow& f : flows) {
      segments[static_cast<std::size_t>(f.open_segment)].t1 = next;
      if (f.finish == next) {
        done_now.push(f.task);
        flows_changed = true;
      } else {
        f.remaining = std::max(0.0, f.remaining - f.rate * dt);
        still.push_back(f);
      }
    }
    flows.swap(still);
    now = next;
    while (!timers.empty() && timers.top().first == now) {
      activate(timers.top().second);
      timers.pop();
      flows_changed = true;
    }
    // Flows activated by timers start at `now`; fall through to the drain.
  }

  // Events sorted by (start, end, task id) so CSV output reads chronologically.
  std::vector<TaskId> order;
  for (std::size_t i = 0; i < nt; ++i) {
    if (tasks[i].recorded) order.push_back(static_cast<TaskId>(i));
  }
  std::sort(order.begin(), order.end(), [&](TaskId a, TaskId b) {
    const auto ka = std::tuple(result.task_start[static_cast<std::size_t>(a)], result.task_end[static_cast<std::size_t>(a)], a);
    const auto kb = std::tuple(result.task_start[static_cast<std::size_t>(b)], result.task_end[static_cast<std::size_t>(b)], b);
    return ka < kb;
  });
  std::vector<int> event_of(nt, -1);
  Timeline& tl = result.timeline;
  tl.events.reserve(order.size());
  for (TaskId id : order) {
    const Task& t = tasks[static_cast<std::size_t>(id)];
    event_of[static_cast<std::size_t>(id)] = static_cast<int>(tl.events.size());
    tl.events.push_back({id, t.kind, t.phase, t.chunk, t.node, t.src, t.dst, t.bytes,
                         result.task_start[static_cast<std::size_t>(id)], result.task_end[static_cast<std::size_t>(id)],
                         t.uses});
  }
  for (const RawSegment& s : segments) {
    const int ev = event_of[static_cast<std::size_t>(s.task)];
    if (ev >= 0 && s.t1 > s.t0) tl.segments.push_back({ev, s.t0, s.t1, s.rate});
  }
  for (SimTime t : result.task_end) tl.makespan = std::max(tl.makespan, t);
  return result;
}

MemOpLedger ledger_from_timeline(const Timeline& timeline, int node_count) {
  require(node_count >= 0, ErrorCode::kInvalidArgument, "node count must be non-negative");
  MemOpLedger ledger;
  ledger.nodes.resize(static_cast<std::size_t>(node_count));
  for (const FabricEvent& e : timeline.events) {
    const auto phase = static_cast<int>(e.phase);
    if (phase >= kLedgerPhases) continue;
    const bool read = e.kind == EventKind::kHostRead;
    const bool write = e.kind == EventKind::kHostWrite || e.kind == EventKind::kD2HWrite;
    if (!read && !write) continue;
    require(e.node >= 0 && e.node < node_count, ErrorCode::kInvalidArgument, "event attributed to unknown node");
    auto& row = ledger.nodes[static_cast<std::size_t>(e.node)];
    (read ? row.reads : row.writes)[static_cast<std::size_t>(phase)] += e.bytes;
  }
  return ledger;
}

CapacityReport check_capacity(const Timeline& timeline, double tolerance) {
  CapacityReport report;
  const std::size_t nr = timeline.resources.size();
  struct Edge {
    SimTime t;
    double rate;  // signed
    Direction dir;
  };
  std::vector<std::vector<Edge>> edges(nr);
  for (const RateSegment& s : timeline.segments) {
    const FabricEvent& e = timeline.events[static_cast<std::size_t>(s.event)];
    for (const ResourceUse& u : e.uses) {
      edges[static_cast<std::size_t>(u.id)].push_back({s.t0, s.rate, u.dir});
      edges[static_cast<std::size_t>(u.id)].push_back({s.t1, -s.rate, u.dir});
    }
  }
  for (std::size_t r = 0; r < nr; ++r) {
    auto& list = edges[r];
    std::stable_sort(list.begin(), list.end(), [](const Edge& a, const Edge& b) { return a.t < b.t; });
    double load[3] = {0, 0, 0};
    const Resource& res = timeline.resources[r];
    for (std::size_t i = 0; i < list.size();) {
      const SimTime t = list[i].t;
      for (; i < list.size() && list[i].t == t; ++i) load[static_cast<int>(list[i].dir)] += list[i].rate;
      const bool both = load[1] > res.capacity * 1e-12 && load[2] > res.capacity * 1e-12;
      const double cap = res.capacity * (both ? res.bidir_efficiency : 1.0);
      const double util = (load[0] + load[1] + load[2]) / cap;
      if (util > report.worst_utilization) {
        report.worst_utilization = util;
        report.worst_resource = res.name;
      }
    }
  }
  report.ok = report.worst_utilization <= 1.0 + tolerance;
  return report;
}

std::string timeline_to_csv(const Timeline& timeline) {
  std::ostringstream out;
  out << "event,chunk,phase,src,dst,bytes,t_start,t_end\n";
  for (const FabricEvent& e : timeline.events) {
    out << to_string(e.kind) << ',' << e.chunk << ',' << to_string(e.phase) << ',' << e.src << ',' << e.dst << ','
        << e.bytes << ',' << format_seconds(e.t_start) << ',' << format_seconds(e.t_end) << '\n';
  }
  return out.str();
}

std::string ledger_to_csv(const MemOpLedger& ledger) {
  std::ostringstream out;
  out << "node,phase,host_read_bytes,host_write_bytes\n";
  for (std::size_t n = 0; n < ledger.nodes.size(); ++n) {
    const auto& row = ledger.nodes[n];
    for (int p = 0; p < kLedgerPhases; ++p) {
      out << n << ',' << to_string(static_cast<Phase>(p)) << ',' << row.reads[static_cast<std::size_t>(p)] << ','
          << row.writes[static_cast<std::size_t>(p)] << '\n';
    }
  }
  return out.str();
}

}  // namespace hfsim
