// SPDX-License-Identifier: Apache-2.0
#include "hfsim/incast.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "hfsim/error.hpp"

namespace hfsim {

IncastResult incast_rts(const IncastConfig& config) {
  require(config.senders >= 1, ErrorCode::kInvalidArgument, "incast needs at least one sender");
  require(config.concurrency_limit >= 1, ErrorCode::kInvalidArgument, "concurrency limit must be >= 1");
  require(config.hop_latency >= 0, ErrorCode::kInvalidArgument, "hop latency must be non-negative");
  IncastResult out;
  if (config.per_request_bytes == 0) return out;

  Program prog;
  const ResourceId link = prog.add_resource("receiver.rx", config.link_bw);
  const int limit = std::min(config.concurrency_limit, config.senders);

  std::vector<TaskId> data(static_cast<std::size_t>(config.senders));
  for (int k = 0; k < config.senders; ++k) {
    const std::string sender = "s" + std::to_string(k);
    Task rts;
    rts.kind = EventKind::kNicSend;
    rts.phase = Phase::kRts;
    rts.chunk = k;
    rts.src = sender;
    rts.dst = "receiver";
    rts.latency = 2 * config.hop_latency;
    if (k >= limit) rts.deps.push_back(data[static_cast<std::size_t>(k - limit)]);
    const TaskId grant = prog.add_task(std::move(rts));

    Task xfer;
    xfer.kind = EventKind::kNicSend;
    xfer.phase = Phase::kIbSend;
    xfer.chunk = k;
    xfer.src = sender;
    xfer.dst = "receiver";
    xfer.bytes = config.per_request_bytes;
    xfer.uses = {{link, Direction::kNone}};
    xfer.deps = {grant};
    data[static_cast<std::size_t>(k)] = prog.add_task(std::move(xfer));
  }

  SimResult sim = run(prog);
  out.timeline = std::move(sim.timeline);

  // Sweep the granted-but-undelivered intervals; a delivery at t frees its
  // slot before a grant at the same t is counted.
  std::vector<std::pair<SimTime, int>> edges;
  for (const FabricEvent& e : out.timeline.events) {
    if (e.phase != Phase::kIbSend) continue;
    edges.emplace_back(e.t_start, +1);
    edges.emplace_back(e.t_end, -1);
  }
  std::sort(edges.begin(), edges.end());
  int depth = 0;
  for (const auto& [t, d] : edges) {
    depth += d;
    out.peak_queue_requests = std::max(out.peak_queue_requests, depth);
  }
  out.peak_queue_bytes = static_cast<std::uint64_t>(out.peak_queue_requests) * config.per_request_bytes;

  const double total = static_cast<double>(config.per_request_bytes) * config.senders;
  out.goodput = out.timeline.makespan > 0 ? total / ticks_to_seconds(out.timeline.makespan) : 0.0;
  return out;
}

}  // namespace hfsim
