// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "hfsim/fabric.hpp"

namespace hfsim {

struct IncastConfig {
  int senders = 1;
  /// Grants outstanding at once; equal to `senders` disables admission control.
  int concurrency_limit = 1;
  double link_bw = 25e9;  // receiver link, bytes per second
  std::uint64_t per_request_bytes = 0;
  SimTime hop_latency = microseconds(2);
};

struct IncastResult {
  Timeline timeline;
  double goodput = 0;  // delivered bytes / makespan
  int peak_queue_requests = 0;
  std::uint64_t peak_queue_bytes = 0;
};

/// Many-to-one transfer under request-to-send admission. Each sender asks the
/// receiver for permission (one round trip); the receiver grants requests in
/// arrival order and holds at most `concurrency_limit` grants outstanding, so
/// a new grant waits for an earlier transfer to drain. Queue depth counts
/// granted requests whose data has not fully arrived.
IncastResult incast_rts(const IncastConfig& config);

}  // namespace hfsim
