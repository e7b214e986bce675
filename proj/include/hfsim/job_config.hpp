// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "hfsim/engine.hpp"

namespace hfsim {

/// Declarative allreduce job as read from JSON; inputs are generated from
/// the seed when the job is materialized.
struct JobSpec {
  ClusterTopology cluster;
  DType dtype = DTypeTag::kFP32;
  std::size_t elements = std::size_t{1} << 20;
  CollectiveMode mode = CollectiveMode::kHfreduce;
  H2DMode h2d_mode = H2DMode::kGdrCopy;
  std::size_t chunk_size_bytes = kDefaultChunkBytes;
  std::optional<int> root;
  std::size_t gdrcopy_threshold_bytes = kDefaultGdrCopyThreshold;
  std::uint64_t seed = 0;
};

/// `cluster` may be an inline object or a path relative to the job file.
/// Any unreadable or malformed input raises invalid-argument.
JobSpec load_job_spec(const std::string& path);
JobSpec parse_job_spec(const std::string& json_text, const std::string& base_dir = ".");

AllreduceJob materialize(const JobSpec& spec);

/// Per-run summary: achieved bandwidth per node, the analytic cap, ledger
/// totals, and the capacity check.
std::string collective_summary_json(const JobSpec& spec, const CollectiveResult& result, int indent = 2);

}  // namespace hfsim
