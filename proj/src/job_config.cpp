// SPDX-License-Identifier: Apache-2.0
#include "hfsim/job_config.hpp"

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "hfsim/error.hpp"

namespace hfsim {

JobSpec parse_job_spec(const std::string& json_text, const std::string& base_dir) {
  JobSpec spec;
  try {
    const auto j = nlohmann::json::parse(json_text);
    require(j.is_object(), ErrorCode::kInvalidArgument, "job config must be a JSON object");
    const auto& c = j.at("cluster");
    if (c.is_string()) {
      spec.cluster = load_cluster((std::filesystem::path(base_dir) / c.get<std::string>()).string());
    } else {
      spec.cluster = c.get<ClusterTopology>();
    }
    if (j.contains("dtype")) spec.dtype = DType::parse(j["dtype"].get<std::string>());
    spec.elements = j.value("elements", spec.elements);
    if (j.contains("mode")) spec.mode = parse_collective_mode(j["mode"].get<std::string>());
    if (j.contains("h2d_mode")) spec.h2d_mode = parse_h2d_mode(j["h2d_mode"].get<std::string>());
    spec.chunk_size_bytes = j.value("chunk_size_bytes", spec.chunk_size_bytes);
    if (j.contains("root") && !j["root"].is_null()) spec.root = j["root"].get<int>();
    spec.gdrcopy_threshold_bytes = j.value("gdrcopy_threshold_bytes", spec.gdrcopy_threshold_bytes);
    spec.seed = j.value("seed", spec.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed job config: ") + e.what());
  }
  spec.cluster.validate();
  return spec;
}

JobSpec load_job_spec(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kInvalidArgument, "cannot open job config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_job_spec(text.str(), std::filesystem::path(path).parent_path().string());
}

AllreduceJob materialize(const JobSpec& spec) {
  AllreduceJob job = AllreduceJob::random(spec.cluster, spec.dtype, spec.elements, spec.seed, spec.mode);
  job.h2d_mode = spec.h2d_mode;
  job.chunk_size_bytes = spec.chunk_size_bytes;
  job.root = spec.root;
  job.gdrcopy_threshold_bytes = spec.gdrcopy_threshold_bytes;
  return job;
}

std::string collective_summary_json(const JobSpec& spec, const CollectiveResult& result, int indent) {
  const NodeTopology& node = spec.cluster.nodes.front();
  const bool nvlink = spec.mode == CollectiveMode::kHfreduceNvlink;
  const bool allreduce = nvlink || spec.mode == CollectiveMode::kHfreduce;
  const int multiplier = memory_ops_multiplier(spec.h2d_mode, node.gpus, nvlink);
  const std::uint64_t expected =
      static_cast<std::uint64_t>(multiplier) * result.bytes_per_gpu * static_cast<std::uint64_t>(spec.cluster.node_count());
  const CapacityReport cap = check_capacity(result.timeline);

  nlohmann::ordered_json j;
  j["mode"] = to_string(spec.mode);
  j["h2d_mode"] = to_string(spec.h2d_mode);
  j["nodes"] = spec.cluster.node_count();
  j["gpus_per_node"] = node.gpus;
  j["dtype"] = spec.dtype.name();
  j["elements"] = spec.elements;
  j["bytes_per_gpu"] = result.bytes_per_gpu;
  j["chunk_size_bytes"] = spec.chunk_size_bytes;
  j["seed"] = spec.seed;
  j["events"] = result.timeline.events.size();
  j["makespan_s"] = format_seconds(result.timeline.makespan);
  j["node_bandwidth"] = result.node_bandwidth;
  j["min_bandwidth"] = result.min_bandwidth();
  j["ledger_total_bytes"] = result.ledger.total();
  if (allreduce) {
    j["memory_ops_multiplier"] = multiplier;
    j["theoretical_peak_bw"] = theoretical_peak_bw(node.memory_bw, multiplier);
    j["expected_ledger_bytes"] = expected;
  }
  j["capacity_ok"] = cap.ok;
  j["worst_utilization"] = cap.worst_utilization;
  return j.dump(indent);
}

}  // namespace hfsim
