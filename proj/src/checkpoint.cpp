// SPDX-License-Identifier: Apache-2.0
#include "hfsim/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "hfsim/error.hpp"

namespace hfsim {

const CheckpointEntry* CheckpointIndex::find(const std::string& tensor_id) const {
  for (const auto& e : entries) {
    if (e.tensor_id == tensor_id) return &e;
  }
  return nullptr;
}

namespace {

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::span<const std::byte> in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(std::to_integer<unsigned>(in[at + i])) << (8 * i);
  return v;
}

std::uint64_t element_product(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

nlohmann::ordered_json index_to_json(const CheckpointIndex& index) {
  nlohmann::ordered_json j;
  j["format_version"] = index.format_version;
  j["created_at"] = index.created_at;
  j["payload_bytes"] = index.payload_bytes;
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& e : index.entries) {
    entries.push_back({{"id", e.tensor_id},
                       {"dtype", e.dtype.name()},
                       {"shape", e.shape},
                       {"offset", e.offset},
                       {"length", e.length}});
  }
  j["entries"] = std::move(entries);
  return j;
}

[[noreturn]] void corrupt(const std::string& what) { fail(ErrorCode::kFormatError, "corrupt checkpoint: " + what); }

}  // namespace

SavedCheckpoint save_checkpoint(const std::vector<NamedTensor>& tensors, std::size_t chunk_size, std::uint64_t step) {
  require(chunk_size > 0, ErrorCode::kInvalidArgument, "chunk size must be positive");
  SavedCheckpoint out;
  out.index.created_at = step;
  std::set<std::string> seen;
  std::uint64_t offset = 0;
  for (const NamedTensor& t : tensors) {
    require(seen.insert(t.id).second, ErrorCode::kInvalidArgument, "duplicate tensor id '" + t.id + "'");
    CheckpointEntry e;
    e.tensor_id = t.id;
    e.dtype = t.data.dtype();
    e.shape = t.shape.empty() ? std::vector<std::uint64_t>{t.data.element_count()} : t.shape;
    require(element_product(e.shape) == t.data.element_count(), ErrorCode::kInvalidArgument,
            "shape of '" + t.id + "' does not match its element count");
    e.offset = offset;
    e.length = t.data.size_bytes();
    offset += e.length;
    out.index.entries.push_back(std::move(e));
  }
  out.index.payload_bytes = offset;

  const std::string json = index_to_json(out.index).dump();
  out.blob.reserve(kCheckpointPreamble + json.size() + offset);
  for (char c : kCheckpointMagic) out.blob.push_back(static_cast<std::byte>(c));
  put_le<std::uint32_t>(out.blob, kCheckpointVersion);
  put_le<std::uint64_t>(out.blob, json.size());
  for (char c : json) out.blob.push_back(static_cast<std::byte>(c));
  for (const NamedTensor& t : tensors) {
    const auto bytes = t.data.bytes();
    out.blob.insert(out.blob.end(), bytes.begin(), bytes.end());
  }

  for (std::uint64_t at = 0; at < out.blob.size(); at += chunk_size) {
    out.writes.push_back({at, std::min<std::uint64_t>(chunk_size, out.blob.size() - at)});
  }
  return out;
}

ParsedCheckpoint parse_checkpoint(std::span<const std::byte> blob) {
  if (blob.size() < kCheckpointPreamble) corrupt("shorter than the fixed header");
  if (std::memcmp(blob.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) corrupt("bad magic");
  const auto version = get_le<std::uint32_t>(blob, 4);
  if (version != kCheckpointVersion) corrupt("unsupported version " + std::to_string(version));
  const auto index_len = get_le<std::uint64_t>(blob, 8);
  if (index_len > blob.size() - kCheckpointPreamble) corrupt("index runs past the end of the blob");

  ParsedCheckpoint parsed;
  parsed.payload_offset = kCheckpointPreamble + static_cast<std::size_t>(index_len);
  const std::string_view text(reinterpret_cast<const char*>(blob.data() + kCheckpointPreamble),
                              static_cast<std::size_t>(index_len));
  CheckpointIndex& index = parsed.index;
  try {
    const auto j = nlohmann::json::parse(text);
    index.format_version = j.at("format_version").get<std::uint32_t>();
    index.created_at = j.at("created_at").get<std::uint64_t>();
    index.payload_bytes = j.at("payload_bytes").get<std::uint64_t>();
    for (const auto& ej : j.at("entries")) {
      CheckpointEntry e;
      e.tensor_id = ej.at("id").get<std::string>();
      e.dtype = DType::parse(ej.at("dtype").get<std::string>());
      e.shape = ej.at("shape").get<std::vector<std::uint64_t>>();
      e.offset = ej.at("offset").get<std::uint64_t>();
      e.length = ej.at("length").get<std::uint64_t>();
      index.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    corrupt(std::string("unreadable index: ") + ex.what());
  } catch (const Error& ex) {
    corrupt(ex.what());
  }

  if (index.format_version != version) corrupt("index version disagrees with header");
  if (index.payload_bytes != blob.size() - parsed.payload_offset) {
    corrupt("payload is " + std::to_string(blob.size() - parsed.payload_offset) + " bytes, index expects " +
            std::to_string(index.payload_bytes));
  }
  std::uint64_t expect = 0;
  std::set<std::string> ids;
  for (const auto& e : index.entries) {
    if (!ids.insert(e.tensor_id).second) corrupt("duplicate id '" + e.tensor_id + "'");
    if (e.offset != expect) corrupt("entry '" + e.tensor_id + "' leaves a gap or overlaps its predecessor");
    if (e.length != element_product(e.shape) * e.dtype.width_bytes()) {
      corrupt("entry '" + e.tensor_id + "' length disagrees with its shape");
    }
    expect += e.length;
  }
  if (expect != index.payload_bytes) corrupt("entries do not cover the payload");
  return parsed;
}

Buffer load_tensor(std::span<const std::byte> blob, const ParsedCheckpoint& parsed, const std::string& tensor_id) {
  const CheckpointEntry* e = parsed.index.find(tensor_id);
  require(e != nullptr, ErrorCode::kNotFound, "no tensor '" + tensor_id + "' in checkpoint");
  const std::uint64_t begin = parsed.payload_offset + e->offset;
  if (begin > blob.size() || e->length > blob.size() - begin) corrupt("tensor '" + tensor_id + "' runs past the end");
  const auto range = blob.subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(e->length));
  return Buffer(e->dtype, static_cast<std::size_t>(e->length / e->dtype.width_bytes()),
                std::vector<std::byte>(range.begin(), range.end()));
}

Buffer load_tensor(std::span<const std::byte> blob, const std::string& tensor_id) {
  return load_tensor(blob, parse_checkpoint(blob), tensor_id);
}

void SavePolicy::validate() const {
  require(interval >= 1, ErrorCode::kInvalidArgument, "save interval must be >= 1");
  require(keep_last >= 1, ErrorCode::kInvalidArgument, "keep_last must be >= 1");
}

std::uint64_t recovery_loss_bound(const SavePolicy& policy, std::uint64_t failure_step) {
  policy.validate();
  return failure_step % policy.interval;
}

std::vector<std::uint64_t> retained_saves(const SavePolicy& policy, std::uint64_t current_step) {
  policy.validate();
  const std::uint64_t latest = current_step / policy.interval;  // save count minus one
  const std::uint64_t first = latest + 1 > policy.keep_last ? latest + 1 - policy.keep_last : 0;
  std::vector<std::uint64_t> out;
  for (std::uint64_t k = first; k <= latest; ++k) out.push_back(k * policy.interval);
  return out;
}

std::string describe_index(const CheckpointIndex& index) {
  std::vector<const CheckpointEntry*> sorted;
  for (const auto& e : index.entries) sorted.push_back(&e);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->offset < b->offset; });
  std::ostringstream out;
  out << "id,dtype,shape,offset,length\n";
  for (const auto* e : sorted) {
    out << e->tensor_id << ',' << e->dtype.name() << ',';
    for (std::size_t i = 0; i < e->shape.size(); ++i) out << (i ? "x" : "") << e->shape[i];
    out << ',' << e->offset << ',' << e->length << '\n';
  }
  return out.str();
}

}  // namespace hfsim
