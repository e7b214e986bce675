// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hfsim/core_types.hpp"

namespace hfsim {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'H', 'F', 'C', 'K'};
/// magic, u32 version, u64 index length
inline constexpr std::size_t kCheckpointPreamble = 16;

struct CheckpointEntry {
  std::string tensor_id;
  DType dtype;
  std::vector<std::uint64_t> shape;
  std::uint64_t offset = 0;  // relative to the payload start
  std::uint64_t length = 0;

  friend bool operator==(const CheckpointEntry&, const CheckpointEntry&) = default;
};

struct CheckpointIndex {
  std::uint32_t format_version = kCheckpointVersion;
  std::uint64_t created_at = 0;  // logical step
  std::uint64_t payload_bytes = 0;
  std::vector<CheckpointEntry> entries;  // ascending offset

  const CheckpointEntry* find(const std::string& tensor_id) const;

  friend bool operator==(const CheckpointIndex&, const CheckpointIndex&) = default;
};

struct NamedTensor {
  std::string id;
  Buffer data;
  /// Defaults to {element_count} when empty.
  std::vector<std::uint64_t> shape;
};

/// One batch-write request covering [offset, offset + length) of the blob.
struct BatchWrite {
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

struct SavedCheckpoint {
  std::vector<std::byte> blob;
  CheckpointIndex index;
  /// Chunk-aligned writes that together cover the blob exactly.
  std::vector<BatchWrite> writes;
};

/// Blob layout: "HFCK", u32 LE version, u64 LE index length, JSON index,
/// then the tensors' bytes concatenated in entry order.
SavedCheckpoint save_checkpoint(const std::vector<NamedTensor>& tensors, std::size_t chunk_size = kDefaultChunkBytes,
                                std::uint64_t step = 0);

struct ParsedCheckpoint {
  CheckpointIndex index;
  std::size_t payload_offset = 0;
};

/// Validates the header and that the index partitions the payload exactly,
/// so a blob cut short anywhere is rejected with format-error.
ParsedCheckpoint parse_checkpoint(std::span<const std::byte> blob);

/// Exactly one contiguous read of the entry's range.
Buffer load_tensor(std::span<const std::byte> blob, const ParsedCheckpoint& parsed, const std::string& tensor_id);
Buffer load_tensor(std::span<const std::byte> blob, const std::string& tensor_id);

struct SavePolicy {
  std::uint64_t interval = 300;  // steps between saves
  std::uint64_t keep_last = 3;

  void validate() const;
};

/// Steps of progress lost when a failure hits at `failure_step`.
std::uint64_t recovery_loss_bound(const SavePolicy& policy, std::uint64_t failure_step);

/// Save steps still retained at `current_step`, oldest first.
std::vector<std::uint64_t> retained_saves(const SavePolicy& policy, std::uint64_t current_step);

/// Human-readable listing: id, dtype, shape, offset, length per line.
std::string describe_index(const CheckpointIndex& index);

}  // namespace hfsim
