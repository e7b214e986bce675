// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>
#include <functional>
#include <random>

#include "hfsim/checkpoint.hpp"
#include "hfsim/error.hpp"

using namespace hfsim;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

std::vector<NamedTensor> tensors(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<NamedTensor> out;
  for (int i = 0; i < count; ++i) {
    const DType d = kAllDTypes[rng() % 5];
    const std::uint64_t rows = 1 + rng() % 4;
    const std::uint64_t cols = rng() % 300;
    out.push_back({"t" + std::to_string(i), buffer_fill_pattern(d, rows * cols, rng()), {rows, cols}});
  }
  return out;
}

// Rewrites the JSON index in place, keeping the preamble consistent.
std::vector<std::byte> with_index(const std::vector<std::byte>& blob, const std::string& index) {
  std::uint64_t old_len = 0;
  for (int i = 0; i < 8; ++i) old_len |= static_cast<std::uint64_t>(blob[8 + static_cast<std::size_t>(i)]) << (8 * i);
  std::vector<std::byte> out(blob.begin(), blob.begin() + 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((index.size() >> (8 * i)) & 0xFF));
  for (char c : index) out.push_back(static_cast<std::byte>(c));
  out.insert(out.end(), blob.begin() + static_cast<std::ptrdiff_t>(kCheckpointPreamble + old_len), blob.end());
  return out;
}

std::string index_text(const std::vector<std::byte>& blob) {
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(blob[8 + static_cast<std::size_t>(i)]) << (8 * i);
  return std::string(reinterpret_cast<const char*>(blob.data()) + kCheckpointPreamble, len);
}

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  if (pos != std::string::npos) s.replace(pos, from.size(), to);
  return s;
}

}  // namespace

TEST(Checkpoint, RoundTripIsByteExact) {
  const auto ts = tensors(100, 9);
  const SavedCheckpoint s = save_checkpoint(ts, 4096, 1200);
  EXPECT_EQ(s.index.created_at, 1200u);
  const ParsedCheckpoint p = parse_checkpoint(s.blob);
  EXPECT_EQ(p.index, s.index);
  for (const auto& t : ts) {
    const Buffer b = load_tensor(s.blob, p, t.id);
    EXPECT_EQ(b, t.data) << t.id;
    const CheckpointEntry* e = p.index.find(t.id);
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(e->shape, t.shape);
    EXPECT_EQ(e->dtype, t.data.dtype());
  }
}

TEST(Checkpoint, OffsetsAreContiguous) {
  const SavedCheckpoint s = save_checkpoint(tensors(20, 2));
  std::uint64_t next = 0;
  for (const auto& e : s.index.entries) {
    EXPECT_EQ(e.offset, next);
    next += e.length;
  }
  EXPECT_EQ(next, s.index.payload_bytes);
}

TEST(Checkpoint, BatchWritesCoverBlob) {
  const SavedCheckpoint s = save_checkpoint(tensors(30, 4), 1000);
  std::uint64_t next = 0;
  for (const auto& w : s.writes) {
    EXPECT_EQ(w.offset, next);
    EXPECT_LE(w.length, 1000u);
    next += w.length;
  }
  EXPECT_EQ(next, s.blob.size());
}

TEST(Checkpoint, EveryTruncationIsFormatError) {
  const SavedCheckpoint s = save_checkpoint(tensors(6, 5));
  for (std::size_t len = 0; len < s.blob.size(); ++len) {
    const std::span<const std::byte> cut(s.blob.data(), len);
    EXPECT_EQ(code_of([&] { (void)parse_checkpoint(cut); }), ErrorCode::kFormatError) << len;
  }
}

TEST(Checkpoint, CorruptHeadersAreFormatErrors) {
  const SavedCheckpoint s = save_checkpoint(tensors(3, 6));
  auto bad_magic = s.blob;
  bad_magic[0] = std::byte{'X'};
  EXPECT_EQ(code_of([&] { (void)parse_checkpoint(bad_magic); }), ErrorCode::kFormatError);
  auto bad_version = s.blob;
  bad_version[4] = std::byte{2};
  EXPECT_EQ(code_of([&] { (void)parse_checkpoint(bad_version); }), ErrorCode::kFormatError);
  auto trailing = s.blob;
  trailing.push_back(std::byte{0});
  EXPECT_EQ(code_of([&] { (void)parse_checkpoint(trailing); }), ErrorCode::kFormatError);

  const std::string idx = index_text(s.blob);
  auto not_json = with_index(s.blob, "{" + idx);
  EXPECT_EQ(code_of([&] { (void)parse_checkpoint(not_json); }), ErrorCode::kFormatError);
  const auto& e0 = s.index.entries[0];
  const std::string len_field = "\"length\":" + std::to_string(e0.length);
  ASSERT_NE(idx.find(len_field), std::string::npos);
  auto wrong_len = with_index(s.blob, replace_once(idx, len_field, "\"length\":" + std::to_string(e0.length + 1)));
  EXPECT_EQ(code_of([&] { (void)parse_checkpoint(wrong_len); }), ErrorCode::kFormatError);
}

TEST(Checkpoint, UnknownIdIsNotFound) {
  const SavedCheckpoint s = save_checkpoint(tensors(3, 7));
  EXPECT_EQ(code_of([&] { (void)load_tensor(s.blob, "missing"); }), ErrorCode::kNotFound);
}

TEST(Checkpoint, SaveValidation) {
  auto ts = tensors(2, 8);
  ts[1].id = ts[0].id;
  EXPECT_EQ(code_of([&] { (void)save_checkpoint(ts); }), ErrorCode::kInvalidArgument);
  auto shaped = tensors(1, 8);
  shaped[0].shape = {shaped[0].data.element_count() + 1};
  EXPECT_EQ(code_of([&] { (void)save_checkpoint(shaped); }), ErrorCode::kInvalidArgument);
  auto unshaped = tensors(1, 8);
  unshaped[0].shape.clear();
  const auto s = save_checkpoint(unshaped);
  EXPECT_EQ(s.index.entries[0].shape, std::vector<std::uint64_t>{unshaped[0].data.element_count()});
}

TEST(Checkpoint, EmptyCheckpoint) {
  const SavedCheckpoint s = save_checkpoint({});
  EXPECT_TRUE(parse_checkpoint(s.blob).index.entries.empty());
}

TEST(Checkpoint, DeterministicBlob) {
  EXPECT_EQ(save_checkpoint(tensors(10, 1), 4096, 3).blob, save_checkpoint(tensors(10, 1), 4096, 3).blob);
}

TEST(SavePolicy, LossBoundBelowInterval) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    SavePolicy p;
    p.interval = 1 + rng() % 10000;
    const std::uint64_t step = rng() % 100'000'000;
    const auto loss = recovery_loss_bound(p, step);
    EXPECT_LT(loss, p.interval);
    EXPECT_EQ((step - loss) % p.interval, 0u);
  }
  SavePolicy bad;
  bad.interval = 0;
  EXPECT_EQ(code_of([&] { (void)recovery_loss_bound(bad, 3); }), ErrorCode::kInvalidArgument);
}

TEST(SavePolicy, RetainsLastSaves) {
  SavePolicy p;
  EXPECT_EQ(retained_saves(p, 0), std::vector<std::uint64_t>{0});
  EXPECT_EQ(retained_saves(p, 1000), (std::vector<std::uint64_t>{300, 600, 900}));
}

TEST(Checkpoint, DescribeIndexSortedByOffset) {
  const SavedCheckpoint s = save_checkpoint(tensors(4, 3));
  const std::string d = describe_index(s.index);
  EXPECT_EQ(d.substr(0, d.find('\n')), "id,dtype,shape,offset,length");
  EXPECT_LT(d.find("t0,"), d.find("t3,"));
}
