// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include <Eigen/Core>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace oracle {
namespace {

using hfsim::DType;
using hfsim::DTypeTag;

struct Fp8Format {
  int exp_bits;
  int man_bits;
  int bias;
  bool has_inf;  // E5M2 style; otherwise only all-ones is NaN
};

constexpr Fp8Format kE4M3{4, 3, 7, false};
constexpr Fp8Format kE5M2{5, 2, 15, true};

const Fp8Format& fp8_format(DType d) { return d.tag() == DTypeTag::kFP8E4M3 ? kE4M3 : kE5M2; }

double fp8_decode(const Fp8Format& f, std::uint32_t bits) {
  const bool neg = (bits & 0x80u) != 0;
  const std::uint32_t e = (bits >> f.man_bits) & ((1u << f.exp_bits) - 1);
  const std::uint32_t m = bits & ((1u << f.man_bits) - 1);
  const std::uint32_t e_max = (1u << f.exp_bits) - 1;
  double v;
  if (f.has_inf && e == e_max) {
    v = m == 0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
  } else if (!f.has_inf && e == e_max && m == (1u << f.man_bits) - 1) {
    v = std::numeric_limits<double>::quiet_NaN();
  } else if (e == 0) {
    v = std::pow(2.0, 1 - f.bias) * (static_cast<double>(m) / (1 << f.man_bits));
  } else {
    v = std::pow(2.0, static_cast<int>(e) - f.bias) * (1.0 + static_cast<double>(m) / (1 << f.man_bits));
  }
  return neg ? -v : v;
}

std::uint32_t fp8_encode(const Fp8Format& f, float x) {
  const std::uint32_t sign = std::signbit(x) ? 0x80u : 0u;
  constexpr std::uint32_t nan_code = 0x7Fu;  // a NaN in both formats
  if (std::isnan(x)) return sign | nan_code;
  // Largest finite value and half an ulp above it bound the rounding range.
  double max_finite = 0;
  std::uint32_t max_code = 0;
  for (std::uint32_t c = 0; c < 0x80u; ++c) {
    const double v = fp8_decode(f, c);
    if (std::isfinite(v) && v > max_finite) {
      max_finite = v;
      max_code = c;
    }
  }
  const double ulp_top = max_finite - fp8_decode(f, max_code - 1);
  const double a = std::fabs(static_cast<double>(x));
  if (a >= max_finite + ulp_top / 2) {
    // Halfway exactly rounds to the even neighbour only when max_code is even.
    const bool tie_to_max = a == max_finite + ulp_top / 2 && (max_code & 1u) == 0;
    if (!tie_to_max) return sign | (f.has_inf ? (((1u << f.exp_bits) - 1) << f.man_bits) : nan_code);
  }
  std::uint32_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::uint32_t c = 0; c < 0x80u; ++c) {
    const double v = fp8_decode(f, c);
    if (!std::isfinite(v)) continue;
    const double err = std::fabs(v - a);
    if (err < best_err || (err == best_err && (c & 1u) == 0 && (best & 1u) != 0)) {
      best_err = err;
      best = c;
    }
  }
  return sign | best;
}

/// 256 x 256 addition table per FP8 format, built once by brute force.
const std::vector<std::uint8_t>& fp8_add_table(DType d) {
  static std::once_flag once[2];
  static std::vector<std::uint8_t> tables[2];
  const int k = d.tag() == DTypeTag::kFP8E4M3 ? 0 : 1;
  std::call_once(once[k], [&] {
    const Fp8Format& f = fp8_format(d);
    std::array<float, 256> val{};
    for (std::uint32_t c = 0; c < 256; ++c) val[c] = static_cast<float>(fp8_decode(f, c));
    auto& t = tables[k];
    t.resize(256 * 256);
    for (std::uint32_t a = 0; a < 256; ++a) {
      for (std::uint32_t b = 0; b < 256; ++b) {
        t[a * 256 + b] = static_cast<std::uint8_t>(fp8_encode(f, val[a] + val[b]));
      }
    }
  });
  return tables[k];
}

}  // namespace

double decode(DType dtype, std::uint32_t bits) {
  switch (dtype.tag()) {
    case DTypeTag::kFP32: return std::bit_cast<float>(bits);
    case DTypeTag::kFP16:
      return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(static_cast<std::uint16_t>(bits)));
    case DTypeTag::kBF16:
      return static_cast<float>(Eigen::numext::bit_cast<Eigen::bfloat16>(static_cast<std::uint16_t>(bits)));
    case DTypeTag::kFP8E4M3:
    case DTypeTag::kFP8E5M2: return fp8_decode(fp8_format(dtype), bits);
  }
  throw std::logic_error("unknown dtype");
}

std::uint32_t encode(DType dtype, float x) {
  switch (dtype.tag()) {
    case DTypeTag::kFP32: return std::bit_cast<std::uint32_t>(x);
    case DTypeTag::kFP16: return Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(x));
    case DTypeTag::kBF16: return Eigen::numext::bit_cast<std::uint16_t>(Eigen::bfloat16(x));
    case DTypeTag::kFP8E4M3:
    case DTypeTag::kFP8E5M2: return fp8_encode(fp8_format(dtype), x);
  }
  throw std::logic_error("unknown dtype");
}

std::uint32_t add(DType dtype, std::uint32_t a, std::uint32_t b) {
  if (dtype.tag() == DTypeTag::kFP8E4M3 || dtype.tag() == DTypeTag::kFP8E5M2) {
    return fp8_add_table(dtype)[(a & 0xFFu) * 256 + (b & 0xFFu)];
  }
  const float s = static_cast<float>(decode(dtype, a)) + static_cast<float>(decode(dtype, b));
  return encode(dtype, s);
}

std::vector<std::uint32_t> raw_elements(const hfsim::Buffer& b) {
  const auto bytes = b.bytes();
  const std::size_t w = b.dtype().width_bytes();
  std::vector<std::uint32_t> out(b.element_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t v = 0;
    for (std::size_t k = 0; k < w; ++k) v |= static_cast<std::uint32_t>(bytes[i * w + k]) << (8 * k);
    out[i] = v;
  }
  return out;
}

std::vector<int> parents_of(const hfsim::BinaryTree& t) {
  std::vector<int> p;
  for (const auto& n : t.nodes) p.push_back(n.parent);
  return p;
}

namespace {

std::uint32_t subtree_total(DType dtype, const std::vector<int>& parent, const std::vector<std::uint32_t>& partial,
                            int v) {
  std::uint32_t acc = partial[static_cast<std::size_t>(v)];
  for (int c = 0; c < static_cast<int>(parent.size()); ++c) {
    if (parent[static_cast<std::size_t>(c)] == v) acc = add(dtype, acc, subtree_total(dtype, parent, partial, c));
  }
  return acc;
}

}  // namespace

std::vector<std::uint32_t> replay_allreduce(const ReplayInput& in) {
  const std::size_t nodes = in.inputs.size();
  const std::size_t gpus = in.inputs.front().size();
  const std::size_t elements = in.inputs.front().front().size();
  const std::size_t chunk_elems = in.chunk_size_bytes / in.dtype.width_bytes();
  std::vector<std::uint32_t> total(elements);
  std::vector<std::uint32_t> partial(nodes);
  for (std::size_t i = 0; i < elements; ++i) {
    for (std::size_t v = 0; v < nodes; ++v) {
      const auto& g = in.inputs[v];
      std::uint32_t acc;
      if (in.nvlink) {
        acc = add(in.dtype, g[0][i], g[1][i]);
        for (std::size_t p = 1; p < gpus / 2; ++p) acc = add(in.dtype, acc, add(in.dtype, g[2 * p][i], g[2 * p + 1][i]));
      } else {
        acc = g[0][i];
        for (std::size_t k = 1; k < gpus; ++k) acc = add(in.dtype, acc, g[k][i]);
      }
      partial[v] = acc;
    }
    const std::size_t chunk = i / chunk_elems;
    const std::vector<int>& parent = chunk % 2 == 0 ? in.parent_a : in.parent_b;
    int root = 0;
    for (std::size_t r = 0; r < parent.size(); ++r) {
      if (parent[r] < 0) root = static_cast<int>(r);
    }
    total[i] = subtree_total(in.dtype, parent, partial, root);
  }
  return total;
}

std::string check_allreduce(const hfsim::AllreduceJob& job, const hfsim::CollectiveResult& result) {
  ReplayInput in;
  in.dtype = job.inputs.front().front().dtype();
  for (const auto& row : job.inputs) {
    auto& r = in.inputs.emplace_back();
    for (const auto& b : row) r.push_back(raw_elements(b));
  }
  in.chunk_size_bytes = job.chunk_size_bytes;
  in.nvlink = job.mode == hfsim::CollectiveMode::kHfreduceNvlink;
  const hfsim::DoubleBinaryTree tree = job.tree ? *job.tree : hfsim::build_double_binary_tree(job.node_count());
  in.parent_a = parents_of(tree.tree_a);
  in.parent_b = parents_of(tree.tree_b);
  const auto expect = replay_allreduce(in);
  for (std::size_t v = 0; v < result.outputs.size(); ++v) {
    for (std::size_t g = 0; g < result.outputs[v].size(); ++g) {
      const auto got = raw_elements(result.outputs[v][g]);
      if (got.size() != expect.size()) return "size mismatch at node " + std::to_string(v);
      for (std::size_t i = 0; i < got.size(); ++i) {
        if (got[i] != expect[i]) {
          return "node " + std::to_string(v) + " gpu " + std::to_string(g) + " element " + std::to_string(i) +
                 ": got " + std::to_string(got[i]) + " want " + std::to_string(expect[i]);
        }
      }
    }
  }
  return {};
}

}  // namespace oracle
