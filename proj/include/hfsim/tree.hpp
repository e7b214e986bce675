// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

namespace hfsim {

inline constexpr int kNoRank = -1;

struct TreeNode {
  int parent = kNoRank;
  int left = kNoRank;   // lower-ranked child
  int right = kNoRank;  // higher-ranked child

  bool is_leaf() const { return left == kNoRank && right == kNoRank; }
  int child_count() const { return (left != kNoRank) + (right != kNoRank); }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// A spanning binary tree over ranks [0, n).
struct BinaryTree {
  int root = kNoRank;
  std::vector<TreeNode> nodes;

  int size() const { return static_cast<int>(nodes.size()); }
  /// Children of `rank` in fold order (ascending rank).
  std::vector<int> children(int rank) const;
  /// Ranks in post-order (children before parent), the order pass 1 completes in.
  std::vector<int> post_order() const;
  /// Edge count on the longest root-to-leaf path.
  int depth() const;

  friend bool operator==(const BinaryTree&, const BinaryTree&) = default;
};

/// Two spanning trees over the same ranks; every rank is interior in at
/// most one of them so that both trees can carry traffic at full rate.
struct DoubleBinaryTree {
  int n = 0;
  BinaryTree tree_a;
  BinaryTree tree_b;

  const BinaryTree& tree(int which) const { return which == 0 ? tree_a : tree_b; }

  friend bool operator==(const DoubleBinaryTree&, const DoubleBinaryTree&) = default;
};

/// In-order bit tree over positions [0, m): position p with lowest set bit b
/// hangs below (p ^ b) | (b << 1), or p ^ b when that is out of range. Odd
/// positions are always leaves and position 0 is the root with one child.
BinaryTree build_bit_tree(int m);

/// Bit tree over n ranks with rank r placed at position (r - root) mod n.
BinaryTree build_rooted_tree(int n, int root);

/// Deterministic construction for n >= 1. For even n, tree_b is the bit tree
/// and tree_a its mirror (rank r at position n-1-r), so interior ranks of the
/// two trees have opposite parity. For odd n the even construction spans
/// ranks [0, n-1) and rank n-1 joins each tree as a leaf under its root.
DoubleBinaryTree build_double_binary_tree(int n);

struct TreeCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct TreeValidation {
  std::vector<TreeCheck> checks;

  bool ok() const;
  std::string summary() const;
};

/// Reports each structural invariant separately: parent/child consistency,
/// spanning, binary fan-out, interior-in-at-most-one-tree, and the
/// floor(log2 n) + 2 depth bound.
TreeValidation validate_tree(const DoubleBinaryTree& t);

/// Parent-child edges whose endpoints sit in different zones, per tree.
std::array<int, 2> cross_zone_edge_count(const DoubleBinaryTree& t, const std::vector<int>& zone_of);

/// JSON adjacency dump used by the CLI.
std::string tree_to_json(const DoubleBinaryTree& t, int indent = 2);

}  // namespace hfsim
