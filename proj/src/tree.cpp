// SPDX-License-Identifier: Apache-2.0
#include "hfsim/tree.hpp"

#include <algorithm>
#include <bit>
#include <nlohmann/json.hpp>

#include "hfsim/error.hpp"

namespace hfsim {

std::vector<int> BinaryTree::children(int rank) const {
  std::vector<int> out;
  const TreeNode& node = nodes.at(static_cast<std::size_t>(rank));
  if (node.left != kNoRank) out.push_back(node.left);
  if (node.right != kNoRank) out.push_back(node.right);
  return out;
}

std::vector<int> BinaryTree::post_order() const {
  std::vector<int> order;
  if (root == kNoRank) return order;
  order.reserve(nodes.size());
  // Iterative reverse pre-order (node, right, left) reversed gives
  // post-order (left, right, node).
  std::vector<int> stack{root};
  while (!stack.empty()) {
    const int r = stack.back();
    stack.pop_back();
    order.push_back(r);
    for (int c : children(r)) stack.push_back(c);
  }
  std::reverse(order.begin(), order.end());
  return order;
}

int BinaryTree::depth() const {
  if (root == kNoRank) return 0;
  int best = 0;
  std::vector<std::pair<int, int>> stack{{root, 0}};
  while (!stack.empty()) {
    auto [r, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    for (int c : children(r)) stack.emplace_back(c, d + 1);
  }
  return best;
}

namespace {

void attach(BinaryTree& t, int parent, int child) {
  TreeNode& p = t.nodes[static_cast<std::size_t>(parent)];
  t.nodes[static_cast<std::size_t>(child)].parent = parent;
  if (p.left == kNoRank) {
    p.left = child;
  } else if (p.right == kNoRank) {
    p.right = child;
  } else {
    fail(ErrorCode::kProtocolViolation, "tree node " + std::to_string(parent) + " already has two children");
  }
  if (p.left != kNoRank && p.right != kNoRank && p.left > p.right) std::swap(p.left, p.right);
}

// Relabels a tree built over positions so that position p becomes rank label[p].
BinaryTree relabel(const BinaryTree& by_position, const std::vector<int>& label) {
  BinaryTree out;
  out.nodes.resize(by_position.nodes.size());
  out.root = label[static_cast<std::size_t>(by_position.root)];
  for (int p = 0; p < by_position.size(); ++p) {
    for (int c : by_position.children(p)) attach(out, label[static_cast<std::size_t>(p)], label[static_cast<std::size_t>(c)]);
  }
  return out;
}

}  // namespace

BinaryTree build_bit_tree(int m) {
  require(m >= 1, ErrorCode::kInvalidArgument, "tree needs at least one rank");
  BinaryTree t;
  t.root = 0;
  t.nodes.resize(static_cast<std::size_t>(m));
  for (int p = 1; p < m; ++p) {
    const int low = p & -p;
    int up = (p ^ low) | (low << 1);
    if (up >= m) up = p ^ low;
    attach(t, up, p);
  }
  return t;
}

BinaryTree build_rooted_tree(int n, int root) {
  require(root >= 0 && root < n, ErrorCode::kInvalidArgument, "root rank out of range");
  const BinaryTree base = build_bit_tree(n);
  std::vector<int> label(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) label[static_cast<std::size_t>(p)] = (p + root) % n;
  return relabel(base, label);
}

DoubleBinaryTree build_double_binary_tree(int n) {
  require(n >= 1, ErrorCode::kInvalidArgument, "double binary tree needs n >= 1");
  DoubleBinaryTree out;
  out.n = n;
  if (n == 1) {
    out.tree_a = build_bit_tree(1);
    out.tree_b = out.tree_a;
    return out;
  }

  const int m = (n % 2 == 0) ? n : n - 1;
  const BinaryTree base = build_bit_tree(m);
  std::vector<int> identity(static_cast<std::size_t>(m));
  std::vector<int> mirror(static_cast<std::size_t>(m));
  for (int p = 0; p < m; ++p) {
    identity[static_cast<std::size_t>(p)] = p;
    mirror[static_cast<std::size_t>(p)] = m - 1 - p;
  }
  out.tree_a = relabel(base, mirror);
  out.tree_b = relabel(base, identity);

  if (m != n) {
    // Bit-tree roots have a single child, so the spare rank fits under each
    // root without turning any leaf into an interior node.
    for (BinaryTree* t : {&out.tree_a, &out.tree_b}) {
      t->nodes.emplace_back();
      attach(*t, t->root, n - 1);
    }
  }
  return out;
}

bool TreeValidation::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const TreeCheck& c) { return c.passed; });
}

std::string TreeValidation::summary() const {
  std::string out;
  for (const auto& c : checks) {
    out += (c.passed ? "PASS " : "FAIL ") + c.name;
    if (!c.detail.empty()) out += " (" + c.detail + ")";
    out += "\n";
  }
  return out;
}

namespace {

bool in_range(int r, int n) { return r >= 0 && r < n; }

std::string check_links(const BinaryTree& t, int n) {
  if (t.size() != n) return "has " + std::to_string(t.size()) + " nodes, expected " + std::to_string(n);
  if (!in_range(t.root, n)) return "root out of range";
  if (t.nodes[static_cast<std::size_t>(t.root)].parent != kNoRank) return "root has a parent";
  for (int r = 0; r < n; ++r) {
    const TreeNode& node = t.nodes[static_cast<std::size_t>(r)];
    for (int c : {node.left, node.right}) {
      if (c == kNoRank) continue;
      if (!in_range(c, n)) return "rank " + std::to_string(r) + " has out-of-range child";
      if (t.nodes[static_cast<std::size_t>(c)].parent != r)
        return "child " + std::to_string(c) + " does not point back to " + std::to_string(r);
    }
    if (node.left != kNoRank && node.left == node.right) return "duplicate child at " + std::to_string(r);
    if (r != t.root) {
      if (!in_range(node.parent, n)) return "rank " + std::to_string(r) + " has no parent";
      const TreeNode& p = t.nodes[static_cast<std::size_t>(node.parent)];
      if (p.left != r && p.right != r)
        return "parent " + std::to_string(node.parent) + " does not list " + std::to_string(r);
    }
  }
  return {};
}

std::string check_spanning(const BinaryTree& t, int n) {
  if (t.size() != n || !in_range(t.root, n)) return "size or root mismatch";
  // Every parent chain must end at the root without revisiting a rank.
  for (int r = 0; r < n; ++r) {
    int cur = r;
    int steps = 0;
    while (cur != t.root) {
      const int next = t.nodes[static_cast<std::size_t>(cur)].parent;
      if (!in_range(next, n) || ++steps > n) return "rank " + std::to_string(r) + " does not reach the root";
      cur = next;
    }
  }
  // And the child links from the root must reach every rank exactly once.
  std::vector<int> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> stack{t.root};
  int visited = 0;
  while (!stack.empty()) {
    const int r = stack.back();
    stack.pop_back();
    if (!in_range(r, n) || seen[static_cast<std::size_t>(r)]++) return "child links revisit a rank";
    ++visited;
    const TreeNode& node = t.nodes[static_cast<std::size_t>(r)];
    if (node.left != kNoRank) stack.push_back(node.left);
    if (node.right != kNoRank) stack.push_back(node.right);
  }
  if (visited != n) return "child links reach " + std::to_string(visited) + " of " + std::to_string(n);
  return {};
}

}  // namespace

TreeValidation validate_tree(const DoubleBinaryTree& t) {
  TreeValidation report;
  const int n = t.n;
  if (n < 1) {
    report.checks.push_back({"size", false, "n must be >= 1"});
    return report;
  }
  const char* names[2] = {"tree_a", "tree_b"};
  for (int w = 0; w < 2; ++w) {
    const std::string links = check_links(t.tree(w), n);
    report.checks.push_back({std::string(names[w]) + ".links", links.empty(), links});
  }
  for (int w = 0; w < 2; ++w) {
    const std::string span = check_spanning(t.tree(w), n);
    report.checks.push_back({std::string(names[w]) + ".spanning", span.empty(), span});
  }

  std::string shared;
  if (t.tree_a.size() == n && t.tree_b.size() == n) {
    for (int r = 0; r < n && shared.empty(); ++r) {
      if (!t.tree_a.nodes[static_cast<std::size_t>(r)].is_leaf() &&
          !t.tree_b.nodes[static_cast<std::size_t>(r)].is_leaf())
        shared = "rank " + std::to_string(r) + " is interior in both trees";
    }
  } else {
    shared = "size mismatch";
  }
  report.checks.push_back({"interior_disjoint", shared.empty(), shared});

  const int bound = std::bit_width(static_cast<unsigned>(n)) - 1 + 2;
  for (int w = 0; w < 2; ++w) {
    const bool spans = report.checks[static_cast<std::size_t>(2 + w)].passed;
    const int d = spans ? t.tree(w).depth() : -1;
    report.checks.push_back({std::string(names[w]) + ".depth", spans && d <= bound,
                             "depth " + std::to_string(d) + ", bound " + std::to_string(bound)});
  }
  return report;
}

std::array<int, 2> cross_zone_edge_count(const DoubleBinaryTree& t, const std::vector<int>& zone_of) {
  require(static_cast<int>(zone_of.size()) >= t.n, ErrorCode::kInvalidArgument, "zone map must cover every rank");
  std::array<int, 2> out{0, 0};
  for (int w = 0; w < 2; ++w) {
    const BinaryTree& tree = t.tree(w);
    for (int r = 0; r < tree.size(); ++r) {
      const int p = tree.nodes[static_cast<std::size_t>(r)].parent;
      if (p != kNoRank && zone_of[static_cast<std::size_t>(p)] != zone_of[static_cast<std::size_t>(r)]) ++out[static_cast<std::size_t>(w)];
    }
  }
  return out;
}

std::string tree_to_json(const DoubleBinaryTree& t, int indent) {
  auto dump_tree = [](const BinaryTree& tree) {
    nlohmann::ordered_json j;
    j["root"] = tree.root;
    j["depth"] = tree.depth();
    nlohmann::ordered_json adj = nlohmann::ordered_json::array();
    for (int r = 0; r < tree.size(); ++r) {
      nlohmann::ordered_json entry;
      entry["rank"] = r;
      entry["parent"] = tree.nodes[static_cast<std::size_t>(r)].parent;
      entry["children"] = tree.children(r);
      adj.push_back(std::move(entry));
    }
    j["adjacency"] = std::move(adj);
    return j;
  };
  nlohmann::ordered_json j;
  j["n"] = t.n;
  j["tree_a"] = dump_tree(t.tree_a);
  j["tree_b"] = dump_tree(t.tree_b);
  return j.dump(indent);
}

}  // namespace hfsim
