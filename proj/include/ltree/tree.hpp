#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ltree {

// Full binary tree over tokens 0..n-1, stored as a flat node arena.
// Leaves carry their token position via lo (hi = lo+1); internal nodes
// cover the contiguous span [lo, hi) of their descendants.
struct BinaryTree {
  struct Node {
    std::int32_t left = -1, right = -1;
    std::int32_t lo = 0, hi = 0;
  };

  std::vector<Node> nodes;
  std::int32_t root = -1;

  bool empty() const { return root < 0; }
  bool is_leaf(std::int32_t id) const { return nodes[id].left < 0; }
  std::size_t leaf_count() const {
    return empty() ? 0 : static_cast<std::size_t>(nodes[root].hi - nodes[root].lo);
  }

  std::int32_t add_leaf(std::int32_t pos) {
    nodes.push_back({-1, -1, pos, pos + 1});
    return static_cast<std::int32_t>(nodes.size() - 1);
  }

  std::int32_t add_internal(std::int32_t left, std::int32_t right) {
    const Node& l = nodes.at(left);
    const Node& r = nodes.at(right);
    if (l.hi != r.lo)
      throw std::invalid_argument("add_internal: spans [" + std::to_string(l.lo) +
                                  "," + std::to_string(l.hi) + ") and [" +
                                  std::to_string(r.lo) + "," + std::to_string(r.hi) +
                                  ") are not adjacent");
    nodes.push_back({left, right, l.lo, r.hi});
    return static_cast<std::int32_t>(nodes.size() - 1);
  }
};

// Internal-node spans of width >= 2, root included, sorted ascending.
inline std::vector<std::pair<std::int32_t, std::int32_t>> tree_spans(
    const BinaryTree& t) {
  std::vector<std::pair<std::int32_t, std::int32_t>> out;
  for (const auto& nd : t.nodes)
    if (nd.left >= 0 && nd.hi - nd.lo >= 2) out.emplace_back(nd.lo, nd.hi);
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {
inline void write_bracketed(const BinaryTree& t, std::int32_t id,
                            std::span<const std::string> tokens, std::string& out) {
  const BinaryTree::Node& nd = t.nodes[id];
  if (nd.left < 0) {
    out += tokens.empty() ? std::to_string(nd.lo) : tokens[nd.lo];
    return;
  }
  out += "( ";
  write_bracketed(t, nd.left, tokens, out);
  out += ' ';
  write_bracketed(t, nd.right, tokens, out);
  out += " )";
}
}  // namespace detail

// One-line s-expression; leaves print their token (or position if none given).
inline std::string to_bracketed(const BinaryTree& t,
                                std::span<const std::string> tokens = {}) {
  if (t.empty()) throw std::invalid_argument("to_bracketed: empty tree");
  if (!tokens.empty() && tokens.size() != t.leaf_count())
    throw std::invalid_argument("to_bracketed: " + std::to_string(tokens.size()) +
                                " tokens for " + std::to_string(t.leaf_count()) +
                                " leaves");
  std::string out;
  detail::write_bracketed(t, t.root, tokens, out);
  return out;
}

struct ParsedSentence {
  BinaryTree tree;
  std::vector<std::string> tokens;
};

// Parses corpus binary-parse strings like "( ( a b ) c )"; a bare token is a
// single-leaf tree. Rejects unbalanced or non-binary structure.
inline ParsedSentence parse_bracketed(std::string_view text) {
  ParsedSentence out;
  std::vector<std::vector<std::int32_t>> stack;
  std::vector<std::int32_t> top_level;
  std::size_t i = 0;
  std::int32_t tokno = 0;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error("parse_bracketed: " + msg + " at position " +
                             std::to_string(i));
  };
  auto emit = [&](std::int32_t id) {
    (stack.empty() ? top_level : stack.back()).push_back(id);
  };
  while (i < text.size()) {
    char c = text[i];
    if (c == ' ' || c == '\t') {
      ++i;
    } else if (c == '(') {
      stack.emplace_back();
      ++i;
    } else if (c == ')') {
      if (stack.empty()) fail("unbalanced ')'");
      std::vector<std::int32_t> group = std::move(stack.back());
      stack.pop_back();
      if (group.size() != 2)
        fail("non-binary group of " + std::to_string(group.size()));
      emit(out.tree.add_internal(group[0], group[1]));
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && text[j] != ' ' && text[j] != '\t' &&
             text[j] != '(' && text[j] != ')')
        ++j;
      out.tokens.emplace_back(text.substr(i, j - i));
      emit(out.tree.add_leaf(tokno++));
      i = j;
    }
  }
  if (!stack.empty()) fail("unbalanced '('");
  if (top_level.size() != 1)
    fail(top_level.empty() ? "empty input"
                           : "expected one tree, found " +
                                 std::to_string(top_level.size()));
  out.tree.root = top_level[0];
  return out;
}

}  // namespace ltree
