#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ltree/rng.hpp"
#include "ltree/tensor.hpp"
#include "ltree/tree.hpp"

namespace ltree {

// (h, c) pair of a tree node, as graph tensors of length d.
struct NodeState {
  Tensor h, c;
};

// Binary Tree-LSTM shared by leaves and internal nodes (single nonterminal).
// Pre-activation [i; f_L; f_R; u; o] = W·w + U·h_L + V·h_R + b, sliced in that
// order; c = c_L⊙σ(f_L) + c_R⊙σ(f_R) + tanh(u)⊙σ(i); h = σ(o)⊙tanh(c).
class TreeLstm {
 public:
  explicit TreeLstm(std::size_t d)
      : d_(d),
        W_("treelstm.W", {5 * d, d}),
        U_("treelstm.U", {5 * d, d}),
        V_("treelstm.V", {5 * d, d}),
        b_("treelstm.b", {5 * d}) {}

  // Glorot-uniform matrices; zero biases except forget-gate slices at +1.
  void init(Rng& rng) {
    for (Param* m : {&W_, &U_, &V_}) {
      double bound = std::sqrt(6.0 / double(m->rows() + m->cols()));
      for (double& v : m->value) v = rng.uniform(-bound, bound);
    }
    std::fill(b_.value.begin(), b_.value.end(), 0.0);
    for (std::size_t j = d_; j < 3 * d_; ++j) b_.value[j] = 1.0;
  }

  std::size_t d() const { return d_; }
  std::vector<Param*> params() { return {&W_, &U_, &V_, &b_}; }

  NodeState zero_state(Graph& g) const {
    Tensor z = g.zeros(d_);
    return {z, z};
  }

  NodeState compose(Graph& g, Tensor w, const NodeState& left,
                    const NodeState& right) {
    Tensor pre = g.add_n({g.matmul(g.leaf(W_), w), g.matmul(g.leaf(U_), left.h),
                          g.matmul(g.leaf(V_), right.h), g.leaf(b_)});
    Tensor i = g.slice(pre, 0, d_);
    Tensor f_l = g.slice(pre, d_, d_);
    Tensor f_r = g.slice(pre, 2 * d_, d_);
    Tensor u = g.slice(pre, 3 * d_, d_);
    Tensor o = g.slice(pre, 4 * d_, d_);
    Tensor c = g.add_n({g.mul(left.c, g.sigmoid(f_l)),
                        g.mul(right.c, g.sigmoid(f_r)),
                        g.mul(g.tanh(u), g.sigmoid(i))});
    Tensor h = g.mul(g.sigmoid(o), g.tanh(c));
    return {h, c};
  }

  // leaf: w = embedding, children zero
  NodeState leaf_state(Graph& g, Tensor embedding) {
    NodeState z = zero_state(g);
    return compose(g, embedding, z, z);
  }

  // internal: w = 0, children are the subtree states
  NodeState internal(Graph& g, const NodeState& left, const NodeState& right) {
    return compose(g, g.zeros(d_), left, right);
  }

  // Composes a given tree directly; leaves[pos] are already leaf-transformed.
  NodeState compose_tree(Graph& g, const BinaryTree& t,
                         std::span<const NodeState> leaves) {
    if (t.empty() || leaves.size() != t.leaf_count())
      throw std::invalid_argument("compose_tree: tree/leaf mismatch");
    return compose_node(g, t, t.root, leaves);
  }

 private:
  NodeState compose_node(Graph& g, const BinaryTree& t, std::int32_t id,
                         std::span<const NodeState> leaves) {
    const BinaryTree::Node& nd = t.nodes[id];
    if (nd.left < 0) return leaves[nd.lo];
    NodeState l = compose_node(g, t, nd.left, leaves);
    NodeState r = compose_node(g, t, nd.right, leaves);
    return internal(g, l, r);
  }

  std::size_t d_;
  Param W_, U_, V_, b_;
};

}  // namespace ltree
