#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ltree/rng.hpp"
#include "ltree/tensor.hpp"
#include "ltree/tree.hpp"
#include "ltree/treelstm.hpp"

namespace ltree {

struct CellSelection {
  NodeState state;
  std::int32_t argmax;  // candidate index, -1 in soft mode
};

// Weighted combination of candidate states: straight-through over softmax
// scores by default, or the legacy softmax-with-temperature. Both h and c are
// mixed with the same weights.
inline CellSelection select_mixture(Graph& g, std::span<const NodeState> cands,
                                    std::span<const Tensor> scores,
                                    bool straight_through, double temperature) {
  if (cands.empty() || cands.size() != scores.size())
    throw std::invalid_argument("select_mixture: " + std::to_string(cands.size()) +
                                " candidates vs " + std::to_string(scores.size()) +
                                " scores");
  Tensor svec = g.concat(scores);
  Tensor weights;
  std::int32_t arg = -1;
  if (straight_through) {
    weights = g.straight_through(g.softmax(svec));
    arg = static_cast<std::int32_t>(argmax_lowest(svec.values()));
  } else {
    if (temperature <= 0.0)
      throw std::invalid_argument("select_mixture: temperature must be positive");
    weights = g.softmax(g.scale(svec, 1.0 / temperature));
  }
  std::vector<Tensor> hs, cs;
  hs.reserve(cands.size());
  cs.reserve(cands.size());
  for (const NodeState& c : cands) {
    hs.push_back(c.h);
    cs.push_back(c.c);
  }
  return {{g.mix(weights, hs), g.mix(weights, cs)}, arg};
}

// Triangular table over spans (i, j); width-1 cells are the leaf states and
// split[i][j] records the argmax split point k (ST mode only).
struct CkyChart {
  std::size_t n = 0;
  std::vector<std::vector<NodeState>> cell;
  std::vector<std::vector<std::int32_t>> split;
};

// Recursive descent from (0, n) along recorded argmax splits.
inline BinaryTree extract_tree(const CkyChart& chart) {
  if (chart.n == 0) throw std::invalid_argument("extract_tree: empty chart");
  BinaryTree t;
  auto build = [&](auto&& self, std::size_t i, std::size_t j) -> std::int32_t {
    if (j - i == 1) return t.add_leaf(static_cast<std::int32_t>(i));
    std::int32_t k = chart.split[i][j];
    if (k < 0)
      throw std::logic_error("extract_tree: span (" + std::to_string(i) + ", " +
                             std::to_string(j) +
                             ") has no recorded argmax (soft mode)");
    std::int32_t left = self(self, i, static_cast<std::size_t>(k));
    std::int32_t right = self(self, static_cast<std::size_t>(k), j);
    return t.add_internal(left, right);
  };
  t.root = build(build, 0, chart.n);
  return t;
}

struct CkyResult {
  Tensor representation;  // h-state of cell (0, n)
  BinaryTree tree;        // empty in soft mode
  CkyChart chart;
};

// Chart-based latent tree model: each cell scores every split's Tree-LSTM
// composition with s·h and keeps a straight-through mixture.
class CkyParser {
 public:
  explicit CkyParser(std::size_t d) : d_(d), s_("cky.s", {d}) {}

  void init(Rng& rng) {
    double bound = std::sqrt(6.0 / double(d_ + 1));
    for (double& v : s_.value) v = rng.uniform(-bound, bound);
  }

  std::size_t d() const { return d_; }
  std::vector<Param*> params() { return {&s_}; }

  // Fills span (i, j) from its strictly smaller dependencies.
  void fill_cell(Graph& g, TreeLstm& tl, CkyChart& chart, std::size_t i,
                 std::size_t j, bool straight_through, double temperature) {
    if (j > chart.n || j < i + 2)
      throw std::invalid_argument("fill_cell: bad span (" + std::to_string(i) +
                                  ", " + std::to_string(j) + ")");
    std::vector<NodeState> cands;
    std::vector<Tensor> scores;
    cands.reserve(j - i - 1);
    scores.reserve(j - i - 1);
    for (std::size_t k = i + 1; k < j; ++k) {
      const NodeState& left = chart.cell[i][k];
      const NodeState& right = chart.cell[k][j];
      if (!left.h.valid() || !right.h.valid())
        throw std::logic_error("fill_cell: dependency of (" + std::to_string(i) +
                               ", " + std::to_string(j) + ") at split " +
                               std::to_string(k) + " is unfilled");
      cands.push_back(tl.internal(g, left, right));
      scores.push_back(g.dot(g.leaf(s_), cands.back().h));
    }
    CellSelection sel =
        select_mixture(g, cands, scores, straight_through, temperature);
    chart.cell[i][j] = sel.state;
    chart.split[i][j] =
        sel.argmax < 0 ? -1 : static_cast<std::int32_t>(i + 1) + sel.argmax;
  }

  CkyResult parse(Graph& g, TreeLstm& tl, std::span<const NodeState> leaves,
                  bool straight_through = true, double temperature = 1.0) {
    std::size_t n = leaves.size();
    if (n == 0) throw std::invalid_argument("cky parse: empty sentence");
    CkyChart chart;
    chart.n = n;
    chart.cell.assign(n + 1, std::vector<NodeState>(n + 1));
    chart.split.assign(n + 1, std::vector<std::int32_t>(n + 1, -1));
    for (std::size_t i = 0; i < n; ++i) chart.cell[i][i + 1] = leaves[i];
    for (std::size_t width = 2; width <= n; ++width)
      for (std::size_t i = 0; i + width <= n; ++i)
        fill_cell(g, tl, chart, i, i + width, straight_through, temperature);

    CkyResult out;
    out.representation = chart.cell[0][n].h;
    if (straight_through) out.tree = extract_tree(chart);
    out.chart = std::move(chart);
    return out;
  }

 private:
  std::size_t d_;
  Param s_;
};

}  // namespace ltree
