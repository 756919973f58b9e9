#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "gradcheck.hpp"
#include "ltree/cky.hpp"
#include "ltree/rng.hpp"
#include "ltree/tensor.hpp"
#include "ltree/tree.hpp"
#include "ltree/treelstm.hpp"

using ltree::CkyChart;
using ltree::CkyParser;
using ltree::CkyResult;
using ltree::Graph;
using ltree::NodeState;
using ltree::Param;
using ltree::Rng;
using ltree::Tensor;
using ltree::TreeLstm;
using ltree::select_mixture;

namespace {

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

std::vector<NodeState> random_leaves(Graph& g, TreeLstm& tl, std::size_t n,
                                     Rng& rng) {
  std::vector<NodeState> leaves;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> e(tl.d());
    for (double& v : e) v = rng.uniform(-1, 1);
    leaves.push_back(tl.leaf_state(g, g.constant(e, e.size())));
  }
  return leaves;
}

}  // namespace

TEST_CASE("select_mixture with hand-set scores picks the first split") {
  Graph g;
  double h0[] = {1, 2}, c0[] = {3, 4}, h1[] = {5, 6}, c1[] = {7, 8};
  std::vector<NodeState> cands{{g.constant(h0, 2), g.constant(c0, 2)},
                               {g.constant(h1, 2), g.constant(c1, 2)}};
  std::vector<Tensor> scores{g.scalar(2.0), g.scalar(-1.0)};

  auto sel = select_mixture(g, cands, scores, /*st=*/true, 1.0);
  CHECK(sel.argmax == 0);
  CHECK(vec(sel.state.h.values()) == std::vector<double>{1, 2});
  CHECK(vec(sel.state.c.values()) == std::vector<double>{3, 4});
}

TEST_CASE("select_mixture singleton has weight 1 regardless of score") {
  Graph g;
  double h0[] = {0.3, -0.4}, c0[] = {0.1, 0.9};
  std::vector<NodeState> cands{{g.constant(h0, 2), g.constant(c0, 2)}};
  for (double s : {-50.0, 0.0, 3.5}) {
    std::vector<Tensor> scores{g.scalar(s)};
    auto sel = select_mixture(g, cands, scores, true, 1.0);
    CHECK(sel.argmax == 0);
    CHECK(vec(sel.state.h.values()) == std::vector<double>{0.3, -0.4});
    auto soft = select_mixture(g, cands, scores, false, 1.0);
    CHECK(vec(soft.state.h.values()) == std::vector<double>{0.3, -0.4});
    CHECK(soft.argmax == -1);
  }
}

TEST_CASE("select_mixture ties go to the lowest split") {
  Graph g;
  double h0[] = {1.0}, h1[] = {2.0};
  std::vector<NodeState> cands{{g.constant(h0, 1), g.constant(h0, 1)},
                               {g.constant(h1, 1), g.constant(h1, 1)}};
  std::vector<Tensor> scores{g.scalar(0.7), g.scalar(0.7)};
  auto sel = select_mixture(g, cands, scores, true, 1.0);
  CHECK(sel.argmax == 0);
}

TEST_CASE("temperature controls the softness of legacy mixing") {
  Graph g;
  double h0[] = {1.0, 0.0}, h1[] = {0.0, 1.0};
  std::vector<NodeState> cands{{g.constant(h0, 2), g.constant(h0, 2)},
                               {g.constant(h1, 2), g.constant(h1, 2)}};
  std::vector<Tensor> scores{g.scalar(1.0), g.scalar(0.0)};
  auto sharp = select_mixture(g, cands, scores, false, 0.1);
  auto flat = select_mixture(g, cands, scores, false, 10.0);
  CHECK(sharp.state.h.values()[0] > flat.state.h.values()[0]);
  CHECK(sharp.state.h.values()[0] > 0.999);
  CHECK(std::abs(flat.state.h.values()[0] - 0.5) < 0.05);
  CHECK_THROWS_AS(select_mixture(g, cands, scores, false, 0.0),
                  std::invalid_argument);
}

TEST_CASE("tiny parses produce the unique structures") {
  const std::size_t d = 4;
  Rng rng(41);
  TreeLstm tl(d);
  tl.init(rng);
  CkyParser cky(d);
  cky.init(rng);

  Graph g;
  auto leaves1 = random_leaves(g, tl, 1, rng);
  CkyResult r1 = cky.parse(g, tl, leaves1);
  CHECK(ltree::to_bracketed(r1.tree) == "0");
  CHECK(vec(r1.representation.values()) == vec(leaves1[0].h.values()));

  auto leaves2 = random_leaves(g, tl, 2, rng);
  CkyResult r2 = cky.parse(g, tl, leaves2);
  CHECK(ltree::to_bracketed(r2.tree) == "( 0 1 )");

  std::vector<NodeState> none;
  CHECK_THROWS_AS(cky.parse(g, tl, none), std::invalid_argument);
}

TEST_CASE("hard-selection oracle agrees with the ST chart") {
  // independent greedy chart: pick the argmax candidate outright, no mixing
  const std::size_t d = 5;
  Rng rng(42);
  TreeLstm tl(d);
  tl.init(rng);
  CkyParser cky(d);
  cky.init(rng);
  Param& s = *cky.params()[0];

  for (std::size_t n : {3, 4, 5, 6}) {
    Graph g;
    auto leaves = random_leaves(g, tl, n, rng);
    CkyResult res = cky.parse(g, tl, leaves);

    std::vector<std::vector<NodeState>> hard(n + 1,
                                             std::vector<NodeState>(n + 1));
    std::vector<std::vector<std::int32_t>> hsplit(
        n + 1, std::vector<std::int32_t>(n + 1, -1));
    for (std::size_t i = 0; i < n; ++i) hard[i][i + 1] = leaves[i];
    for (std::size_t w = 2; w <= n; ++w)
      for (std::size_t i = 0; i + w <= n; ++i) {
        std::size_t j = i + w;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = i + 1; k < j; ++k) {
          NodeState cand = tl.internal(g, hard[i][k], hard[k][j]);
          double score = g.dot(g.leaf(s), cand.h).value();
          if (score > best) {
            best = score;
            hard[i][j] = cand;
            hsplit[i][j] = static_cast<std::int32_t>(k);
          }
        }
      }

    auto a = vec(res.representation.values());
    auto b = vec(hard[0][n].h.values());
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    for (std::size_t w = 2; w <= n; ++w)
      for (std::size_t i = 0; i + w <= n; ++i)
        CHECK(res.chart.split[i][i + w] == hsplit[i][i + w]);
  }
}

TEST_CASE("ST chart top equals direct composition of the extracted tree") {
  const std::size_t d = 6;
  Rng rng(43);
  TreeLstm tl(d);
  tl.init(rng);
  CkyParser cky(d);
  cky.init(rng);

  for (int rep = 0; rep < 20; ++rep) {
    std::size_t n = 2 + rng.index(7);  // 2..8
    Graph g;
    auto leaves = random_leaves(g, tl, n, rng);
    CkyResult res = cky.parse(g, tl, leaves);
    REQUIRE(res.tree.leaf_count() == n);

    NodeState direct = tl.compose_tree(g, res.tree, leaves);
    auto a = vec(res.representation.values());
    auto b = vec(direct.h.values());
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("extracted tree spans match the recorded argmax splits") {
  const std::size_t d = 4;
  Rng rng(44);
  TreeLstm tl(d);
  tl.init(rng);
  CkyParser cky(d);
  cky.init(rng);

  Graph g;
  auto leaves = random_leaves(g, tl, 6, rng);
  CkyResult res = cky.parse(g, tl, leaves);
  // every internal node (i, j) of the tree must use split[i][j]
  for (const auto& nd : res.tree.nodes) {
    if (nd.left < 0) continue;
    std::int32_t k = res.tree.nodes[nd.left].hi;
    CHECK(res.chart.split[nd.lo][nd.hi] == k);
  }
  CHECK(ltree::tree_spans(res.tree).size() == 5);
}

TEST_CASE("soft mode has no extracted tree") {
  const std::size_t d = 3;
  Rng rng(45);
  TreeLstm tl(d);
  tl.init(rng);
  CkyParser cky(d);
  cky.init(rng);

  Graph g;
  auto leaves = random_leaves(g, tl, 4, rng);
  CkyResult res = cky.parse(g, tl, leaves, /*straight_through=*/false);
  CHECK(res.tree.empty());
  CHECK_THROWS_AS(ltree::extract_tree(res.chart), std::logic_error);
}

TEST_CASE("fill_cell rejects bad spans and unfilled dependencies") {
  const std::size_t d = 3;
  TreeLstm tl(d);
  CkyParser cky(d);
  Graph g;
  CkyChart chart;
  chart.n = 4;
  chart.cell.assign(5, std::vector<NodeState>(5));
  chart.split.assign(5, std::vector<std::int32_t>(5, -1));
  CHECK_THROWS_AS(cky.fill_cell(g, tl, chart, 1, 2, true, 1.0),
                  std::invalid_argument);  // width-1 span is not fillable
  CHECK_THROWS_AS(cky.fill_cell(g, tl, chart, 0, 2, true, 1.0),
                  std::logic_error);  // leaves never installed
}

TEST_CASE("soft-mode gradients match finite differences") {
  const std::size_t d = 4, n = 5;
  Rng rng(46);
  TreeLstm tl(d);
  tl.init(rng);
  CkyParser cky(d);
  cky.init(rng);
  Param emb("emb", {n, d}), probe("probe", {d});
  gradcheck::fill_uniform(emb, rng, -1, 1);
  gradcheck::fill_uniform(probe, rng, -1, 1);

  auto build = [&](Graph& g) {
    std::vector<NodeState> leaves;
    for (std::size_t k = 0; k < n; ++k)
      leaves.push_back(tl.leaf_state(g, g.leaf_row(emb, k)));
    CkyResult res = cky.parse(g, tl, leaves, /*straight_through=*/false, 1.5);
    return g.add(g.dot(res.representation, g.leaf(probe)),
                 g.sum(g.square(res.representation)));
  };
  Graph g;
  g.backward(build(g));
  auto value = [&] {
    Graph gg;
    return build(gg).value();
  };
  auto tp = tl.params();
  gradcheck::require_param_grads(
      value, {tp[0], tp[1], tp[2], tp[3], cky.params()[0], &emb}, 1e-4);
}

TEST_CASE("chart parse is deterministic") {
  const std::size_t d = 5;
  Rng rng(47);
  TreeLstm tl(d);
  tl.init(rng);
  CkyParser cky(d);
  cky.init(rng);
  std::vector<std::vector<double>> embs(7, std::vector<double>(d));
  for (auto& e : embs)
    for (double& v : e) v = rng.uniform(-1, 1);

  auto run = [&] {
    Graph g;
    std::vector<NodeState> leaves;
    for (const auto& e : embs)
      leaves.push_back(tl.leaf_state(g, g.constant(e, e.size())));
    CkyResult res = cky.parse(g, tl, leaves);
    auto sig = vec(res.representation.values());
    sig.push_back(double(ltree::tree_spans(res.tree).size()));
    return sig;
  };
  auto a = run();
  auto b = run();
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}
