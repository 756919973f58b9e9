#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "exhaustive.hpp"
#include "gradcheck.hpp"
#include "ltree/bssr.hpp"
#include "ltree/rng.hpp"
#include "ltree/tensor.hpp"
#include "ltree/tree.hpp"
#include "ltree/treelstm.hpp"

using ltree::Action;
using ltree::ActionScorer;
using ltree::BeamResult;
using ltree::Graph;
using ltree::NodeState;
using ltree::Param;
using ltree::ParserState;
using ltree::Rng;
using ltree::Tensor;
using ltree::TreeLstm;
using ltree::beam_parse;
using ltree::history_to_tree;
using ltree::valid_actions;

namespace {

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

std::vector<std::vector<double>> random_embs(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  for (auto& e : out)
    for (double& v : e) v = rng.uniform(-1, 1);
  return out;
}

std::vector<NodeState> make_leaves(Graph& g, TreeLstm& tl,
                                   std::span<const std::vector<double>> embs) {
  std::vector<NodeState> leaves;
  for (const auto& e : embs)
    leaves.push_back(tl.leaf_state(g, g.constant(e, e.size())));
  return leaves;
}

}  // namespace

TEST_CASE("valid_actions covers the three configurations") {
  ParserState st;  // initial: empty stack, next=0
  CHECK(valid_actions(st, 3) == std::vector<Action>{Action::kShift});

  st.stack.resize(2);
  st.next = 3;  // queue exhausted
  CHECK(valid_actions(st, 3) == std::vector<Action>{Action::kReduce});

  st.next = 2;  // one token left
  CHECK(valid_actions(st, 3) ==
        std::vector<Action>{Action::kShift, Action::kReduce});
}

TEST_CASE("score_actions with zero params is symmetric") {
  const std::size_t d = 3;
  TreeLstm tl(d);  // zero params
  ActionScorer sc(d);
  Rng rng(31);
  auto embs = random_embs(3, d, rng);

  Graph g;
  auto leaves = make_leaves(g, tl, embs);
  ParserState st;
  st.score_t = g.scalar(0.0);
  // initial state: only SHIFT valid -> log p(SHIFT) = 0 exactly
  Tensor lp0 = sc.log_probs(g, st, leaves);
  CHECK(lp0.values()[0] == 0.0);
  CHECK(lp0.values()[1] == -std::numeric_limits<double>::infinity());

  // two shifts later both actions are valid; zero params -> uniform
  st = ltree::apply(g, tl, leaves, st, Action::kShift, lp0);
  st = ltree::apply(g, tl, leaves, st, Action::kShift,
                    sc.log_probs(g, st, leaves));
  Tensor lp = sc.log_probs(g, st, leaves);
  CHECK(lp.values()[0] == Catch::Approx(std::log(0.5)));
  CHECK(lp.values()[1] == Catch::Approx(std::log(0.5)));
}

TEST_CASE("scorer gradients match finite differences") {
  const std::size_t d = 4;
  Rng rng(32);
  TreeLstm tl(d);
  tl.init(rng);
  ActionScorer sc(d);
  sc.init(rng);
  auto embs = random_embs(3, d, rng);

  auto build = [&](Graph& g) {
    auto leaves = make_leaves(g, tl, embs);
    ParserState st;
    st.score_t = g.scalar(0.0);
    st = ltree::apply(g, tl, leaves, st, Action::kShift, sc.log_probs(g, st, leaves));
    st = ltree::apply(g, tl, leaves, st, Action::kShift, sc.log_probs(g, st, leaves));
    Tensor lp = sc.log_probs(g, st, leaves);  // both actions valid here
    return g.sub(g.pick(lp, 0), g.scale(g.pick(lp, 1), 0.5));
  };
  Graph g;
  g.backward(build(g));
  auto value = [&] {
    Graph gg;
    return build(gg).value();
  };
  auto ps = sc.params();
  gradcheck::require_param_grads(value, {ps[0], ps[1], ps[2], ps[3], ps[4]}, 1e-6);
}

TEST_CASE("apply walks the n=2 unique sequence and rejects invalid actions") {
  const std::size_t d = 3;
  Rng rng(33);
  TreeLstm tl(d);
  tl.init(rng);
  ActionScorer sc(d);
  sc.init(rng);
  auto embs = random_embs(2, d, rng);

  Graph g;
  auto leaves = make_leaves(g, tl, embs);
  ParserState st;
  st.score_t = g.scalar(0.0);

  CHECK_THROWS_AS(
      ltree::apply(g, tl, leaves, st, Action::kReduce, sc.log_probs(g, st, leaves)),
      std::invalid_argument);
  st = ltree::apply(g, tl, leaves, st, Action::kShift, sc.log_probs(g, st, leaves));
  st = ltree::apply(g, tl, leaves, st, Action::kShift, sc.log_probs(g, st, leaves));
  CHECK_THROWS_AS(ltree::apply(g, tl, leaves, st, Action::kShift,
                               sc.log_probs(g, st, leaves)),
                  std::invalid_argument);
  st = ltree::apply(g, tl, leaves, st, Action::kReduce, sc.log_probs(g, st, leaves));
  CHECK(st.stack.size() == 1);
  CHECK(st.next == 2);
  CHECK(st.history.size() == 3);  // 2n-1
  CHECK(st.log_score == 0.0);     // every action was forced: log 1 each
}

TEST_CASE("complete action sequences are counted by Catalan numbers") {
  const std::uint64_t catalan[] = {1, 1, 2, 5, 14, 42, 132, 429};
  for (std::size_t n = 1; n <= 8; ++n) {
    CHECK(oracle::count_complete(n) == catalan[n - 1]);
    if (n <= 6) {
      auto all = oracle::enumerate_histories(n);
      CHECK(all.size() == catalan[n - 1]);
      for (const auto& h : all)
        CHECK(history_to_tree(h, n).leaf_count() == n);  // all valid and complete
    }
  }
}

TEST_CASE("history_to_tree reconstructs the bracketing") {
  using ltree::to_bracketed;
  auto t2 = history_to_tree(std::vector<Action>{Action::kShift, Action::kShift,
                                                Action::kReduce},
                            2);
  CHECK(to_bracketed(t2) == "( 0 1 )");

  auto tl3 = history_to_tree(
      std::vector<Action>{Action::kShift, Action::kShift, Action::kReduce,
                          Action::kShift, Action::kReduce},
      3);
  CHECK(to_bracketed(tl3) == "( ( 0 1 ) 2 )");

  auto tr3 = history_to_tree(
      std::vector<Action>{Action::kShift, Action::kShift, Action::kShift,
                          Action::kReduce, Action::kReduce},
      3);
  CHECK(to_bracketed(tr3) == "( 0 ( 1 2 ) )");

  CHECK_THROWS_AS(history_to_tree(std::vector<Action>{Action::kShift}, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(history_to_tree(std::vector<Action>{Action::kReduce, Action::kShift,
                                                      Action::kShift},
                                  2),
                  std::invalid_argument);
}

TEST_CASE("beam with b >= Catalan(n-1) matches the exhaustive argmax") {
  const std::size_t d = 5;
  Rng rng(34);
  TreeLstm tl(d);
  tl.init(rng);
  ActionScorer sc(d);
  sc.init(rng);

  for (std::size_t n : {1, 2, 3, 4, 5}) {
    for (int rep = 0; rep < 3; ++rep) {
      auto embs = random_embs(n, d, rng);
      auto best = oracle::exhaustive_best(tl, sc, embs);

      Graph g;
      auto leaves = make_leaves(g, tl, embs);
      BeamResult res = beam_parse(g, tl, sc, leaves, 64);
      REQUIRE(res.beam[0].history == best);
      // scores non-increasing down the beam
      for (std::size_t i = 1; i < res.beam.size(); ++i)
        CHECK(res.beam[i - 1].log_score >= res.beam[i].log_score);
      // terminal invariants
      for (const auto& e : res.beam) {
        CHECK(e.stack.size() == 1);
        CHECK(e.next == n);
        CHECK(e.history.size() == 2 * n - 1);
      }
      // with no pruning the whole space is on the beam
      CHECK(res.beam.size() == oracle::count_complete(n));
    }
  }
}

TEST_CASE("beam width 1 reproduces the greedy parse") {
  const std::size_t d = 4;
  Rng rng(35);
  TreeLstm tl(d);
  tl.init(rng);
  ActionScorer sc(d);
  sc.init(rng);

  for (int rep = 0; rep < 5; ++rep) {
    const std::size_t n = 2 + rng.index(5);  // 2..6
    auto embs = random_embs(n, d, rng);

    // greedy oracle: locally best action at every step (ties -> SHIFT)
    Graph og;
    auto oleaves = make_leaves(og, tl, embs);
    ParserState st;
    st.score_t = og.scalar(0.0);
    for (std::size_t step = 0; step < 2 * n - 1; ++step) {
      Tensor lp = sc.log_probs(og, st, oleaves);
      auto lv = lp.values();
      Action a = lv[0] >= lv[1] ? Action::kShift : Action::kReduce;
      st = ltree::apply(og, tl, oleaves, st, a, lp);
    }

    Graph g;
    auto leaves = make_leaves(g, tl, embs);
    BeamResult res = beam_parse(g, tl, sc, leaves, 1);
    CHECK(res.beam.size() == 1);
    CHECK(res.beam[0].history == st.history);
  }
}

TEST_CASE("ST representation is bit-identical to the top element's h-state") {
  const std::size_t d = 6;
  Rng rng(36);
  TreeLstm tl(d);
  tl.init(rng);
  ActionScorer sc(d);
  sc.init(rng);
  auto embs = random_embs(5, d, rng);

  Graph g;
  auto leaves = make_leaves(g, tl, embs);
  BeamResult res = beam_parse(g, tl, sc, leaves, 4);
  auto rep = vec(res.representation.values());
  auto top = vec(res.beam[0].stack[0].h.values());
  REQUIRE(rep.size() == top.size());
  CHECK(std::memcmp(rep.data(), top.data(), rep.size() * sizeof(double)) == 0);
}

TEST_CASE("beam parse is deterministic") {
  const std::size_t d = 5;
  Rng rng(37);
  TreeLstm tl(d);
  tl.init(rng);
  ActionScorer sc(d);
  sc.init(rng);
  auto embs = random_embs(6, d, rng);

  auto run = [&] {
    Graph g;
    auto leaves = make_leaves(g, tl, embs);
    BeamResult res = beam_parse(g, tl, sc, leaves, 3);
    std::vector<double> sig = vec(res.representation.values());
    for (const auto& e : res.beam) sig.push_back(e.log_score);
    return sig;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("empty sentence and zero beam width are rejected") {
  const std::size_t d = 3;
  TreeLstm tl(d);
  ActionScorer sc(d);
  Graph g;
  std::vector<NodeState> none;
  CHECK_THROWS_AS(beam_parse(g, tl, sc, none, 4), std::invalid_argument);
  std::vector<NodeState> one{tl.leaf_state(g, g.zeros(d))};
  CHECK_THROWS_AS(beam_parse(g, tl, sc, one, 0), std::invalid_argument);
}

TEST_CASE("end-to-end soft-mode gradients match finite differences") {
  const std::size_t d = 4, n = 4;
  Rng rng(38);
  TreeLstm tl(d);
  tl.init(rng);
  ActionScorer sc(d);
  sc.init(rng);
  Param emb("emb", {n, d}), probe("probe", {d});
  gradcheck::fill_uniform(emb, rng, -1, 1);
  gradcheck::fill_uniform(probe, rng, -1, 1);

  // b = 5 = Catalan(3): no pruning, so the loss is smooth in every parameter
  auto build = [&](Graph& g) {
    std::vector<NodeState> leaves;
    for (std::size_t k = 0; k < n; ++k)
      leaves.push_back(tl.leaf_state(g, g.leaf_row(emb, k)));
    BeamResult res = beam_parse(g, tl, sc, leaves, 5, /*straight_through=*/false);
    return g.add(g.dot(res.representation, g.leaf(probe)),
                 g.sum(g.square(res.representation)));
  };
  Graph g;
  g.backward(build(g));
  auto value = [&] {
    Graph gg;
    return build(gg).value();
  };
  std::vector<Param*> all;
  for (Param* p : tl.params()) all.push_back(p);
  for (Param* p : sc.params()) all.push_back(p);
  all.push_back(&emb);
  gradcheck::require_param_grads(
      value, {all[0], all[1], all[2], all[3], all[4], all[5], all[6], all[7],
              all[8], &emb},
      1e-4);
}

TEST_CASE("pruned-beam soft-mode gradients still match finite differences") {
  // pruning keeps the member set constant under +-h with these seeds
  const std::size_t d = 4, n = 5;
  Rng rng(39);
  TreeLstm tl(d);
  tl.init(rng);
  ActionScorer sc(d);
  sc.init(rng);
  Param emb("emb", {n, d});
  gradcheck::fill_uniform(emb, rng, -1, 1);

  auto build = [&](Graph& g) {
    std::vector<NodeState> leaves;
    for (std::size_t k = 0; k < n; ++k)
      leaves.push_back(tl.leaf_state(g, g.leaf_row(emb, k)));
    BeamResult res = beam_parse(g, tl, sc, leaves, 3, /*straight_through=*/false);
    return g.sum(g.square(res.representation));
  };
  Graph g;
  g.backward(build(g));
  auto value = [&] {
    Graph gg;
    return build(gg).value();
  };
  auto tp = tl.params();
  auto sp = sc.params();
  gradcheck::require_param_grads(
      value, {tp[0], tp[1], tp[2], tp[3], sp[0], sp[1], sp[2], sp[3], sp[4], &emb},
      1e-4);
}
