#pragma once

#include <algorithm>
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

enum class Action : std::uint8_t { kShift = 0, kReduce = 1 };

// Shift-reduce configuration. The queue is the suffix leaves[next..n) of the
// shared leaf array; log_score numerically mirrors the scalar tensor score_t,
// which carries the gradient path through this element's surviving actions.
struct ParserState {
  std::vector<NodeState> stack;
  std::size_t next = 0;
  std::vector<Action> history;
  double log_score = 0.0;
  Tensor score_t;
};

inline bool can_shift(const ParserState& st, std::size_t n) { return st.next < n; }
inline bool can_reduce(const ParserState& st) { return st.stack.size() >= 2; }

inline std::vector<Action> valid_actions(const ParserState& st, std::size_t n) {
  std::vector<Action> out;
  if (can_shift(st, n)) out.push_back(Action::kShift);
  if (can_reduce(st)) out.push_back(Action::kReduce);
  return out;
}

// r = W_s1·h_s1 + W_s2·h_s2 + W_q·h_q1 over the top two stack h-states and the
// queue front (zero vectors when absent); log p = masked log softmax(a + A·tanh r).
class ActionScorer {
 public:
  explicit ActionScorer(std::size_t d)
      : d_(d),
        Ws1_("scorer.Ws1", {d, d}),
        Ws2_("scorer.Ws2", {d, d}),
        Wq_("scorer.Wq", {d, d}),
        A_("scorer.A", {2, d}),
        a_("scorer.a", {2}) {}

  void init(Rng& rng) {
    for (Param* m : {&Ws1_, &Ws2_, &Wq_, &A_}) {
      double bound = std::sqrt(6.0 / double(m->rows() + m->cols()));
      for (double& v : m->value) v = rng.uniform(-bound, bound);
    }
    std::fill(a_.value.begin(), a_.value.end(), 0.0);
  }

  std::size_t d() const { return d_; }
  std::vector<Param*> params() { return {&Ws1_, &Ws2_, &Wq_, &A_, &a_}; }

  // log-probability pair [log p(SHIFT), log p(REDUCE)], invalid entries -inf
  Tensor log_probs(Graph& g, const ParserState& st,
                   std::span<const NodeState> leaves) {
    std::size_t n = leaves.size();
    bool valid[2] = {can_shift(st, n), can_reduce(st)};
    if (!valid[0] && !valid[1])
      throw std::invalid_argument("log_probs: terminal state has no actions");
    Tensor h_s1 = st.stack.size() >= 1 ? st.stack.back().h : g.zeros(d_);
    Tensor h_s2 = st.stack.size() >= 2 ? st.stack[st.stack.size() - 2].h : g.zeros(d_);
    Tensor h_q1 = st.next < n ? leaves[st.next].h : g.zeros(d_);
    Tensor r = g.add_n({g.matmul(g.leaf(Ws1_), h_s1), g.matmul(g.leaf(Ws2_), h_s2),
                        g.matmul(g.leaf(Wq_), h_q1)});
    Tensor logits = g.add(g.leaf(a_), g.matmul(g.leaf(A_), g.tanh(r)));
    return g.log_softmax_masked(logits, valid);
  }

 private:
  std::size_t d_;
  Param Ws1_, Ws2_, Wq_, A_, a_;
};

// Applies one action; log_probs must be the scorer output for `st`.
inline ParserState apply(Graph& g, TreeLstm& tl, std::span<const NodeState> leaves,
                         const ParserState& st, Action action, Tensor log_probs) {
  ParserState out;
  out.stack = st.stack;
  out.next = st.next;
  out.history = st.history;
  out.history.push_back(action);
  out.score_t = g.add(st.score_t, g.pick(log_probs, static_cast<std::size_t>(action)));
  out.log_score = out.score_t.value();
  if (action == Action::kShift) {
    if (!can_shift(st, leaves.size()))
      throw std::invalid_argument("apply: SHIFT with empty queue");
    out.stack.push_back(leaves[out.next]);
    ++out.next;
  } else {
    if (!can_reduce(st))
      throw std::invalid_argument("apply: REDUCE with stack < 2");
    NodeState right = out.stack.back();
    out.stack.pop_back();
    NodeState left = out.stack.back();
    out.stack.pop_back();
    out.stack.push_back(tl.internal(g, left, right));
  }
  return out;
}

// Deterministic reconstruction of the tree a complete history builds.
inline BinaryTree history_to_tree(std::span<const Action> history, std::size_t n) {
  if (history.size() != 2 * n - 1)
    throw std::invalid_argument("history_to_tree: " + std::to_string(history.size()) +
                                " actions for " + std::to_string(n) + " tokens");
  BinaryTree t;
  std::vector<std::int32_t> stack;
  std::int32_t pos = 0;
  for (Action act : history) {
    if (act == Action::kShift) {
      if (pos >= static_cast<std::int32_t>(n))
        throw std::invalid_argument("history_to_tree: too many SHIFTs");
      stack.push_back(t.add_leaf(pos++));
    } else {
      if (stack.size() < 2)
        throw std::invalid_argument("history_to_tree: REDUCE with stack < 2");
      std::int32_t right = stack.back();
      stack.pop_back();
      std::int32_t left = stack.back();
      stack.pop_back();
      stack.push_back(t.add_internal(left, right));
    }
  }
  if (stack.size() != 1)
    throw std::invalid_argument("history_to_tree: incomplete parse");
  t.root = stack[0];
  return t;
}

struct BeamResult {
  Tensor representation;          // d vector; in ST mode equals beam[0]'s h
  std::vector<ParserState> beam;  // final beam, scores non-increasing
  BinaryTree best_tree;
  std::vector<BinaryTree> beam_trees;
};

// Synchronous beam search over the 2n-1 parser steps. Every element is
// expanded by every valid action; the top b candidates survive, ordered by
// cumulative log-score with ties broken lexicographically on the history
// (SHIFT < REDUCE). Composition runs only for surviving REDUCEs, and the
// backward pass sees only surviving elements' scores.
inline BeamResult beam_parse(Graph& g, TreeLstm& tl, ActionScorer& scorer,
                             std::span<const NodeState> leaves, std::size_t b,
                             bool straight_through = true) {
  std::size_t n = leaves.size();
  if (n == 0) throw std::invalid_argument("beam_parse: empty sentence");
  if (b < 1) throw std::invalid_argument("beam_parse: beam width must be >= 1");

  std::vector<ParserState> beam(1);
  beam[0].score_t = g.scalar(0.0);

  struct Cand {
    std::size_t parent;
    Action action;
    Tensor logp;
    double score;
  };
  std::vector<Cand> cands;
  for (std::size_t step = 0; step < 2 * n - 1; ++step) {
    cands.clear();
    for (std::size_t ei = 0; ei < beam.size(); ++ei) {
      Tensor logp = scorer.log_probs(g, beam[ei], leaves);
      auto lv = logp.values();
      if (can_shift(beam[ei], n))
        cands.push_back({ei, Action::kShift, logp, beam[ei].log_score + lv[0]});
      if (can_reduce(beam[ei]))
        cands.push_back({ei, Action::kReduce, logp, beam[ei].log_score + lv[1]});
    }
    std::sort(cands.begin(), cands.end(), [&](const Cand& x, const Cand& y) {
      if (x.score != y.score) return x.score > y.score;
      if (x.parent != y.parent) {
        const auto& hx = beam[x.parent].history;
        const auto& hy = beam[y.parent].history;
        return std::lexicographical_compare(hx.begin(), hx.end(), hy.begin(),
                                            hy.end());
      }
      return x.action < y.action;
    });
    if (cands.size() > b) cands.resize(b);
    std::vector<ParserState> next;
    next.reserve(cands.size());
    for (const Cand& c : cands)
      next.push_back(apply(g, tl, leaves, beam[c.parent], c.action, c.logp));
    beam = std::move(next);
  }

  BeamResult out;
  std::vector<Tensor> score_ts, tops;
  score_ts.reserve(beam.size());
  tops.reserve(beam.size());
  for (const ParserState& e : beam) {
    score_ts.push_back(e.score_t);
    tops.push_back(e.stack[0].h);
    out.beam_trees.push_back(history_to_tree(e.history, n));
  }
  Tensor weights = g.softmax(g.concat(score_ts));
  if (straight_through) weights = g.straight_through(weights);
  out.representation = g.mix(weights, tops);
  out.best_tree = out.beam_trees[0];
  out.beam = std::move(beam);
  return out;
}

}  // namespace ltree
