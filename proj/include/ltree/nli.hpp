#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ltree/rng.hpp"
#include "ltree/tensor.hpp"

namespace ltree {

// fixed integer encoding; keep stable for checkpoints and reports
enum class Label : int { kEntails = 0, kContradicts = 1, kNeutral = 2 };

inline const char* label_name(Label l) {
  switch (l) {
    case Label::kEntails: return "entailment";
    case Label::kContradicts: return "contradiction";
    default: return "neutral";
  }
}

// Accepts corpus-style and paper-style names; "-" (no consensus) maps to none.
inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "entailment" || s == "entails") return Label::kEntails;
  if (s == "contradiction" || s == "contradicts") return Label::kContradicts;
  if (s == "neutral") return Label::kNeutral;
  return std::nullopt;
}

// 3-way classifier over pair features [u; v; u⊙v; (u−v)⊙(u−v)]:
// q = ReLU(C·f + c), log p = log softmax(B·q + b).
class NliHead {
 public:
  explicit NliHead(std::size_t d)
      : d_(d),
        C_("nli.C", {200, 4 * d}),
        c_("nli.c", {200}),
        B_("nli.B", {3, 200}),
        b_("nli.b", {3}) {}

  void init(Rng& rng) {
    for (Param* m : {&C_, &B_}) {
      double bound = std::sqrt(6.0 / double(m->rows() + m->cols()));
      for (double& v : m->value) v = rng.uniform(-bound, bound);
    }
    std::fill(c_.value.begin(), c_.value.end(), 0.0);
    std::fill(b_.value.begin(), b_.value.end(), 0.0);
  }

  std::size_t d() const { return d_; }
  std::vector<Param*> params() { return {&C_, &c_, &B_, &b_}; }

  Tensor features(Graph& g, Tensor u, Tensor v) {
    if (u.size() != d_ || v.size() != d_)
      throw std::invalid_argument("features: inputs must be length " +
                                  std::to_string(d_) + ", got " +
                                  std::to_string(u.size()) + " and " +
                                  std::to_string(v.size()));
    return g.concat({u, v, g.mul(u, v), g.square(g.sub(u, v))});
  }

  Tensor log_probs(Graph& g, Tensor feats) {
    Tensor q = g.relu(g.add(g.matmul(g.leaf(C_), feats), g.leaf(c_)));
    Tensor logits = g.add(g.matmul(g.leaf(B_), q), g.leaf(b_));
    bool all[3] = {true, true, true};
    return g.log_softmax_masked(logits, all);
  }

  Tensor loss(Graph& g, Tensor log_probs, Label gold) {
    return g.neg(g.pick(log_probs, static_cast<std::size_t>(gold)));
  }

 private:
  std::size_t d_;
  Param C_, c_, B_, b_;
};

}  // namespace ltree
