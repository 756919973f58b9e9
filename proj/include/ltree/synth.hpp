#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltree/data.hpp"
#include "ltree/io.hpp"
#include "ltree/rng.hpp"
#include "ltree/tree.hpp"

namespace ltree {

// Smoothed sentence-length distributions shaped like SNLI's binary-parse
// token counts (premises ~17 tokens, hypotheses ~8), clamped to [2, 80].
// Index 0 corresponds to length 2.
inline constexpr std::array<double, 79> kPremiseLengthPmf = {
    6.082863e-03, 1.475892e-02, 2.388164e-02, 3.221555e-02, 3.912938e-02, 4.438064e-02,
    4.796634e-02, 5.002131e-02, 5.075042e-02, 5.038471e-02, 4.915420e-02, 4.727200e-02,
    4.492622e-02, 4.227669e-02, 3.945496e-02, 3.656612e-02, 3.369153e-02, 3.089203e-02,
    2.821123e-02, 2.567858e-02, 2.331212e-02, 2.112102e-02, 1.910760e-02, 1.726911e-02,
    1.559920e-02, 1.408903e-02, 1.272821e-02, 1.150552e-02, 1.040941e-02, 9.428436e-03,
    8.551504e-03, 7.768096e-03, 7.068376e-03, 6.443257e-03, 5.884435e-03, 5.384380e-03,
    4.936317e-03, 4.534186e-03, 4.172596e-03, 3.846774e-03, 3.552507e-03, 3.286091e-03,
    3.044281e-03, 2.824236e-03, 2.623474e-03, 2.439835e-03, 2.271432e-03, 2.116624e-03,
    1.973983e-03, 1.842263e-03, 1.720378e-03, 1.607379e-03, 1.502437e-03, 1.404824e-03,
    1.313902e-03, 1.229106e-03, 1.149937e-03, 1.075952e-03, 1.006757e-03, 9.419980e-04,
    8.813566e-04, 8.245458e-04, 7.713055e-04, 7.213983e-04, 6.746073e-04, 6.307334e-04,
    5.895930e-04, 5.510162e-04, 5.148456e-04, 4.809347e-04, 4.491467e-04, 4.193540e-04,
    3.914369e-04, 3.652831e-04, 3.407872e-04, 3.178500e-04, 2.963781e-04, 2.762836e-04,
    7.208421e-04,
};
inline constexpr std::array<double, 79> kHypothesisLengthPmf = {
    4.578941e-02, 8.807920e-02, 1.083414e-01, 1.109752e-01, 1.044784e-01, 9.424306e-02,
    8.275588e-02, 7.112475e-02, 5.995973e-02, 4.966319e-02, 4.048646e-02, 3.254422e-02,
    2.583909e-02, 2.029514e-02, 1.579064e-02, 1.218412e-02, 9.332383e-03, 7.101445e-03,
    5.372239e-03, 4.042711e-03, 3.027732e-03, 2.257761e-03, 1.676944e-03, 1.241032e-03,
    9.153710e-04, 6.730898e-04, 4.935257e-04, 3.609077e-04, 2.632761e-04, 1.916140e-04,
    1.391580e-04, 1.008585e-04, 7.296147e-05, 5.268656e-05, 3.798180e-05, 2.733766e-05,
    1.964692e-05, 1.409969e-05, 1.010504e-05, 7.232849e-06, 5.170718e-06, 3.692220e-06,
    2.633559e-06, 1.876460e-06, 1.335662e-06, 9.498040e-07, 6.747914e-07, 4.789827e-07,
    3.397041e-07, 2.407282e-07, 1.704560e-07, 1.206064e-07, 8.527324e-08, 6.024926e-08,
    4.254006e-08, 3.001666e-08, 2.116676e-08, 1.491708e-08, 1.050653e-08, 7.395867e-09,
    5.203333e-09, 3.658849e-09, 2.571490e-09, 1.806383e-09, 1.268311e-09, 8.901013e-10,
    6.243909e-10, 4.378072e-10, 3.068486e-10, 2.149738e-10, 1.505470e-10, 1.053874e-10,
    7.374628e-11, 5.158586e-11, 3.607154e-11, 2.521426e-11, 1.761892e-11, 1.230744e-11,
    1.878102e-11,
};

struct SynthConfig {
  std::size_t n_examples = 1000;
  std::uint64_t seed = 1;
  bool snli_lengths = true;  // sample lengths from the tables above
  std::size_t min_len = 2;   // uniform [min_len, max_len] otherwise
  std::size_t max_len = 8;
  std::size_t n_filler = 50;
};

inline constexpr const char* kMarkers[3] = {"za", "zb", "zc"};

// Latin square over (premise marker, hypothesis marker): every label is
// realized for every premise marker, so labels are uniform and the mapping
// is learnable only by reading both sentences.
inline Label synth_label(int pm, int hm) {
  static constexpr Label kTable[3][3] = {
      {Label::kEntails, Label::kContradicts, Label::kNeutral},
      {Label::kNeutral, Label::kEntails, Label::kContradicts},
      {Label::kContradicts, Label::kNeutral, Label::kEntails}};
  return kTable[pm][hm];
}

// Left-branching chunk over the first m tokens, right spine over the rest:
// span widths {2..m} + {2..n-m} + {n}. Under the uniform-random-tree span
// probability P(w) = C(w-1)C(n-w)/C(n-1), the widths this family misses
// ({n-m+1..n-1}) have exactly the same total probability as the widths it
// repeats ({2..m}, via P(w) = P(n-w+1)), so its expected F1 against a
// uniform random tree equals a branching tree's for every n and m.
inline BinaryTree chunk_spine_tree(std::size_t n, std::size_t m) {
  BinaryTree t;
  if (n == 1) {
    t.root = t.add_leaf(0);
    return t;
  }
  std::int32_t chunk = t.add_leaf(0);
  for (std::size_t pos = 1; pos < m; ++pos)
    chunk = t.add_internal(chunk, t.add_leaf(static_cast<std::int32_t>(pos)));
  std::int32_t spine = t.add_leaf(static_cast<std::int32_t>(n - 1));
  for (std::size_t pos = n - 1; pos-- > m;)
    spine = t.add_internal(t.add_leaf(static_cast<std::int32_t>(pos)), spine);
  t.root = t.add_internal(chunk, spine);
  return t;
}

inline BinaryTree synth_gold_tree(std::size_t n, Rng& rng) {
  if (n <= 1) return chunk_spine_tree(n, 0);
  std::size_t m = std::min<std::size_t>(1 + rng.index(4), n - 1);
  return chunk_spine_tree(n, m);
}

inline std::size_t synth_length(const SynthConfig& cfg, bool premise, Rng& rng) {
  if (!cfg.snli_lengths)
    return cfg.min_len + rng.index(cfg.max_len - cfg.min_len + 1);
  const auto& pmf = premise ? kPremiseLengthPmf : kHypothesisLengthPmf;
  return 2 + rng.weighted(std::span<const double>(pmf.data(), pmf.size()));
}

// One marker token at a random position; fillers everywhere else.
inline std::vector<std::string> synth_tokens(std::size_t n, int marker,
                                             std::size_t n_filler, Rng& rng) {
  std::vector<std::string> toks(n);
  std::size_t mpos = rng.index(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == mpos) {
      toks[i] = kMarkers[marker];
    } else {
      char buf[8];
      std::snprintf(buf, sizeof buf, "w%02zu", rng.index(n_filler));
      toks[i] = buf;
    }
  }
  return toks;
}

inline std::vector<Example> synth_examples(const SynthConfig& cfg) {
  Rng rng(cfg.seed);
  std::vector<Example> out;
  out.reserve(cfg.n_examples);
  for (std::size_t i = 0; i < cfg.n_examples; ++i) {
    std::size_t np = synth_length(cfg, true, rng);
    std::size_t nh = synth_length(cfg, false, rng);
    int pm = static_cast<int>(rng.index(3));
    int hm = static_cast<int>(rng.index(3));
    Example ex;
    ex.premise_tokens = synth_tokens(np, pm, cfg.n_filler, rng);
    ex.premise_tree = synth_gold_tree(np, rng);
    ex.hypothesis_tokens = synth_tokens(nh, hm, cfg.n_filler, rng);
    ex.hypothesis_tree = synth_gold_tree(nh, rng);
    ex.label = synth_label(pm, hm);
    ex.pair_id = "synth-" + std::to_string(i);
    ex.genre = "synthetic";
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::string synth_corpus_jsonl(const std::vector<Example>& examples) {
  std::string out;
  for (const Example& ex : examples) {
    nlohmann::json rec;
    rec["gold_label"] = label_name(ex.label);
    rec["sentence1_binary_parse"] = to_bracketed(ex.premise_tree, ex.premise_tokens);
    rec["sentence2_binary_parse"] =
        to_bracketed(ex.hypothesis_tree, ex.hypothesis_tokens);
    rec["pairID"] = ex.pair_id;
    rec["genre"] = ex.genre;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

inline void write_synth_corpus(const std::string& path, const SynthConfig& cfg) {
  atomic_write_file(path, synth_corpus_jsonl(synth_examples(cfg)));
}

}  // namespace ltree
