#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltree/io.hpp"
#include "ltree/rng.hpp"
#include "ltree/tree.hpp"

namespace ltree {

// Catalan numbers as doubles. Exact through C(~27); relative error stays at
// rounding level far beyond that, which is all the weighted sampler needs.
// C(79) ~ 1.5e44 comfortably fits a double.
inline double catalan(std::size_t k) {
  double c = 1.0;
  for (std::size_t i = 2; i <= k; ++i) c = c * 2.0 * (2.0 * i - 1.0) / (i + 1.0);
  return c;
}

enum class Branch { kLeft, kRight };

// left: ((((0 1) 2) 3) ...); right: (... (n-3 (n-2 n-1))).
inline BinaryTree branching_tree(Branch kind, std::size_t n) {
  if (n == 0) throw std::invalid_argument("branching_tree: n must be >= 1");
  BinaryTree t;
  if (kind == Branch::kLeft) {
    std::int32_t acc = t.add_leaf(0);
    for (std::size_t pos = 1; pos < n; ++pos)
      acc = t.add_internal(acc, t.add_leaf(static_cast<std::int32_t>(pos)));
    t.root = acc;
  } else {
    std::int32_t acc = t.add_leaf(static_cast<std::int32_t>(n - 1));
    for (std::size_t pos = n - 1; pos-- > 0;)
      acc = t.add_internal(t.add_leaf(static_cast<std::int32_t>(pos)), acc);
    t.root = acc;
  }
  return t;
}

// Uniform over the Catalan(n-1) binary trees: split point of each span drawn
// with probability proportional to the number of trees on either side.
inline BinaryTree random_tree(std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("random_tree: n must be >= 1");
  std::vector<double> cat(n);
  cat[0] = 1.0;
  for (std::size_t k = 1; k < n; ++k)
    cat[k] = cat[k - 1] * 2.0 * (2.0 * k - 1.0) / (k + 1.0);
  BinaryTree t;
  auto build = [&](auto&& self, std::size_t lo, std::size_t hi) -> std::int32_t {
    if (hi - lo == 1) return t.add_leaf(static_cast<std::int32_t>(lo));
    std::vector<double> w(hi - lo - 1);
    for (std::size_t s = lo + 1; s < hi; ++s)
      w[s - lo - 1] = cat[s - lo - 1] * cat[hi - s - 1];
    std::size_t split = lo + 1 + rng.weighted(w);
    std::int32_t l = self(self, lo, split);
    std::int32_t r = self(self, split, hi);
    return t.add_internal(l, r);
  };
  t.root = build(build, 0, n);
  return t;
}

// Span-overlap F1 over internal spans of width >= 2 (root included).
// Trees over <= 1 token have empty span sets and score 1 by convention.
inline double unlabelled_f1(const BinaryTree& a, const BinaryTree& b) {
  if (a.leaf_count() != b.leaf_count())
    throw std::invalid_argument("unlabelled_f1: leaf counts differ: " +
                                std::to_string(a.leaf_count()) + " vs " +
                                std::to_string(b.leaf_count()));
  if (a.leaf_count() <= 1) return 1.0;
  const auto sa = tree_spans(a);
  const auto sb = tree_spans(b);
  std::size_t i = 0, j = 0, hits = 0;
  while (i < sa.size() && j < sb.size()) {
    if (sa[i] == sb[j]) ++hits, ++i, ++j;
    else if (sa[i] < sb[j]) ++i;
    else ++j;
  }
  if (hits == 0) return 0.0;
  if (sa.size() == sb.size())  // full binary trees: F1 = P = R
    return static_cast<double>(hits) / static_cast<double>(sa.size());
  double p = static_cast<double>(hits) / static_cast<double>(sa.size());
  double r = static_cast<double>(hits) / static_cast<double>(sb.size());
  return 2.0 * p * r / (p + r);
}

// One parsed sentence per line, aligned with a corpus split.
using TreeFile = std::vector<ParsedSentence>;

inline TreeFile read_tree_file(const std::string& path) {
  TreeFile out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": empty line");
    try {
      out.push_back(parse_bracketed(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

inline void write_tree_file(const std::string& path, const TreeFile& file) {
  std::string out;
  for (const ParsedSentence& s : file) {
    out += to_bracketed(s.tree, s.tokens);
    out += '\n';
  }
  atomic_write_file(path, out);
}

// Macro-averaged per-sentence F1, reported x100. include_short=false drops
// sentences of <= 2 tokens (whose structure is forced) from the average.
inline double corpus_f1(const TreeFile& a, const TreeFile& b,
                        bool include_short = true) {
  if (a.size() != b.size())
    throw std::invalid_argument("corpus_f1: tree counts differ: " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  if (a.empty()) throw std::invalid_argument("corpus_f1: empty tree files");
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].tree.leaf_count() != b[i].tree.leaf_count())
      throw std::invalid_argument(
          "corpus_f1: leaf-count mismatch at index " + std::to_string(i) + ": " +
          std::to_string(a[i].tree.leaf_count()) + " vs " +
          std::to_string(b[i].tree.leaf_count()));
    if (!include_short && a[i].tree.leaf_count() <= 2) continue;
    total += unlabelled_f1(a[i].tree, b[i].tree);
    ++used;
  }
  if (used == 0) throw std::invalid_argument("corpus_f1: no sentences left to score");
  return 100.0 * total / static_cast<double>(used);
}

// Mean corpus F1 over all unordered pairs of instances.
inline double self_f1(std::span<const TreeFile> files) {
  if (files.size() < 2)
    throw std::invalid_argument("self_f1: need at least 2 tree files, got " +
                                std::to_string(files.size()));
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < files.size(); ++i)
    for (std::size_t j = i + 1; j < files.size(); ++j) {
      total += corpus_f1(files[i], files[j]);
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

// Mean corpus F1 over all cross-group pairs.
inline double inter_model_f1(std::span<const TreeFile> group_a,
                             std::span<const TreeFile> group_b) {
  if (group_a.empty() || group_b.empty())
    throw std::invalid_argument("inter_model_f1: both groups must be non-empty");
  double total = 0.0;
  for (const TreeFile& a : group_a)
    for (const TreeFile& b : group_b) total += corpus_f1(a, b);
  return total / static_cast<double>(group_a.size() * group_b.size());
}

struct BaselineStats {
  double mean = 0.0, sigma = 0.0, max = 0.0;
};

struct Report {
  double self = std::numeric_limits<double>::quiet_NaN();  // needs >= 2 instances
  BaselineStats left, right, gold;
  bool has_gold = false;
  std::size_t instances = 0;
  std::size_t sentences = 0;
};

namespace detail {
inline BaselineStats stats_against(std::span<const TreeFile> models,
                                   const TreeFile& ref) {
  std::vector<double> scores;
  scores.reserve(models.size());
  for (const TreeFile& m : models) scores.push_back(corpus_f1(m, ref));
  BaselineStats s;
  for (double x : scores) s.mean += x;
  s.mean /= static_cast<double>(scores.size());
  for (double x : scores) s.sigma += (x - s.mean) * (x - s.mean);
  s.sigma = std::sqrt(s.sigma / static_cast<double>(scores.size()));
  s.max = *std::max_element(scores.begin(), scores.end());
  return s;
}
}  // namespace detail

// Table-2-style summary: self-F1 plus mean/sigma/max of corpus F1 against the
// left- and right-branching baselines and (when given) the provided parses.
inline Report make_report(std::span<const TreeFile> model_files,
                          const TreeFile* gold = nullptr) {
  if (model_files.empty())
    throw std::invalid_argument("make_report: need at least one model tree file");
  Report r;
  r.instances = model_files.size();
  r.sentences = model_files[0].size();
  TreeFile left, right;
  left.reserve(r.sentences);
  right.reserve(r.sentences);
  for (const ParsedSentence& s : model_files[0]) {
    left.push_back({branching_tree(Branch::kLeft, s.tree.leaf_count()), {}});
    right.push_back({branching_tree(Branch::kRight, s.tree.leaf_count()), {}});
  }
  if (model_files.size() >= 2) r.self = self_f1(model_files);
  r.left = detail::stats_against(model_files, left);
  r.right = detail::stats_against(model_files, right);
  if (gold) {
    r.has_gold = true;
    r.gold = detail::stats_against(model_files, *gold);
  }
  return r;
}

inline std::string format_report(const Report& r, const std::string& name = "model") {
  auto cell = [](const BaselineStats& s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%5.1f (%4.1f)  %5.1f", s.mean, s.sigma, s.max);
    return std::string(buf);
  };
  std::string self_cell;
  if (std::isnan(r.self)) {
    self_cell = "    ---";
  } else {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%7.1f", r.self);
    self_cell = buf;
  }
  char head[160], sub[160], row[256];
  std::snprintf(head, sizeof head, "%-12s  %7s   %-19s  %-19s  %-19s", "Model",
                "Self-F1", "Left Branching", "Right Branching",
                r.has_gold ? "Provided Parses" : "");
  std::snprintf(sub, sizeof sub, "%-12s  %7s   %-19s  %-19s  %-19s", "", "",
                "mu (sigma)    max", "mu (sigma)    max",
                r.has_gold ? "mu (sigma)    max" : "");
  std::snprintf(row, sizeof row, "%-12s  %s   %s  %s  %s", name.c_str(),
                self_cell.c_str(), cell(r.left).c_str(), cell(r.right).c_str(),
                r.has_gold ? cell(r.gold).c_str() : "");
  auto rtrim = [](std::string s) {
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
  };
  return rtrim(head) + "\n" + rtrim(sub) + "\n" + rtrim(row) + "\n";
}

inline nlohmann::json report_to_json(const Report& r) {
  auto put = [](const BaselineStats& s) {
    return nlohmann::json{{"mean", s.mean}, {"sigma", s.sigma}, {"max", s.max}};
  };
  nlohmann::json j;
  j["instances"] = r.instances;
  j["sentences"] = r.sentences;
  if (std::isnan(r.self)) j["self_f1"] = nullptr;
  else j["self_f1"] = r.self;
  j["left_branching"] = put(r.left);
  j["right_branching"] = put(r.right);
  if (r.has_gold) j["gold"] = put(r.gold);
  return j;
}

}  // namespace ltree
