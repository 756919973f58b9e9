#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ltree/nli.hpp"
#include "ltree/rng.hpp"
#include "ltree/tensor.hpp"
#include "ltree/tree.hpp"

namespace ltree {

struct Example {
  std::vector<std::string> premise_tokens, hypothesis_tokens;
  Label label = Label::kNeutral;
  BinaryTree premise_tree, hypothesis_tree;  // corpus-provided binary parses
  std::string pair_id, genre;
};

// Loads one NLI jsonl file. Tokens come from the binary-parse fields' leaves,
// keeping induced-vs-gold comparisons aligned; records without a consensus
// gold label ("-") are skipped.
inline std::vector<Example> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_corpus: cannot open " + path);
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": malformed record: " + e.what());
    }
    auto field = [&](const char* name) -> std::string {
      if (!rec.contains(name) || !rec[name].is_string())
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": missing field " + name);
      return rec[name].get<std::string>();
    };
    std::string gold = field("gold_label");
    if (gold == "-") continue;
    std::optional<Label> label = parse_label(gold);
    if (!label)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": unknown label '" + gold + "'");
    Example ex;
    ex.label = *label;
    try {
      ParsedSentence p = parse_bracketed(field("sentence1_binary_parse"));
      ex.premise_tree = std::move(p.tree);
      ex.premise_tokens = std::move(p.tokens);
      ParsedSentence h = parse_bracketed(field("sentence2_binary_parse"));
      ex.hypothesis_tree = std::move(h.tree);
      ex.hypothesis_tokens = std::move(h.tokens);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
    if (ex.premise_tokens.empty() || ex.hypothesis_tokens.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": empty sentence");
    ex.pair_id = rec.contains("pairID") && rec["pairID"].is_string()
                     ? rec["pairID"].get<std::string>()
                     : std::to_string(lineno);
    if (rec.contains("genre") && rec["genre"].is_string())
      ex.genre = rec["genre"].get<std::string>();
    out.push_back(std::move(ex));
  }
  return out;
}

// concatenation, e.g. MultiNLI+ = MultiNLI train followed by SNLI train
inline std::vector<Example> load_corpus_files(
    const std::vector<std::string>& paths) {
  std::vector<Example> out;
  for (const std::string& p : paths) {
    std::vector<Example> part = load_corpus(p);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

// Dense token -> row map over lowercased tokens. Row 0 is the unknown-token
// row so checkpoints stay usable on unseen evaluation vocabulary.
class Vocab {
 public:
  static constexpr const char* kUnk = "<unk>";

  Vocab() { add(kUnk); }

  std::size_t add(std::string_view token) {
    std::string key = lowercase(token);
    auto [it, fresh] = index_.try_emplace(key, tokens_.size());
    if (fresh) tokens_.push_back(key);
    return it->second;
  }

  std::size_t lookup(std::string_view token) const {
    auto it = index_.find(lowercase(token));
    return it == index_.end() ? 0 : it->second;
  }

  bool contains(std::string_view token) const {
    return index_.count(lowercase(token)) > 0;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    if (tokens.empty() || tokens[0] != kUnk)
      throw std::invalid_argument("Vocab::from_tokens: first token must be <unk>");
    for (std::size_t i = 1; i < tokens.size(); ++i) v.add(tokens[i]);
    if (v.size() != tokens.size())
      throw std::invalid_argument("Vocab::from_tokens: duplicate tokens");
    return v;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> tokens_;
};

inline void add_corpus_tokens(Vocab& vocab, const std::vector<Example>& corpus) {
  for (const Example& ex : corpus) {
    for (const std::string& t : ex.premise_tokens) vocab.add(t);
    for (const std::string& t : ex.hypothesis_tokens) vocab.add(t);
  }
}

// Fills the embedding matrix: every row first gets a seeded uniform
// [-0.05, 0.05] init (deterministic per seed and vocab order), then rows
// present in the file are overwritten with the file values. Empty path keeps
// the random init for every row. All rows are trainable.
inline void load_embeddings(const std::string& path, const Vocab& vocab,
                            Param& emb, Rng& rng) {
  std::size_t d = emb.cols();
  if (emb.rows() != vocab.size())
    throw std::invalid_argument("load_embeddings: matrix rows " +
                                std::to_string(emb.rows()) + " != vocab size " +
                                std::to_string(vocab.size()));
  for (double& v : emb.value) v = rng.uniform(-0.05, 0.05);
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_embeddings: cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    if (!vocab.contains(token)) continue;
    std::size_t row = vocab.lookup(token);
    for (std::size_t j = 0; j < d; ++j) {
      double v;
      if (!(ls >> v))
        throw std::runtime_error("load_embeddings: vector for token '" + token +
                                 "' has fewer than " + std::to_string(d) +
                                 " values");
      emb.value[row * d + j] = v;
    }
    double extra;
    if (ls >> extra)
      throw std::runtime_error("load_embeddings: vector for token '" + token +
                               "' has more than " + std::to_string(d) + " values");
  }
}

}  // namespace ltree
