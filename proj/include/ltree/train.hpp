#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ltree/adam.hpp"
#include "ltree/bssr.hpp"
#include "ltree/cky.hpp"
#include "ltree/data.hpp"
#include "ltree/nli.hpp"
#include "ltree/rng.hpp"
#include "ltree/tensor.hpp"
#include "ltree/tree.hpp"
#include "ltree/treelstm.hpp"

namespace ltree {

enum class ModelKind { kBssr, kCky };

inline const char* model_kind_name(ModelKind k) {
  return k == ModelKind::kBssr ? "bssr" : "cky";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view s) {
  if (s == "bssr") return ModelKind::kBssr;
  if (s == "cky") return ModelKind::kCky;
  return std::nullopt;
}

struct TrainConfig {
  ModelKind model = ModelKind::kBssr;
  std::size_t d = 100;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::size_t beam_start = 50;
  std::size_t beam_end = 5;
  std::size_t beam_anneal_epochs = 2;
  std::uint64_t seed = 1;
  double temperature = 1.0;      // legacy soft-CKY mixing only
  bool legacy_soft_cky = false;  // softmax mixture instead of straight-through
  double grad_clip = 0.0;        // global-norm clip; 0 disables
  std::size_t max_len = 0;       // training sentence-length cap; 0 disables
  double stop_train_acc = 0.0;   // early-stop threshold on train accuracy; 0 disables
  std::string train_path, dev_path, embeddings_path;
  std::string checkpoint_path, metrics_path;
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.beam_end < 1 || cfg.beam_start < cfg.beam_end)
    throw std::invalid_argument("config: need beam_start >= beam_end >= 1");
  if (cfg.epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (cfg.d < 1) throw std::invalid_argument("config: d must be >= 1");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("config: batch_size must be >= 1");
  if (cfg.temperature <= 0.0)
    throw std::invalid_argument("config: temperature must be positive");
}

// Linear anneal from beam_start at step 0 down to beam_end at the last step
// of epoch beam_anneal_epochs, rounded half-up; constant beam_end after.
inline std::size_t beam_at(std::size_t step, std::size_t steps_per_epoch,
                           const TrainConfig& cfg) {
  std::size_t anneal = cfg.beam_anneal_epochs * steps_per_epoch;
  if (anneal <= 1 || step >= anneal) return cfg.beam_end;
  double t = static_cast<double>(step) / static_cast<double>(anneal - 1);
  double w = static_cast<double>(cfg.beam_start) +
             (static_cast<double>(cfg.beam_end) -
              static_cast<double>(cfg.beam_start)) *
                 t;
  return static_cast<std::size_t>(std::floor(w + 0.5));
}

// Both models plus the shared composition function and classifier head; only
// the active parser's parameters are trained or checkpointed.
struct Model {
  ModelKind kind;
  std::size_t d;
  Vocab vocab;
  Param emb;
  TreeLstm tl;
  ActionScorer scorer;
  CkyParser cky;
  NliHead head;

  Model(ModelKind kind_, std::size_t d_, Vocab vocab_)
      : kind(kind_),
        d(d_),
        vocab(std::move(vocab_)),
        emb("embeddings", {vocab.size(), d_}),
        tl(d_),
        scorer(d_),
        cky(d_),
        head(d_) {}

  // Embedding rows are filled separately (load_embeddings).
  void init(Rng& rng) {
    tl.init(rng);
    if (kind == ModelKind::kBssr) scorer.init(rng);
    else cky.init(rng);
    head.init(rng);
  }

  std::vector<Param*> params() {
    std::vector<Param*> out{&emb};
    for (Param* p : tl.params()) out.push_back(p);
    for (Param* p : kind == ModelKind::kBssr ? scorer.params() : cky.params())
      out.push_back(p);
    for (Param* p : head.params()) out.push_back(p);
    return out;
  }
};

inline std::vector<NodeState> leaf_states(Graph& g, Model& m,
                                          const std::vector<std::string>& tokens) {
  std::vector<NodeState> out;
  out.reserve(tokens.size());
  for (const std::string& tok : tokens)
    out.push_back(m.tl.leaf_state(g, g.leaf_row(m.emb, m.vocab.lookup(tok))));
  return out;
}

inline Tensor encode_sentence(Graph& g, Model& m,
                              const std::vector<std::string>& tokens,
                              std::size_t beam, bool straight_through,
                              double temperature, BinaryTree* tree_out = nullptr) {
  auto leaves = leaf_states(g, m, tokens);
  if (m.kind == ModelKind::kBssr) {
    BeamResult r = beam_parse(g, m.tl, m.scorer, leaves, beam, straight_through);
    if (tree_out) *tree_out = std::move(r.best_tree);
    return r.representation;
  }
  CkyResult r = m.cky.parse(g, m.tl, leaves, straight_through, temperature);
  if (tree_out) *tree_out = std::move(r.tree);
  return r.representation;
}

struct ForwardResult {
  Tensor loss, log_probs;
  int prediction = -1;
  BinaryTree premise_tree, hypothesis_tree;  // empty under soft-mixture CKY
};

inline ForwardResult example_forward(Graph& g, Model& m, const Example& ex,
                                     std::size_t beam, bool straight_through,
                                     double temperature = 1.0) {
  ForwardResult out;
  Tensor u = encode_sentence(g, m, ex.premise_tokens, beam, straight_through,
                             temperature, &out.premise_tree);
  Tensor v = encode_sentence(g, m, ex.hypothesis_tokens, beam, straight_through,
                             temperature, &out.hypothesis_tree);
  out.log_probs = m.head.log_probs(g, m.head.features(g, u, v));
  out.loss = m.head.loss(g, out.log_probs, ex.label);
  out.prediction = static_cast<int>(argmax_lowest(out.log_probs.values()));
  return out;
}

struct EvalResult {
  double accuracy = 0.0;
  std::vector<int> predictions;
  std::vector<ParsedSentence> trees;  // induced; premise then hypothesis per example
};

// Greedy/straight-through forward at beam_end.
inline EvalResult evaluate(Model& m, const std::vector<Example>& examples,
                           const TrainConfig& cfg) {
  EvalResult out;
  out.predictions.reserve(examples.size());
  out.trees.reserve(2 * examples.size());
  Graph g;
  std::size_t correct = 0;
  for (const Example& ex : examples) {
    g.clear();
    ForwardResult f = example_forward(g, m, ex, cfg.beam_end, true, cfg.temperature);
    if (f.prediction == static_cast<int>(ex.label)) ++correct;
    out.predictions.push_back(f.prediction);
    out.trees.push_back({std::move(f.premise_tree), ex.premise_tokens});
    out.trees.push_back({std::move(f.hypothesis_tree), ex.hypothesis_tokens});
  }
  if (!examples.empty())
    out.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  return out;
}

// Scales all gradients so their global L2 norm is at most max_norm.
inline double clip_global_norm(const std::vector<Param*>& params, double max_norm) {
  double sq = 0.0;
  for (const Param* p : params)
    for (double gv : p->grad) sq += gv * gv;
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (Param* p : params)
      for (double& gv : p->grad) gv *= s;
  }
  return norm;
}

inline std::string metrics_line(std::size_t step, std::size_t epoch, double loss,
                                std::optional<double> dev_acc,
                                std::size_t beam_width) {
  nlohmann::json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["loss"] = loss;
  if (dev_acc) j["dev_acc"] = *dev_acc;
  else j["dev_acc"] = nullptr;
  j["beam_width"] = beam_width;
  return j.dump();
}

struct EpochStats {
  double mean_loss = 0.0;
  double dev_acc = std::numeric_limits<double>::quiet_NaN();
  double train_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  double best_dev_acc = -1.0;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  std::vector<std::string> metrics;  // line-delimited records
};

using BestCallback =
    std::function<void(Model&, Adam&, std::size_t epoch, double dev_acc)>;

// Epoch loop with seeded shuffling, per-sentence forwards accumulating into
// batch-mean gradients, one Adam step per batch, per-epoch dev evaluation,
// and best-dev tracking. rng drives only the shuffles.
inline TrainResult train_loop(Model& m, Adam& adam,
                              const std::vector<Example>& train_set,
                              const std::vector<Example>& dev_set,
                              const TrainConfig& cfg, Rng& rng,
                              const BestCallback& on_best = {}) {
  validate(cfg);
  if (train_set.empty())
    throw std::invalid_argument("train_loop: empty training set");
  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult res;
  Graph g;
  const bool st_train = !(m.kind == ModelKind::kCky && cfg.legacy_soft_cky);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0, width = cfg.beam_end;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      width = beam_at(res.steps, steps_per_epoch, cfg);
      adam.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < count; ++k) {
        const Example& ex = train_set[order[start + k]];
        g.clear();
        ForwardResult f =
            example_forward(g, m, ex, width, st_train, cfg.temperature);
        g.backward(g.scale(f.loss, 1.0 / static_cast<double>(count)));
        batch_loss += f.loss.value();
      }
      batch_loss /= static_cast<double>(count);
      if (cfg.grad_clip > 0.0) clip_global_norm(adam.params(), cfg.grad_clip);
      adam.step();
      res.metrics.push_back(
          metrics_line(res.steps, epoch, batch_loss, std::nullopt, width));
      epoch_loss += batch_loss;
      ++batches;
      ++res.steps;
    }

    EpochStats stats;
    stats.mean_loss = epoch_loss / static_cast<double>(batches);
    if (!dev_set.empty()) {
      stats.dev_acc = evaluate(m, dev_set, cfg).accuracy;
      if (stats.dev_acc > res.best_dev_acc) {
        res.best_dev_acc = stats.dev_acc;
        res.best_epoch = epoch;
        if (on_best) on_best(m, adam, epoch, stats.dev_acc);
      }
    }
    res.metrics.push_back(metrics_line(res.steps, epoch, stats.mean_loss,
                                       dev_set.empty()
                                           ? std::optional<double>()
                                           : std::optional<double>(stats.dev_acc),
                                       width));
    bool stop = false;
    if (cfg.stop_train_acc > 0.0) {
      stats.train_acc = evaluate(m, train_set, cfg).accuracy;
      stop = stats.train_acc >= cfg.stop_train_acc;
    }
    res.epochs.push_back(stats);
    if (stop) break;
  }
  return res;
}

// Drops examples whose longer sentence exceeds the cap.
inline std::vector<Example> apply_length_cap(std::vector<Example> examples,
                                             std::size_t max_len) {
  if (max_len == 0) return examples;
  std::vector<Example> out;
  out.reserve(examples.size());
  for (Example& ex : examples)
    if (ex.premise_tokens.size() <= max_len &&
        ex.hypothesis_tokens.size() <= max_len)
      out.push_back(std::move(ex));
  return out;
}

}  // namespace ltree
