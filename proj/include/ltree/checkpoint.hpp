#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ltree/adam.hpp"
#include "ltree/data.hpp"
#include "ltree/io.hpp"
#include "ltree/train.hpp"

namespace ltree {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"model", model_kind_name(cfg.model)},
                        {"d", cfg.d},
                        {"lr", cfg.lr},
                        {"beta1", cfg.beta1},
                        {"beta2", cfg.beta2},
                        {"epsilon", cfg.epsilon},
                        {"batch_size", cfg.batch_size},
                        {"epochs", cfg.epochs},
                        {"beam_start", cfg.beam_start},
                        {"beam_end", cfg.beam_end},
                        {"beam_anneal_epochs", cfg.beam_anneal_epochs},
                        {"seed", cfg.seed},
                        {"temperature", cfg.temperature},
                        {"legacy_soft_cky", cfg.legacy_soft_cky},
                        {"grad_clip", cfg.grad_clip},
                        {"max_len", cfg.max_len},
                        {"stop_train_acc", cfg.stop_train_acc},
                        {"train_path", cfg.train_path},
                        {"dev_path", cfg.dev_path},
                        {"embeddings_path", cfg.embeddings_path},
                        {"checkpoint_path", cfg.checkpoint_path},
                        {"metrics_path", cfg.metrics_path}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  if (j.contains("model")) {
    auto kind = parse_model_kind(j["model"].get<std::string>());
    if (!kind)
      throw std::runtime_error("config: unknown model '" +
                               j["model"].get<std::string>() + "'");
    cfg.model = *kind;
  }
  cfg.d = j.value("d", cfg.d);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.beam_start = j.value("beam_start", cfg.beam_start);
  cfg.beam_end = j.value("beam_end", cfg.beam_end);
  cfg.beam_anneal_epochs = j.value("beam_anneal_epochs", cfg.beam_anneal_epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.temperature = j.value("temperature", cfg.temperature);
  cfg.legacy_soft_cky = j.value("legacy_soft_cky", cfg.legacy_soft_cky);
  cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
  cfg.max_len = j.value("max_len", cfg.max_len);
  cfg.stop_train_acc = j.value("stop_train_acc", cfg.stop_train_acc);
  cfg.train_path = j.value("train_path", cfg.train_path);
  cfg.dev_path = j.value("dev_path", cfg.dev_path);
  cfg.embeddings_path = j.value("embeddings_path", cfg.embeddings_path);
  cfg.checkpoint_path = j.value("checkpoint_path", cfg.checkpoint_path);
  cfg.metrics_path = j.value("metrics_path", cfg.metrics_path);
  return cfg;
}

// Self-describing JSON checkpoint; doubles survive the round trip bit-exactly.
inline void save_checkpoint(const std::string& path, Model& model,
                            const TrainConfig& cfg, Adam* adam = nullptr,
                            nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json j;
  j["format"] = "ltree-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = config_to_json(cfg);
  j["vocab"] = model.vocab.tokens();
  nlohmann::json params = nlohmann::json::array();
  for (Param* p : model.params()) {
    params.push_back({{"name", p->name},
                      {"shape", p->shape},
                      {"values", p->value}});
  }
  j["params"] = std::move(params);
  if (adam) {
    j["adam"] = {{"step", adam->step_count()}, {"m", adam->m()}, {"v", adam->v()}};
  }
  if (!extra.empty()) j["extra"] = std::move(extra);
  atomic_write_file(path, j.dump());
}

struct LoadedCheckpoint {
  TrainConfig cfg;
  Model model;
  bool has_adam = false;
  std::vector<std::vector<double>> adam_m, adam_v;
  std::uint64_t adam_step = 0;
  nlohmann::json extra;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: " + path + ": " + e.what());
  }
  if (j.value("format", "") != "ltree-checkpoint")
    throw std::runtime_error("load_checkpoint: " + path +
                             " is not an ltree checkpoint");
  int version = j.value("version", -1);
  if (version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported format version " +
                             std::to_string(version));

  TrainConfig cfg = config_from_json(j.at("config"));
  Vocab vocab = Vocab::from_tokens(j.at("vocab").get<std::vector<std::string>>());
  LoadedCheckpoint out{cfg, Model(cfg.model, cfg.d, std::move(vocab))};

  std::vector<Param*> params = out.model.params();
  const nlohmann::json& stored = j.at("params");
  if (stored.size() != params.size())
    throw std::runtime_error("load_checkpoint: expected " +
                             std::to_string(params.size()) + " params, found " +
                             std::to_string(stored.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& rec = stored[i];
    std::string name = rec.at("name").get<std::string>();
    if (name != params[i]->name)
      throw std::runtime_error("load_checkpoint: param " + std::to_string(i) +
                               " is '" + name + "', expected '" +
                               params[i]->name + "'");
    auto shape = rec.at("shape").get<std::vector<std::size_t>>();
    if (shape != params[i]->shape)
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    auto values = rec.at("values").get<std::vector<double>>();
    if (values.size() != params[i]->size())
      throw std::runtime_error("load_checkpoint: value count mismatch for " + name);
    params[i]->value = std::move(values);
  }

  if (j.contains("adam")) {
    out.has_adam = true;
    out.adam_step = j["adam"].at("step").get<std::uint64_t>();
    out.adam_m = j["adam"].at("m").get<std::vector<std::vector<double>>>();
    out.adam_v = j["adam"].at("v").get<std::vector<std::vector<double>>>();
    if (out.adam_m.size() != params.size() || out.adam_v.size() != params.size())
      throw std::runtime_error("load_checkpoint: adam state size mismatch");
  }
  if (j.contains("extra")) out.extra = j["extra"];
  return out;
}

inline AdamConfig adam_config_of(const TrainConfig& cfg) {
  AdamConfig a;
  a.lr = cfg.lr;
  a.beta1 = cfg.beta1;
  a.beta2 = cfg.beta2;
  a.eps = cfg.epsilon;
  return a;
}

inline void restore_adam(Adam& adam, const LoadedCheckpoint& ckpt) {
  if (!ckpt.has_adam)
    throw std::invalid_argument("restore_adam: checkpoint has no optimizer state");
  adam.m() = ckpt.adam_m;
  adam.v() = ckpt.adam_v;
  adam.restore_step_count(ckpt.adam_step);
}

// Vocabulary from the training corpus, Glorot/seeded init, then embedding
// rows (file-backed when a path is given). One rng stream covers init,
// embeddings, and — via the caller — the epoch shuffles.
inline Model build_model(const TrainConfig& cfg,
                         const std::vector<Example>& train_examples, Rng& rng) {
  Vocab vocab;
  add_corpus_tokens(vocab, train_examples);
  Model m(cfg.model, cfg.d, std::move(vocab));
  m.init(rng);
  load_embeddings(cfg.embeddings_path, m.vocab, m.emb, rng);
  return m;
}

struct TrainedRun {
  TrainResult result;
  Model model;
};

// The full file-based pipeline: load corpora, build, train, and write the
// best-dev checkpoint (final state when no dev set) and the metrics log.
inline TrainedRun run_training(const TrainConfig& cfg) {
  validate(cfg);
  if (cfg.train_path.empty())
    throw std::invalid_argument("config: train_path is required");
  auto train_examples = apply_length_cap(load_corpus(cfg.train_path), cfg.max_len);
  std::vector<Example> dev_examples;
  if (!cfg.dev_path.empty()) dev_examples = load_corpus(cfg.dev_path);

  Rng rng(cfg.seed);
  Model model = build_model(cfg, train_examples, rng);
  Adam adam(model.params(), adam_config_of(cfg));

  BestCallback on_best;
  if (!cfg.checkpoint_path.empty() && !dev_examples.empty()) {
    on_best = [&cfg](Model& m, Adam& a, std::size_t epoch, double dev_acc) {
      save_checkpoint(cfg.checkpoint_path, m, cfg, &a,
                      {{"epoch", epoch}, {"dev_acc", dev_acc}});
    };
  }
  TrainResult res =
      train_loop(model, adam, train_examples, dev_examples, cfg, rng, on_best);

  if (!cfg.checkpoint_path.empty() && dev_examples.empty())
    save_checkpoint(cfg.checkpoint_path, model, cfg, &adam,
                    {{"epoch", res.epochs.size() - 1}});
  if (!cfg.metrics_path.empty()) {
    std::string log;
    for (const std::string& line : res.metrics) {
      log += line;
      log += '\n';
    }
    atomic_write_file(cfg.metrics_path, log);
  }
  return {std::move(res), std::move(model)};
}

}  // namespace ltree
