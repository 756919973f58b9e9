#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ltree/analysis.hpp"
#include "ltree/checkpoint.hpp"
#include "ltree/config.hpp"

namespace {

// Problems the user can fix by changing flags/paths: reported and exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string data_dir_default() {
  const char* env = std::getenv("LTREE_DATA_DIR");
  return env ? env : "";
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("no ") + what + " given");
  if (!std::filesystem::exists(path))
    throw UsageError(std::string("missing ") + what + ": " + path);
}

// Mirrors TrainConfig keys onto flags; values stay strings so the config
// parser does all conversion and flags behave exactly like file entries.
struct ConfigFlags {
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void add(CLI::App* cmd, const std::string& key, const std::string& flag,
           const std::string& desc) {
    options.emplace_back(key, cmd->add_option(flag, values[key], desc));
  }

  void add_all(CLI::App* cmd) {
    add(cmd, "model", "--model", "parser model: bssr or cky");
    add(cmd, "d", "--d", "hidden/embedding dimension");
    add(cmd, "lr", "--lr", "Adam learning rate");
    add(cmd, "beta1", "--beta1", "Adam beta1");
    add(cmd, "beta2", "--beta2", "Adam beta2");
    add(cmd, "epsilon", "--epsilon", "Adam epsilon");
    add(cmd, "batch_size", "--batch-size", "examples per gradient step");
    add(cmd, "epochs", "--epochs", "training epochs");
    add(cmd, "beam_start", "--beam-start", "initial beam width");
    add(cmd, "beam_end", "--beam-end", "final beam width");
    add(cmd, "beam_anneal_epochs", "--beam-anneal-epochs",
        "epochs over which the beam shrinks");
    add(cmd, "seed", "--seed", "random seed");
    add(cmd, "temperature", "--temperature", "softmax temperature (legacy CKY)");
    add(cmd, "legacy_soft_cky", "--legacy-soft-cky",
        "true/false: soft CKY mixtures instead of straight-through");
    add(cmd, "grad_clip", "--grad-clip", "global grad-norm clip (0 = off)");
    add(cmd, "max_len", "--max-len", "drop training pairs longer than this (0 = off)");
    add(cmd, "stop_train_acc", "--stop-train-acc",
        "stop once train accuracy reaches this (0 = off)");
    add(cmd, "train_path", "--train-path", "training corpus (jsonl)");
    add(cmd, "dev_path", "--dev-path", "development corpus (jsonl)");
    add(cmd, "embeddings_path", "--embeddings", "GloVe-format embeddings");
    add(cmd, "checkpoint_path", "--checkpoint", "checkpoint output path");
    add(cmd, "metrics_path", "--metrics", "metrics log output path (jsonl)");
  }

  // config file first, explicit flags second
  void apply(ltree::TrainConfig& cfg, const std::string& config_path) const {
    if (!config_path.empty()) {
      require_file(config_path, "config file");
      ltree::apply_config_file(cfg, config_path);
    }
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) ltree::apply_config_entry(cfg, key, values.at(key));
  }
};

std::string split_path(const std::string& data_dir, const std::string& split) {
  if (data_dir.empty())
    throw UsageError("no data directory (use --data-dir or LTREE_DATA_DIR)");
  return (std::filesystem::path(data_dir) / (split + ".jsonl")).string();
}

std::string resolve_corpus(const std::string& data, const std::string& data_dir,
                           const std::string& split) {
  std::string path = data.empty() ? split_path(data_dir, split) : data;
  require_file(path, "corpus");
  return path;
}

std::string model_label(const ltree::TrainConfig& cfg) {
  std::string kind = ltree::model_kind_name(cfg.model);
  for (char& c : kind) c = static_cast<char>(std::toupper(c));
  return std::to_string(cfg.d) + "D " + kind;
}

int cmd_train(const std::string& config_path, const ConfigFlags& flags,
              const std::string& data_dir) {
  ltree::TrainConfig cfg;
  flags.apply(cfg, config_path);
  if (cfg.train_path.empty() && !data_dir.empty())
    cfg.train_path = split_path(data_dir, "train");
  if (cfg.dev_path.empty() && !data_dir.empty()) {
    auto dev = split_path(data_dir, "dev");
    if (std::filesystem::exists(dev)) cfg.dev_path = dev;
  }
  require_file(cfg.train_path, "training corpus");
  if (!cfg.dev_path.empty()) require_file(cfg.dev_path, "development corpus");
  if (!cfg.embeddings_path.empty())
    require_file(cfg.embeddings_path, "embeddings file");

  std::cerr << "training " << model_label(cfg) << " on " << cfg.train_path
            << "\n";
  auto run = ltree::run_training(cfg);
  for (std::size_t e = 0; e < run.result.epochs.size(); ++e) {
    const auto& ep = run.result.epochs[e];
    std::fprintf(stderr, "epoch %zu  loss %.4f", e, ep.mean_loss);
    if (!std::isnan(ep.dev_acc)) std::fprintf(stderr, "  dev %.4f", ep.dev_acc);
    std::fprintf(stderr, "\n");
  }
  std::printf("epochs: %zu  steps: %zu\n", run.result.epochs.size(),
              run.result.steps);
  if (run.result.best_dev_acc >= 0.0)
    std::printf("best dev accuracy: %.4f (epoch %zu)\n", run.result.best_dev_acc,
                run.result.best_epoch);
  if (!cfg.checkpoint_path.empty())
    std::printf("checkpoint: %s\n", cfg.checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data,
             const std::string& data_dir, const std::string& split,
             const ConfigFlags& flags) {
  require_file(checkpoint, "checkpoint");
  auto ckpt = ltree::load_checkpoint(checkpoint);
  flags.apply(ckpt.cfg, "");
  auto corpus = ltree::load_corpus(resolve_corpus(data, data_dir, split));
  std::cerr << "evaluating " << model_label(ckpt.cfg) << " on " << corpus.size()
            << " pairs\n";
  auto res = ltree::evaluate(ckpt.model, corpus, ckpt.cfg);
  std::printf("%-18s  %s\n", "Model", "Accuracy (%)");
  std::printf("%-18s  %12.1f\n", model_label(ckpt.cfg).c_str(),
              100.0 * res.accuracy);
  return 0;
}

int cmd_induce(const std::string& checkpoint, const std::string& data,
               const std::string& data_dir, const std::string& split,
               const std::string& out, const ConfigFlags& flags) {
  require_file(checkpoint, "checkpoint");
  auto ckpt = ltree::load_checkpoint(checkpoint);
  flags.apply(ckpt.cfg, "");
  auto corpus = ltree::load_corpus(resolve_corpus(data, data_dir, split));
  std::cerr << "inducing trees for " << corpus.size() << " pairs\n";
  auto res = ltree::evaluate(ckpt.model, corpus, ckpt.cfg);
  ltree::write_tree_file(out, res.trees);
  std::cerr << "wrote " << res.trees.size() << " trees to " << out << "\n";
  return 0;
}

int cmd_baseline(const std::string& kind, const std::string& data,
                 const std::string& data_dir, const std::string& split,
                 std::uint64_t seed, const std::string& out) {
  auto corpus = ltree::load_corpus(resolve_corpus(data, data_dir, split));
  ltree::Rng rng(seed);
  ltree::TreeFile trees;
  trees.reserve(2 * corpus.size());
  auto add = [&](const std::vector<std::string>& tokens,
                 const ltree::BinaryTree& provided) {
    ltree::ParsedSentence p;
    p.tokens = tokens;
    std::size_t n = tokens.size();
    if (kind == "left")
      p.tree = ltree::branching_tree(ltree::Branch::kLeft, n);
    else if (kind == "right")
      p.tree = ltree::branching_tree(ltree::Branch::kRight, n);
    else if (kind == "random")
      p.tree = ltree::random_tree(n, rng);
    else
      p.tree = provided;
    trees.push_back(std::move(p));
  };
  for (const auto& ex : corpus) {
    add(ex.premise_tokens, ex.premise_tree);
    add(ex.hypothesis_tokens, ex.hypothesis_tree);
  }
  ltree::write_tree_file(out, trees);
  std::cerr << "wrote " << trees.size() << " " << kind << " trees to " << out
            << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& model_files,
                const std::string& gold_path, const std::string& name,
                const std::string& out) {
  std::vector<ltree::TreeFile> instances;
  instances.reserve(model_files.size());
  for (const auto& path : model_files) {
    require_file(path, "tree file");
    instances.push_back(ltree::read_tree_file(path));
  }
  ltree::TreeFile gold;
  if (!gold_path.empty()) {
    require_file(gold_path, "gold tree file");
    gold = ltree::read_tree_file(gold_path);
  }
  auto report =
      ltree::make_report(instances, gold_path.empty() ? nullptr : &gold);
  std::fputs(ltree::format_report(report, name).c_str(), stdout);
  if (!out.empty())
    ltree::atomic_write_file(out, ltree::report_to_json(report).dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent tree learning: joint parsing and NLI classification"};
  app.require_subcommand(1);

  std::string data_dir = data_dir_default();
  std::string config_path, checkpoint, data, split = "dev", out, kind;
  std::string gold_path, name = "model";
  std::uint64_t seed = 1;
  std::vector<std::string> model_files;

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--data-dir", data_dir, "directory with {train,dev,test}.jsonl");
  ConfigFlags train_flags;
  train_flags.add_all(train);

  auto* eval = app.add_subcommand("eval", "report accuracy for a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  eval->add_option("--data", data, "corpus file (overrides --split)");
  eval->add_option("--data-dir", data_dir, "directory with corpus files");
  eval->add_option("--split", split, "corpus split name");
  ConfigFlags eval_flags;
  eval_flags.add(eval, "beam_end", "--beam-end", "beam width at evaluation");

  auto* induce = app.add_subcommand("induce", "write induced parse trees");
  induce->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  induce->add_option("--data", data, "corpus file (overrides --split)");
  induce->add_option("--data-dir", data_dir, "directory with corpus files");
  induce->add_option("--split", split, "corpus split name");
  induce->add_option("--out", out, "output tree file")->required();
  ConfigFlags induce_flags;
  induce_flags.add(induce, "beam_end", "--beam-end", "beam width at parsing");

  auto* baseline = app.add_subcommand("baseline", "write baseline parse trees");
  baseline->add_option("--kind", kind, "left, right, random, or provided")
      ->required()
      ->check(CLI::IsMember({"left", "right", "random", "provided"}));
  baseline->add_option("--data", data, "corpus file (overrides --split)");
  baseline->add_option("--data-dir", data_dir, "directory with corpus files");
  baseline->add_option("--split", split, "corpus split name");
  baseline->add_option("--seed", seed, "seed for random trees");
  baseline->add_option("--out", out, "output tree file")->required();

  auto* compare = app.add_subcommand("compare", "self-F1 and baseline-F1 report");
  compare->add_option("files", model_files, "induced tree files, one per instance")
      ->required();
  compare->add_option("--gold", gold_path, "reference tree file (e.g. provided parses)");
  compare->add_option("--name", name, "model label in the report");
  compare->add_option("--out", out, "also write the report as json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, train_flags, data_dir);
    if (eval->parsed())
      return cmd_eval(checkpoint, data, data_dir, split, eval_flags);
    if (induce->parsed())
      return cmd_induce(checkpoint, data, data_dir, split, out, induce_flags);
    if (baseline->parsed())
      return cmd_baseline(kind, data, data_dir, split, seed, out);
    if (compare->parsed())
      return cmd_compare(model_files, gold_path, name, out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
