// Generates marker-task NLI corpora (see ltree/synth.hpp). With SNLI-shaped
// lengths these double as structure-only surrogates for the tree analyses.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ltree/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"write a synthetic NLI corpus (jsonl)"};
  ltree::SynthConfig cfg;
  std::string out;
  bool short_lengths = false;
  app.add_option("--out", out, "output corpus path")->required();
  app.add_option("--n", cfg.n_examples, "number of examples");
  app.add_option("--seed", cfg.seed, "random seed");
  app.add_flag("--short", short_lengths,
               "uniform short sentences instead of SNLI-shaped lengths");
  app.add_option("--min-len", cfg.min_len, "minimum length (with --short)");
  app.add_option("--max-len", cfg.max_len, "maximum length (with --short)");
  app.add_option("--n-filler", cfg.n_filler, "filler vocabulary size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  cfg.snli_lengths = !short_lengths;
  try {
    ltree::write_synth_corpus(out, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "wrote " << cfg.n_examples << " examples to " << out << "\n";
  return 0;
}
