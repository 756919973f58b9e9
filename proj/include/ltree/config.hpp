#pragma once

// Key/value config files mirroring TrainConfig. Lines look like
//   model = cky
//   lr = 3e-4
// with '#' comments. CLI flags are applied after the file, so they win.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ltree/io.hpp"
#include "ltree/train.hpp"

namespace ltree {

namespace detail {

inline std::string strip(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (used != v.size())
    throw std::invalid_argument("config: bad number for '" + key + "': " + v);
  return x;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t x = 0;
  try {
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (used != v.size() || v.empty() || v[0] == '-')
    throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean for '" + key + "': " + v);
}

}  // namespace detail

inline void apply_config_entry(TrainConfig& cfg, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_uint;
  if (key == "model") {
    auto kind = parse_model_kind(value);
    if (!kind) throw std::invalid_argument("config: unknown model '" + value + "'");
    cfg.model = *kind;
  } else if (key == "d") {
    cfg.d = parse_uint(key, value);
  } else if (key == "lr") {
    cfg.lr = parse_double(key, value);
  } else if (key == "beta1") {
    cfg.beta1 = parse_double(key, value);
  } else if (key == "beta2") {
    cfg.beta2 = parse_double(key, value);
  } else if (key == "epsilon") {
    cfg.epsilon = parse_double(key, value);
  } else if (key == "batch_size") {
    cfg.batch_size = parse_uint(key, value);
  } else if (key == "epochs") {
    cfg.epochs = parse_uint(key, value);
  } else if (key == "beam_start") {
    cfg.beam_start = parse_uint(key, value);
  } else if (key == "beam_end") {
    cfg.beam_end = parse_uint(key, value);
  } else if (key == "beam_anneal_epochs") {
    cfg.beam_anneal_epochs = parse_uint(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_uint(key, value);
  } else if (key == "temperature") {
    cfg.temperature = parse_double(key, value);
  } else if (key == "legacy_soft_cky") {
    cfg.legacy_soft_cky = parse_bool(key, value);
  } else if (key == "grad_clip") {
    cfg.grad_clip = parse_double(key, value);
  } else if (key == "max_len") {
    cfg.max_len = parse_uint(key, value);
  } else if (key == "stop_train_acc") {
    cfg.stop_train_acc = parse_double(key, value);
  } else if (key == "train_path") {
    cfg.train_path = value;
  } else if (key == "dev_path") {
    cfg.dev_path = value;
  } else if (key == "embeddings_path") {
    cfg.embeddings_path = value;
  } else if (key == "checkpoint_path") {
    cfg.checkpoint_path = value;
  } else if (key == "metrics_path") {
    cfg.metrics_path = value;
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

inline std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::string& path) {
  std::vector<std::pair<std::string, std::string>> entries;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::strip(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(i + 1) +
                                  ": expected 'key = value'");
    auto key = detail::strip(line.substr(0, eq));
    auto value = detail::strip(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument(path + ":" + std::to_string(i + 1) +
                                  ": empty key");
    entries.emplace_back(std::move(key), std::move(value));
  }
  return entries;
}

inline void apply_config_file(TrainConfig& cfg, const std::string& path) {
  for (const auto& [key, value] : parse_config_file(path)) {
    try {
      apply_config_entry(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ": " + e.what());
    }
  }
}

}  // namespace ltree
