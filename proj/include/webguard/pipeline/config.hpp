#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "webguard/fusion/fusion.hpp"
#include "webguard/graph/encoder.hpp"
#include "webguard/url/encoder.hpp"
#include "webguard/voting/voting.hpp"

namespace webguard::pipeline {

struct TrainingConfig {
  std::size_t batch_size = 4;
  double lr = 2e-5;
  double weight_decay = 5e-4;
  double dropout = 0.1;
  std::size_t epochs = 10;
  std::size_t folds = 5;
  std::uint64_t folds_seed = 42;
};

struct RunConfig {
  std::uint64_t seed = 42;
  url::UrlEncoderConfig url;
  std::size_t buckets = 1 << 14;
  std::size_t embed_dim = 100;
  graph::GraphEncoderConfig graph;
  fusion::FusionConfig fusion;
  voting::VoteParams voting;  // seed is per sample, not part of the config
  TrainingConfig training;

  // Copies shared sizes between sections (embed_dim -> graph.in_dim, ...)
  // and validates every section.
  void finalize();
  nlohmann::json to_json() const;
  // 16 hex digits of FNV-1a over the canonical JSON dump.
  std::string hash() const;
};

// Strict: every key must be known, every value must have the right type.
RunConfig config_from_json(const nlohmann::json& j);

// TOML-style text: `[section]` headers, `key = value` lines, `#` comments.
// Values use JSON literal syntax (numbers, true/false, "strings", [arrays]).
nlohmann::json parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
// "section.key=value" applied on top of `base`.
RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides);

}  // namespace webguard::pipeline
