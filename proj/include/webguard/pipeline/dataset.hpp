#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "webguard/html/dom.hpp"
#include "webguard/partition/partition.hpp"
#include "webguard/pipeline/config.hpp"
#include "webguard/url/encoder.hpp"

namespace webguard::pipeline {

struct ManifestRow {
  std::string id;
  std::string url;
  std::string html_path;  // relative to the manifest's directory
  int label = 0;
};

// One JSON object per line; blank lines are skipped. Rows are validated
// (fields, label in {0,1}, unique ids) and errors name the line and id.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);

struct Sample {
  ManifestRow row;
  html::DomGraph graph;  // tokenized
  std::vector<partition::SubGraph> groups;
  std::vector<url::UrlToken> url_tokens;
  bool from_cache = false;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t size() const { return samples.size(); }
  std::vector<int> labels() const;
  nlohmann::json stats() const;  // per-sample parse statistics
};

struct IngestOptions {
  // DomGraph cache keyed by the FNV-1a hash of the HTML bytes; disabled
  // when empty.
  std::filesystem::path cache_dir;
  std::size_t workers = 1;
};

// Builds one sample from in-memory inputs (used by predict).
Sample make_sample(const ManifestRow& row, std::string_view html, const RunConfig& config);

// Parses, tokenizes and partitions every row eagerly. Missing or unreadable
// HTML files are collected and reported together in one InputError.
Dataset ingest(const std::filesystem::path& manifest, const RunConfig& config, const IngestOptions& options = {});

// Shuffles [0, n) with `seed` and deals indices round-robin into `folds`.
std::vector<std::vector<std::size_t>> kfold(std::size_t n, std::size_t folds, std::uint64_t seed);
// (train, test) where test is fold `k` of the config's split.
std::pair<Dataset, Dataset> split_fold(const Dataset& data, const TrainingConfig& training, std::size_t k);

// Per-sample stream seed: derive(master, FNV-1a(id)).
std::uint64_t sample_seed(std::uint64_t master, const std::string& id);

}  // namespace webguard::pipeline
