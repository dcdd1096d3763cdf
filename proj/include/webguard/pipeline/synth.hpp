#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "webguard/pipeline/dataset.hpp"

namespace webguard::pipeline {

struct SynthOptions {
  std::size_t n = 100;
  double malicious_fraction = 0.5;
  std::uint64_t seed = 42;
  std::size_t t_f = 5;  // planted nodes are kept inside one group for this t_f
  std::string id_prefix = "s";
};

struct PlantedRecord {
  std::string id;
  std::size_t group = 0;
  std::vector<std::string> nodes;  // node ids of the signature elements
  std::size_t doc_nodes = 0;
};

struct SynthDocument {
  ManifestRow row;
  std::string html;
  std::optional<PlantedRecord> planted;
};

// In-memory generation. Benign pages are nested div/list/link templates,
// sometimes with a visible search or login form or an analytics script. Malicious
// pages add a hidden off-domain password form and an obfuscated script,
// placed so every signature node lands in one hash group and makes up at
// most 5% of the document. About half of the malicious URLs are
// homoglyph-style; the rest look benign.
std::vector<SynthDocument> make_synthetic_documents(const SynthOptions& options);

// Writes html/<id>.html, manifest.jsonl and planted.jsonl under out_dir.
// Returns the manifest path.
std::filesystem::path make_synthetic(const std::filesystem::path& out_dir, const SynthOptions& options);

std::vector<PlantedRecord> read_planted(const std::filesystem::path& path);

}  // namespace webguard::pipeline
