#include "webguard/pipeline/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "webguard/error.hpp"
#include "webguard/html/featurize.hpp"
#include "webguard/util/hash.hpp"
#include "webguard/util/rng.hpp"

namespace webguard::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream s;
  s << in.rdbuf();
  if (in.bad()) return std::nullopt;
  return s.str();
}

html::DomGraph parse_cached(std::string_view bytes, const fs::path& cache_dir, bool& hit) {
  hit = false;
  if (cache_dir.empty()) return html::parse_html(bytes);
  const fs::path file = cache_dir / (hex64(util::fnv1a64(bytes)) + ".json");
  if (auto text = read_file(file)) {
    try {
      auto g = html::graph_from_json(json::parse(*text));
      hit = true;
      return g;
    } catch (const std::exception&) {
      // Corrupt entry: fall through and rewrite it.
    }
  }
  auto g = html::parse_html(bytes);
  std::error_code ec;
  fs::create_directories(cache_dir, ec);
  const fs::path tmp = file.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary);
    out << html::to_json(g).dump();
  }
  fs::rename(tmp, file, ec);
  return g;
}

void finish_sample(Sample& s, const RunConfig& config) {
  html::tokenize_nodes(s.graph, config.buckets);
  s.groups = partition::partition(s.graph, config.voting.t_f, s.row.id);
  s.url_tokens = url::tokenize_url(s.row.url, config.url.max_len);
}

}  // namespace

std::vector<ManifestRow> read_manifest(const fs::path& path) {
  auto text = read_file(path);
  if (!text) throw InputError("cannot read manifest " + path.string());
  std::vector<ManifestRow> rows;
  std::set<std::string> ids;
  std::istringstream in(*text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError(where + ": invalid JSON (" + e.what() + ")");
    }
    ManifestRow r;
    try {
      r.id = j.at("id").get<std::string>();
      r.url = j.at("url").get<std::string>();
      r.html_path = j.at("html_path").get<std::string>();
    } catch (const json::exception&) {
      throw InputError(where + ": row needs string fields id, url, html_path");
    }
    if (!j.contains("label") || !j["label"].is_number_integer() ||
        (j["label"].get<long long>() != 0 && j["label"].get<long long>() != 1))
      throw InputError(where + " (id '" + r.id + "'): label must be 0 or 1, got " +
                       (j.contains("label") ? j["label"].dump() : std::string("nothing")));
    r.label = j["label"].get<int>();
    if (r.id.empty()) throw InputError(where + ": empty id");
    if (r.url.empty()) throw InputError(where + " (id '" + r.id + "'): empty url");
    if (!ids.insert(r.id).second) throw InputError(where + ": duplicate id '" + r.id + "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_manifest(const fs::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write manifest " + path.string());
  for (const auto& r : rows)
    out << json{{"id", r.id}, {"url", r.url}, {"html_path", r.html_path}, {"label", r.label}}.dump() << '\n';
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  for (const auto& s : samples) out.push_back(s.row.label);
  return out;
}

json Dataset::stats() const {
  json rows = json::array();
  std::size_t nodes = 0, edges = 0, cached = 0;
  for (const auto& s : samples) {
    json sizes = json::array();
    for (const auto& g : s.groups) sizes.push_back(g.size());
    rows.push_back({{"id", s.row.id},
                    {"label", s.row.label},
                    {"nodes", s.graph.size()},
                    {"edges", s.graph.edges.size()},
                    {"max_neighbors", s.graph.max_neighbors},
                    {"group_sizes", sizes},
                    {"url_length", url::content_length(s.url_tokens)},
                    {"cached", s.from_cache}});
    nodes += s.graph.size();
    edges += s.graph.edges.size();
    cached += s.from_cache ? 1 : 0;
  }
  return {{"samples", samples.size()}, {"nodes", nodes}, {"edges", edges}, {"cache_hits", cached}, {"rows", rows}};
}

Sample make_sample(const ManifestRow& row, std::string_view html, const RunConfig& config) {
  Sample s;
  s.row = row;
  s.graph = html::parse_html(html);
  finish_sample(s, config);
  return s;
}

Dataset ingest(const fs::path& manifest, const RunConfig& config, const IngestOptions& options) {
  const auto rows = read_manifest(manifest);
  const fs::path base = manifest.parent_path();
  Dataset data;
  data.samples.resize(rows.size());
  std::vector<std::string> errors(rows.size());

  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < rows.size(); i += stride) {
      Sample& s = data.samples[i];
      s.row = rows[i];
      const fs::path file = base / rows[i].html_path;
      auto bytes = read_file(file);
      if (!bytes) {
        errors[i] = rows[i].id + ": cannot read " + file.string();
        continue;
      }
      try {
        s.graph = parse_cached(*bytes, options.cache_dir, s.from_cache);
        finish_sample(s, config);
      } catch (const Error& e) {
        errors[i] = rows[i].id + ": " + e.what();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, rows.size()));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }

  std::string report;
  std::size_t failures = 0;
  for (const auto& e : errors)
    if (!e.empty()) {
      report += "\n  " + e;
      ++failures;
    }
  if (failures) throw InputError("ingest failed for " + std::to_string(failures) + " sample(s):" + report);
  return data;
}

std::vector<std::vector<std::size_t>> kfold(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2 || folds > n) throw ParameterError("kfold: need 2 <= folds <= n");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  util::Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out(folds);
  for (std::size_t i = 0; i < n; ++i) out[i % folds].push_back(order[i]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

std::pair<Dataset, Dataset> split_fold(const Dataset& data, const TrainingConfig& training, std::size_t k) {
  const auto folds = kfold(data.size(), training.folds, training.folds_seed);
  if (k >= folds.size()) throw ParameterError("split_fold: fold index out of range");
  std::vector<bool> in_test(data.size(), false);
  for (auto i : folds[k]) in_test[i] = true;
  Dataset train, test;
  for (std::size_t i = 0; i < data.size(); ++i) (in_test[i] ? test : train).samples.push_back(data.samples[i]);
  return {std::move(train), std::move(test)};
}

std::uint64_t sample_seed(std::uint64_t master, const std::string& id) {
  return util::Rng::derive(master, util::fnv1a64(id));
}

}  // namespace webguard::pipeline
