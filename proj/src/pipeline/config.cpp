#include "webguard/pipeline/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "webguard/error.hpp"
#include "webguard/util/hash.hpp"

namespace webguard::pipeline {
namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Strips a trailing comment, ignoring '#' inside double-quoted strings.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

json parse_value(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    throw ConfigError(where + ": cannot parse value '" + text + "'");
  }
}

// Overlays `patch` onto `base`, rejecting keys that `base` lacks.
void merge_known(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config: '" + path + "' must be a table");
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + where + "'");
    if (base[key].is_object()) merge_known(base[key], value, where);
    else base[key] = value;
  }
}

template <typename T>
T read(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: '") + section + "." + key + "' has the wrong type");
  }
}

}  // namespace

void RunConfig::finalize() {
  url.dropout = training.dropout;
  graph.in_dim = embed_dim;
  fusion.url_dim = url.hidden;
  fusion.html_dim = graph.output_dim();
  url.validate();
  graph.validate();
  fusion.validate();
  voting.validate();
  if (buckets == 0 || embed_dim == 0) throw ConfigError("config: html.buckets and html.embed_dim must be positive");
  if (training.batch_size == 0) throw ConfigError("config: training.batch_size must be positive");
  if (!(training.lr >= 0.0)) throw ConfigError("config: training.lr must be non-negative");
  if (!(training.weight_decay >= 0.0)) throw ConfigError("config: training.weight_decay must be non-negative");
  if (training.folds < 2) throw ConfigError("config: training.folds must be at least 2");
}

json RunConfig::to_json() const {
  return json{
      {"seed", seed},
      {"url",
       {{"max_len", url.max_len},
        {"hidden", url.hidden},
        {"layers", url.layers},
        {"heads", url.heads},
        {"conv_kernel", url.conv_kernel},
        {"dilations", url.dilations},
        {"pool_sizes", url.pool_sizes}}},
      {"html", {{"buckets", buckets}, {"embed_dim", embed_dim}}},
      {"graph", {{"hidden", graph.hidden}, {"layers", graph.layers}, {"mlp_hidden", graph.mlp_hidden}}},
      {"fusion",
       {{"dim", fusion.dim},
        {"heads", fusion.heads},
        {"depth", fusion.depth},
        {"ffn_hidden", fusion.ffn_hidden},
        {"contrastive", fusion.contrastive},
        {"temperature", fusion.temperature},
        {"contrastive_weight", fusion.contrastive_weight}}},
      {"voting",
       {{"t_f", voting.t_f}, {"iter_num", voting.iter_num}, {"iter_per", voting.iter_per},
        {"threshold", voting.threshold}}},
      {"training",
       {{"batch_size", training.batch_size},
        {"lr", training.lr},
        {"weight_decay", training.weight_decay},
        {"dropout", training.dropout},
        {"epochs", training.epochs},
        {"folds", training.folds},
        {"folds_seed", training.folds_seed}}},
  };
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(util::fnv1a64(to_json().dump())));
  return buf;
}

RunConfig config_from_json(const json& patch) {
  RunConfig defaults;
  defaults.finalize();
  json j = defaults.to_json();
  merge_known(j, patch, "");
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception&) {
    throw ConfigError("config: 'seed' must be a non-negative integer");
  }
  c.url.max_len = read<std::size_t>(j, "url", "max_len");
  c.url.hidden = read<std::size_t>(j, "url", "hidden");
  c.url.layers = read<std::size_t>(j, "url", "layers");
  c.url.heads = read<std::size_t>(j, "url", "heads");
  c.url.conv_kernel = read<std::size_t>(j, "url", "conv_kernel");
  c.url.dilations = read<std::vector<int>>(j, "url", "dilations");
  c.url.pool_sizes = read<std::vector<int>>(j, "url", "pool_sizes");
  c.buckets = read<std::size_t>(j, "html", "buckets");
  c.embed_dim = read<std::size_t>(j, "html", "embed_dim");
  c.graph.hidden = read<std::size_t>(j, "graph", "hidden");
  c.graph.layers = read<std::size_t>(j, "graph", "layers");
  c.graph.mlp_hidden = read<std::size_t>(j, "graph", "mlp_hidden");
  c.fusion.dim = read<std::size_t>(j, "fusion", "dim");
  c.fusion.heads = read<std::size_t>(j, "fusion", "heads");
  c.fusion.depth = read<std::size_t>(j, "fusion", "depth");
  c.fusion.ffn_hidden = read<std::size_t>(j, "fusion", "ffn_hidden");
  c.fusion.contrastive = read<bool>(j, "fusion", "contrastive");
  c.fusion.temperature = read<double>(j, "fusion", "temperature");
  c.fusion.contrastive_weight = read<double>(j, "fusion", "contrastive_weight");
  c.voting.t_f = read<std::size_t>(j, "voting", "t_f");
  c.voting.iter_num = read<std::size_t>(j, "voting", "iter_num");
  c.voting.iter_per = read<std::size_t>(j, "voting", "iter_per");
  c.voting.threshold = read<std::size_t>(j, "voting", "threshold");
  c.training.batch_size = read<std::size_t>(j, "training", "batch_size");
  c.training.lr = read<double>(j, "training", "lr");
  c.training.weight_decay = read<double>(j, "training", "weight_decay");
  c.training.dropout = read<double>(j, "training", "dropout");
  c.training.epochs = read<std::size_t>(j, "training", "epochs");
  c.training.folds = read<std::size_t>(j, "training", "folds");
  c.training.folds_seed = read<std::uint64_t>(j, "training", "folds_seed");
  try {
    c.finalize();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json parse_config_text(const std::string& text) {
  json out = json::object();
  json* section = &out;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = "config line " + std::to_string(line_no);
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      const std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (name.empty()) throw ConfigError(where + ": empty section name");
      if (out.contains(name)) throw ConfigError(where + ": duplicate section [" + name + "]");
      out[name] = json::object();
      section = &out[name];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (section->contains(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    (*section)[key] = parse_value(trim(std::string_view(line).substr(eq + 1)), where);
  }
  return out;
}

RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides) {
  json patch = json::object();
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects section.key=value, got '" + o + "'");
    const std::string key = o.substr(0, eq);
    const std::string value = o.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;
    }
    json::json_pointer ptr("/" + [&] {
      std::string p = key;
      for (auto& ch : p)
        if (ch == '.') ch = '/';
      return p;
    }());
    patch[ptr] = parsed;
  }
  json merged = base.to_json();
  merge_known(merged, patch, "");
  return config_from_json(merged);
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return apply_overrides(config_from_json(parse_config_text(text.str())), overrides);
}

}  // namespace webguard::pipeline
