#include "webguard/html/featurize.hpp"

#include <algorithm>

#include "webguard/error.hpp"
#include "webguard/util/hash.hpp"

namespace webguard::html {
namespace {

void split_into(std::string_view s, std::vector<std::string>& out) {
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < s.size()) {
    while (i < s.size() && space(s[i])) ++i;
    std::size_t start = i;
    while (i < s.size() && !space(s[i])) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
}

}  // namespace

std::vector<std::string> node_tokens(const DomNode& node) {
  std::vector<std::string> tokens;
  split_into(node.tag, tokens);
  auto attrs = node.attributes;
  std::stable_sort(attrs.begin(), attrs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [key, value] : attrs) split_into(key, tokens);
  for (const auto& [key, value] : attrs)
    split_into(std::string_view(value).substr(0, kMaxAttributeValue), tokens);
  split_into(node.text, tokens);
  return tokens;
}

void tokenize_nodes(DomGraph& graph, std::size_t buckets) {
  if (buckets == 0) throw ParameterError("tokenize_nodes: buckets must be positive");
  graph.token_bags.assign(graph.size(), {});
  for (std::size_t i = 0; i < graph.size(); ++i) {
    for (const auto& tok : node_tokens(graph.nodes[i]))
      graph.token_bags[i].push_back(static_cast<std::uint32_t>(util::fnv1a64(tok) % buckets));
  }
}

NodeEmbedder::NodeEmbedder(nn::ParameterSet& params, const std::string& prefix, util::Rng& rng,
                           std::size_t buckets, std::size_t dim) {
  table = params.add_normal(prefix + ".table", {buckets, dim}, 1.0, rng);
}

nn::Tensor NodeEmbedder::embed(const std::vector<std::vector<std::uint32_t>>& bags) const {
  return nn::embedding_bag_mean(table, bags);
}

void featurize_nodes(DomGraph& graph, const NodeEmbedder& embedder) {
  if (graph.token_bags.size() != graph.size()) tokenize_nodes(graph, embedder.buckets());
  graph.features = embedder.embed(graph.token_bags);
}

}  // namespace webguard::html
