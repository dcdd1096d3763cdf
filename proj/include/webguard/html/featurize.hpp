#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "webguard/html/dom.hpp"
#include "webguard/nn/module.hpp"

namespace webguard::html {

inline constexpr std::size_t kDefaultBuckets = std::size_t{1} << 14;
inline constexpr std::size_t kDefaultEmbedDim = 100;
inline constexpr std::size_t kMaxAttributeValue = 256;

// Whitespace tokens of "tag attr_keys attr_values text", keys sorted.
std::vector<std::string> node_tokens(const DomNode& node);

// Fills graph.token_bags with FNV-1a bucket ids.
void tokenize_nodes(DomGraph& graph, std::size_t buckets = kDefaultBuckets);

// Trainable hashed-token embedding table [buckets x dim].
class NodeEmbedder {
 public:
  NodeEmbedder() = default;
  NodeEmbedder(nn::ParameterSet& params, const std::string& prefix, util::Rng& rng,
               std::size_t buckets = kDefaultBuckets, std::size_t dim = kDefaultEmbedDim);

  // Mean token embedding per bag; an empty bag gives a zero row.
  nn::Tensor embed(const std::vector<std::vector<std::uint32_t>>& bags) const;

  std::size_t buckets() const { return table.dim(0); }
  std::size_t dim() const { return table.dim(1); }

  nn::Tensor table;
};

// Tokenizes if needed, then sets graph.features = embedder.embed(token_bags).
void featurize_nodes(DomGraph& graph, const NodeEmbedder& embedder);

}  // namespace webguard::html
