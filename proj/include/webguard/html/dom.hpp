#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "webguard/nn/tensor.hpp"

namespace webguard::html {

// One HTML element. Text children are folded into `text`.
struct DomNode {
  std::string node_id;  // child-position path from the root, e.g. "0/1/3"
  std::string tag;      // lowercase element name; "#document" for a synthetic root
  std::vector<std::pair<std::string, std::string>> attributes;  // document order
  std::string text;     // direct text content, whitespace-collapsed
  std::size_t dfs_index = 0;
};

struct Edge {
  std::size_t parent = 0;
  std::size_t child = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

// A parsed document as a directed parent->child graph in DFS preorder.
struct DomGraph {
  std::vector<DomNode> nodes;
  std::vector<Edge> edges;
  // Per node: sorted union of children and parent (edges in both directions).
  std::vector<std::vector<std::size_t>> neighbor_lists;
  std::size_t max_neighbors = 0;
  // Hashed token ids per node; filled by tokenize_nodes / featurize_nodes.
  std::vector<std::vector<std::uint32_t>> token_bags;
  // [N x embed_dim]; undefined until featurize_nodes.
  nn::Tensor features;

  std::size_t size() const { return nodes.size(); }
  // Rebuilds neighbor_lists and max_neighbors from `edges`.
  void rebuild_adjacency();
};

// Lenient HTML parser. Never fails on malformed markup; throws InputError only
// on empty input. Comments, doctype and processing instructions are dropped;
// script/style bodies are kept as node text. Invalid UTF-8 is replaced with
// U+FFFD.
DomGraph parse_html(std::span<const std::uint8_t> document);
DomGraph parse_html(std::string_view document);

// Deletes each edge independently with probability p. Nodes, features and
// token bags are untouched; adjacency is rebuilt.
DomGraph perturb_edges(const DomGraph& graph, double p, std::uint64_t seed);

// Debug dump: nodes (id, dfs_index, tag, attributes, text) and edges.
nlohmann::json to_json(const DomGraph& graph);
DomGraph graph_from_json(const nlohmann::json& dump);

}  // namespace webguard::html
