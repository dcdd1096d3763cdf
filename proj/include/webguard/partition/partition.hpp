#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "webguard/html/dom.hpp"
#include "webguard/util/rng.hpp"

namespace webguard::partition {

// Node-induced subgraph for one hash group.
struct SubGraph {
  std::size_t group_id = 0;                 // 1..t_f
  std::vector<std::size_t> node_indices;    // sorted dfs indices in the parent graph
  std::vector<html::Edge> local_edges;      // re-indexed into node_indices
  std::vector<std::vector<std::uint32_t>> token_bags;  // per local node, if the parent was tokenized
  nn::Tensor features;                      // gathered rows, if the parent was featurized
  std::string parent_doc;

  std::size_t size() const { return node_indices.size(); }
  bool empty() const { return node_indices.empty(); }
};

// Group of a node id: (FNV-1a64(node_id) mod t_f) + 1.
std::size_t group_of(const std::string& node_id, std::size_t t_f);

// Always returns t_f subgraphs; empty groups are kept.
std::vector<SubGraph> partition(const html::DomGraph& graph, std::size_t t_f, const std::string& doc_id = "");

// Uniform sample without replacement, in selection order.
std::vector<SubGraph> sample_round(const std::vector<SubGraph>& subgraphs, std::size_t iter_num, util::Rng& rng);

struct Coverage {
  double p_round = 0.0;     // a round contains at least one malicious group
  double p_all_miss = 0.0;  // every round misses: (1 - p_round)^iter_per
};

Coverage coverage_probability(std::size_t t_f, std::size_t iter_num, std::size_t iter_per,
                              std::size_t malicious_count);

// Per-group node lists (node ids and dfs indices).
nlohmann::json to_json(const std::vector<SubGraph>& subgraphs, const html::DomGraph& graph);

}  // namespace webguard::partition
