#include <algorithm>

#include "webguard/error.hpp"
#include "webguard/html/dom.hpp"
#include "webguard/util/rng.hpp"

namespace webguard::html {

void DomGraph::rebuild_adjacency() {
  neighbor_lists.assign(nodes.size(), {});
  for (const Edge& e : edges) {
    if (e.parent >= nodes.size() || e.child >= nodes.size())
      throw ContractError("DomGraph: edge endpoint out of range");
    neighbor_lists[e.parent].push_back(e.child);
    neighbor_lists[e.child].push_back(e.parent);
  }
  max_neighbors = 0;
  for (auto& adj : neighbor_lists) {
    std::sort(adj.begin(), adj.end());
    max_neighbors = std::max(max_neighbors, adj.size());
  }
}

DomGraph perturb_edges(const DomGraph& graph, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("perturb_edges: p must lie in [0, 1]");
  DomGraph out = graph;
  util::Rng rng(seed);
  out.edges.clear();
  for (const Edge& e : graph.edges)
    if (!(rng.uniform() < p)) out.edges.push_back(e);
  out.rebuild_adjacency();
  return out;
}

nlohmann::json to_json(const DomGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const DomNode& n : graph.nodes) {
    nlohmann::json attrs = nlohmann::json::array();
    for (const auto& [k, v] : n.attributes) attrs.push_back({k, v});
    nodes.push_back({{"id", n.node_id}, {"dfs_index", n.dfs_index}, {"tag", n.tag},
                     {"attributes", attrs}, {"text", n.text}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : graph.edges) edges.push_back({e.parent, e.child});
  return {{"nodes", nodes}, {"edges", edges}, {"max_neighbors", graph.max_neighbors}};
}

DomGraph graph_from_json(const nlohmann::json& dump) {
  DomGraph g;
  try {
    for (const auto& n : dump.at("nodes")) {
      DomNode node;
      node.node_id = n.at("id").get<std::string>();
      node.dfs_index = n.at("dfs_index").get<std::size_t>();
      node.tag = n.at("tag").get<std::string>();
      node.text = n.at("text").get<std::string>();
      for (const auto& kv : n.at("attributes"))
        node.attributes.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
      if (node.dfs_index != g.nodes.size()) throw InputError("graph dump: dfs_index out of order");
      g.nodes.push_back(std::move(node));
    }
    for (const auto& e : dump.at("edges")) g.edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("graph dump: ") + ex.what());
  }
  g.rebuild_adjacency();
  return g;
}

}  // namespace webguard::html
