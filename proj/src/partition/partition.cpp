#include "webguard/partition/partition.hpp"

#include <cmath>

#include "webguard/error.hpp"
#include "webguard/nn/ops.hpp"
#include "webguard/util/hash.hpp"

namespace webguard::partition {
namespace {

double choose(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace

std::size_t group_of(const std::string& node_id, std::size_t t_f) {
  if (t_f < 1) throw ParameterError("partition: t_f must be >= 1");
  return static_cast<std::size_t>(util::fnv1a64(node_id) % t_f) + 1;
}

std::vector<SubGraph> partition(const html::DomGraph& graph, std::size_t t_f, const std::string& doc_id) {
  if (t_f < 1) throw ParameterError("partition: t_f must be >= 1, got " + std::to_string(t_f));
  std::vector<SubGraph> out(t_f);
  std::vector<std::size_t> group(graph.size());
  std::vector<std::size_t> local(graph.size());
  for (std::size_t t = 0; t < t_f; ++t) {
    out[t].group_id = t + 1;
    out[t].parent_doc = doc_id;
  }
  for (std::size_t v = 0; v < graph.size(); ++v) {
    group[v] = group_of(graph.nodes[v].node_id, t_f) - 1;
    local[v] = out[group[v]].node_indices.size();
    out[group[v]].node_indices.push_back(v);
  }
  for (const auto& e : graph.edges) {
    if (group[e.parent] == group[e.child]) out[group[e.parent]].local_edges.push_back({local[e.parent], local[e.child]});
  }
  const bool tokenized = graph.token_bags.size() == graph.size();
  for (auto& sg : out) {
    if (tokenized) {
      for (std::size_t v : sg.node_indices) sg.token_bags.push_back(graph.token_bags[v]);
    }
    if (graph.features.defined() && !sg.empty()) sg.features = nn::gather_rows(graph.features, sg.node_indices);
  }
  return out;
}

std::vector<SubGraph> sample_round(const std::vector<SubGraph>& subgraphs, std::size_t iter_num, util::Rng& rng) {
  if (iter_num > subgraphs.size())
    throw ParameterError("sample_round: iter_num " + std::to_string(iter_num) + " exceeds " +
                         std::to_string(subgraphs.size()) + " subgraphs");
  std::vector<SubGraph> out;
  out.reserve(iter_num);
  for (std::size_t i : rng.sample_indices(subgraphs.size(), iter_num)) out.push_back(subgraphs[i]);
  return out;
}

Coverage coverage_probability(std::size_t t_f, std::size_t iter_num, std::size_t iter_per,
                              std::size_t malicious_count) {
  if (t_f < 1 || iter_num > t_f || malicious_count > t_f)
    throw ParameterError("coverage_probability: need t_f >= 1, iter_num <= t_f, malicious_count <= t_f");
  Coverage c;
  c.p_round = 1.0 - choose(t_f - malicious_count, iter_num) / choose(t_f, iter_num);
  c.p_all_miss = std::pow(1.0 - c.p_round, static_cast<double>(iter_per));
  return c;
}

nlohmann::json to_json(const std::vector<SubGraph>& subgraphs, const html::DomGraph& graph) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& sg : subgraphs) {
    nlohmann::json ids = nlohmann::json::array();
    for (std::size_t v : sg.node_indices) ids.push_back(graph.nodes[v].node_id);
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : sg.local_edges) edges.push_back({e.parent, e.child});
    groups.push_back({{"group_id", sg.group_id}, {"node_indices", sg.node_indices}, {"node_ids", ids},
                      {"local_edges", edges}});
  }
  return {{"num_groups", subgraphs.size()}, {"groups", groups}};
}

}  // namespace webguard::partition
