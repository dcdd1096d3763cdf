#include "webguard/graph/encoder.hpp"

#include <algorithm>

#include "webguard/error.hpp"

namespace webguard::graph {

using nn::Tensor;

nn::SparseMatrix block_adjacency(const std::vector<partition::SubGraph>& subgraphs) {
  std::size_t total = 0;
  for (const auto& sg : subgraphs) total += std::max<std::size_t>(sg.size(), 1);
  std::vector<std::vector<std::size_t>> rows(total);
  std::size_t base = 0;
  for (const auto& sg : subgraphs) {
    const std::size_t n = std::max<std::size_t>(sg.size(), 1);
    for (std::size_t i = 0; i < n; ++i) rows[base + i].push_back(base + i);
    for (const auto& e : sg.local_edges) {
      if (e.parent == e.child) continue;
      rows[base + e.parent].push_back(base + e.child);
      rows[base + e.child].push_back(base + e.parent);
    }
    base += n;
  }
  nn::SparseMatrix a;
  a.rows = a.cols = total;
  a.row_ptr.push_back(0);
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    a.col_idx.insert(a.col_idx.end(), r.begin(), r.end());
    a.row_ptr.push_back(a.col_idx.size());
  }
  return a;
}

namespace {

std::vector<std::size_t> block_offsets(const std::vector<partition::SubGraph>& subgraphs) {
  std::vector<std::size_t> offsets{0};
  for (const auto& sg : subgraphs) offsets.push_back(offsets.back() + std::max<std::size_t>(sg.size(), 1));
  return offsets;
}

}  // namespace

SubgraphBatch build_batch(const std::vector<partition::SubGraph>& subgraphs, std::size_t feature_dim) {
  if (subgraphs.empty()) throw InputError("build_batch: no subgraphs");
  SubgraphBatch b;
  b.offsets = block_offsets(subgraphs);
  std::vector<Tensor> parts;
  for (const auto& sg : subgraphs) {
    if (sg.empty()) {
      parts.push_back(Tensor(nn::Shape{1, feature_dim}));
      continue;
    }
    if (!sg.features.defined()) throw ContractError("build_batch: subgraph has no features");
    if (sg.features.shape() != nn::Shape{sg.size(), feature_dim})
      throw DimensionError("build_batch: subgraph features " + nn::to_string(sg.features.shape()) +
                           " do not match " + std::to_string(sg.size()) + " nodes of dim " +
                           std::to_string(feature_dim));
    parts.push_back(sg.features);
  }
  b.features = parts.size() == 1 ? parts[0] : nn::concat(parts, 0);
  b.adjacency = block_adjacency(subgraphs);
  return b;
}

SubgraphBatch build_batch(const std::vector<partition::SubGraph>& subgraphs, const html::NodeEmbedder& embedder) {
  if (subgraphs.empty()) throw InputError("build_batch: no subgraphs");
  std::vector<std::vector<std::uint32_t>> bags;
  for (const auto& sg : subgraphs) {
    if (sg.empty()) {
      bags.emplace_back();
      continue;
    }
    if (sg.token_bags.size() != sg.size()) throw ContractError("build_batch: subgraph has no token bags");
    bags.insert(bags.end(), sg.token_bags.begin(), sg.token_bags.end());
  }
  SubgraphBatch b;
  b.offsets = block_offsets(subgraphs);
  b.features = embedder.embed(bags);
  b.adjacency = block_adjacency(subgraphs);
  return b;
}

void GraphEncoderConfig::validate() const {
  if (in_dim == 0 || hidden == 0 || mlp_hidden == 0) throw ConfigError("graph: dimensions must be positive");
  if (layers < 1) throw ConfigError("graph: layers must be >= 1");
}

GraphEncoder::GraphEncoder(nn::ParameterSet& params, const std::string& prefix, const GraphEncoderConfig& config,
                           util::Rng& rng)
    : config_(config) {
  config_.validate();
  std::size_t in = config_.in_dim;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    Layer layer;
    layer.fc1 = nn::Linear(params, p + ".mlp.fc1", in, config_.mlp_hidden, rng);
    layer.fc2 = nn::Linear(params, p + ".mlp.fc2", config_.mlp_hidden, config_.hidden, rng);
    for (auto* fc : {&layer.fc1, &layer.fc2}) {
      for (auto& w : fc->weight.mutable_data()) w *= kMlpInitGain;
      for (auto& b : fc->bias.mutable_data()) b *= kMlpInitGain;
    }
    layer.norm = nn::BatchNorm(params, p + ".bn", config_.hidden);
    layers.push_back(std::move(layer));
    in = config_.hidden;
  }
}

template <typename Norm>
Tensor GraphEncoder::run(const SubgraphBatch& batch, Norm&& norm) const {
  if (batch.features.rank() != 2 || batch.features.dim(1) != config_.in_dim)
    throw DimensionError("graph encode: features " + nn::to_string(batch.features.shape()) + " but in_dim is " +
                         std::to_string(config_.in_dim));
  if (batch.offsets.empty() || batch.offsets.back() != batch.features.dim(0))
    throw ContractError("graph encode: offsets do not cover the feature rows");
  Tensor h = batch.features;
  std::vector<Tensor> pooled{nn::segment_mean(h, batch.offsets)};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    Tensor agg = nn::spmm(batch.adjacency, h);
    h = nn::relu(norm(l, layer.fc2(nn::relu(layer.fc1(agg)))));
    pooled.push_back(nn::segment_mean(h, batch.offsets));
  }
  return nn::concat(pooled, 1);
}

Tensor GraphEncoder::encode(const SubgraphBatch& batch, nn::Mode mode) {
  if (mode == nn::Mode::kEval) return std::as_const(*this).encode(batch);
  return run(batch, [this](std::size_t l, const Tensor& x) { return layers[l].norm(x, nn::Mode::kTrain); });
}

Tensor GraphEncoder::encode(const SubgraphBatch& batch) const {
  return run(batch, [this](std::size_t l, const Tensor& x) { return layers[l].norm.eval(x); });
}

}  // namespace webguard::graph
