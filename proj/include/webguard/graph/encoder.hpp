#pragma once

#include <vector>

#include "webguard/html/featurize.hpp"
#include "webguard/nn/module.hpp"
#include "webguard/partition/partition.hpp"

namespace webguard::graph {

// Several subgraphs stacked into one block-diagonal problem.
struct SubgraphBatch {
  nn::Tensor features;               // [sum n_b x F]
  nn::SparseMatrix adjacency;        // block diagonal, symmetric, self-loops
  std::vector<std::size_t> offsets;  // B + 1 row offsets

  std::size_t blocks() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

// Uses each subgraph's precomputed features. An empty subgraph becomes one
// zero-feature node with only its self-loop.
SubgraphBatch build_batch(const std::vector<partition::SubGraph>& subgraphs, std::size_t feature_dim);

// Computes features from token bags with `embedder`, so gradients reach the
// embedding table.
SubgraphBatch build_batch(const std::vector<partition::SubGraph>& subgraphs, const html::NodeEmbedder& embedder);

// Adjacency only: local edges in both directions plus I, offset per block.
nn::SparseMatrix block_adjacency(const std::vector<partition::SubGraph>& subgraphs);

// The MLP ahead of each BatchNorm starts at this fraction of the PyTorch
// default init. BatchNorm makes those weights scale-invariant, so under Adam
// their effective step is about lr / |W|.
inline constexpr double kMlpInitGain = 0.1;

struct GraphEncoderConfig {
  std::size_t in_dim = 100;
  std::size_t hidden = 64;      // D_g
  std::size_t layers = 2;       // l
  std::size_t mlp_hidden = 64;

  // Pooled H0..Hl concatenated: in_dim + layers * hidden.
  std::size_t output_dim() const { return in_dim + layers * hidden; }
  void validate() const;
};

class GraphEncoder {
 public:
  GraphEncoder() = default;
  GraphEncoder(nn::ParameterSet& params, const std::string& prefix, const GraphEncoderConfig& config, util::Rng& rng);

  // [B x output_dim]. Train mode updates BatchNorm running statistics.
  nn::Tensor encode(const SubgraphBatch& batch, nn::Mode mode);
  // Eval mode; reads parameters only.
  nn::Tensor encode(const SubgraphBatch& batch) const;

  const GraphEncoderConfig& config() const { return config_; }

  struct Layer {
    nn::Linear fc1, fc2;
    nn::BatchNorm norm;
  };
  std::vector<Layer> layers;

 private:
  template <typename Norm>
  nn::Tensor run(const SubgraphBatch& batch, Norm&& norm) const;

  GraphEncoderConfig config_;
};

}  // namespace webguard::graph
