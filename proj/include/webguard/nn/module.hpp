#pragma once

#include <map>
#include <string>
#include <vector>

#include "webguard/nn/ops.hpp"
#include "webguard/nn/tensor.hpp"
#include "webguard/util/rng.hpp"

namespace webguard::nn {

// A named tensor owned by a model. Trainable entries are Parameters in the
// optimizer's sense; buffers (BatchNorm running statistics) are persisted in
// checkpoints but never updated by gradient steps.
struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

// Registry of every persistent tensor of a model, in creation order.
// Names are hierarchical ("url.pyramid.fc1.weight") and unique.
class ParameterSet {
 public:
  Tensor add(const std::string& name, Tensor value);
  Tensor add_buffer(const std::string& name, Tensor value);

  // Uniform(-bound, bound) init, the PyTorch default for Linear/Conv.
  Tensor add_uniform(const std::string& name, Shape shape, double bound, util::Rng& rng);
  Tensor add_normal(const std::string& name, Shape shape, double stddev, util::Rng& rng);
  Tensor add_constant(const std::string& name, Shape shape, double value);

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::vector<Tensor> trainable() const;
  const NamedTensor* find(const std::string& name) const;
  Tensor get(const std::string& name) const;
  std::size_t trainable_count() const;

  void zero_grad();

 private:
  void insert(const std::string& name, Tensor value, bool trainable);

  std::vector<NamedTensor> entries_;
  std::map<std::string, std::size_t> index_;
};

// Per-forward settings: train/eval mode and the dropout generator (only
// required in train mode).
struct Context {
  Mode mode = Mode::kEval;
  util::Rng* rng = nullptr;

  bool training() const { return mode == Mode::kTrain; }
};

Tensor dropout(const Tensor& x, double rate, const Context& ctx);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out, util::Rng& rng,
         bool with_bias = true);

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  Tensor weight;  // [out x in]
  Tensor bias;    // [out], may be undefined
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& prefix, std::size_t dim);

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }

  Tensor gamma;
  Tensor beta;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParameterSet& params, const std::string& prefix, std::size_t dim);

  // Mutates running statistics in train mode.
  Tensor operator()(const Tensor& x, Mode mode) { return batch_norm(x, gamma, beta, mode, stats); }
  Tensor eval(const Tensor& x) const;

  Tensor gamma;
  Tensor beta;
  RunningStats stats;
};

}  // namespace webguard::nn
