#include "webguard/nn/module.hpp"

#include <cmath>

#include "webguard/error.hpp"

namespace webguard::nn {

Tensor dropout(const Tensor& x, double rate, const Context& ctx) {
  if (!ctx.training() || rate == 0.0) return x;
  if (ctx.rng == nullptr) throw ContractError("dropout: train mode requires a generator");
  return dropout(x, rate, *ctx.rng, ctx.mode);
}

void ParameterSet::insert(const std::string& name, Tensor value, bool trainable) {
  if (name.empty()) throw ConfigError("ParameterSet: empty parameter name");
  if (index_.count(name)) throw ConfigError("ParameterSet: duplicate parameter name '" + name + "'");
  value.set_requires_grad(trainable);
  index_[name] = entries_.size();
  entries_.push_back({name, std::move(value), trainable});
}

Tensor ParameterSet::add(const std::string& name, Tensor value) {
  insert(name, value, true);
  return value;
}

Tensor ParameterSet::add_buffer(const std::string& name, Tensor value) {
  insert(name, value, false);
  return value;
}

Tensor ParameterSet::add_uniform(const std::string& name, Shape shape, double bound, util::Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.uniform(-bound, bound);
  return add(name, t);
}

Tensor ParameterSet::add_normal(const std::string& name, Shape shape, double stddev, util::Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) v = stddev * rng.normal();
  return add(name, t);
}

Tensor ParameterSet::add_constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor(std::move(shape), value));
}

std::vector<Tensor> ParameterSet::trainable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

std::size_t ParameterSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.tensor.numel();
  return n;
}

const NamedTensor* ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

Tensor ParameterSet::get(const std::string& name) const {
  const NamedTensor* e = find(name);
  if (!e) throw ConfigError("ParameterSet: no parameter named '" + name + "'");
  return e->tensor;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

Linear::Linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out, util::Rng& rng,
               bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = params.add_uniform(prefix + ".weight", {out, in}, bound, rng);
  if (with_bias) bias = params.add_uniform(prefix + ".bias", {out}, bound, rng);
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& prefix, std::size_t dim) {
  gamma = params.add_constant(prefix + ".gamma", {dim}, 1.0);
  beta = params.add_constant(prefix + ".beta", {dim}, 0.0);
}

BatchNorm::BatchNorm(ParameterSet& params, const std::string& prefix, std::size_t dim) {
  gamma = params.add_constant(prefix + ".gamma", {dim}, 1.0);
  beta = params.add_constant(prefix + ".beta", {dim}, 0.0);
  stats.mean = params.add_buffer(prefix + ".running_mean", Tensor({dim}, 0.0));
  stats.variance = params.add_buffer(prefix + ".running_var", Tensor({dim}, 1.0));
}

Tensor BatchNorm::eval(const Tensor& x) const {
  // Eval mode never writes to the stats; the copy shares the same buffers.
  RunningStats view = stats;
  return batch_norm(x, gamma, beta, Mode::kEval, view);
}

}  // namespace webguard::nn
