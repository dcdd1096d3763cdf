#pragma once

#include <vector>

#include "webguard/nn/tensor.hpp"

namespace webguard::nn {

struct AdamOptions {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // L2 penalty folded into the gradient (torch.optim.Adam semantics).
  double weight_decay = 5e-4;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  // Consumes the accumulated grads; parameters without a grad are skipped.
  void step();
  void zero_grad();

  std::size_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamOptions options_;
  std::size_t step_ = 0;
};

}  // namespace webguard::nn
