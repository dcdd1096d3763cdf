#pragma once

#include <functional>
#include <vector>

#include "webguard/nn/tensor.hpp"
#include "webguard/util/rng.hpp"

namespace webguard::testing {

// Central finite-difference check of reverse-mode gradients.
//
// `loss` maps the inputs to a scalar tensor. Every input is perturbed
// element-wise by +-step with recording disabled; the analytic gradient comes
// from one backward pass. Returns the worst per-input relative error
// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12).
double gradcheck(const std::function<nn::Tensor(const std::vector<nn::Tensor>&)>& loss,
                 std::vector<nn::Tensor> inputs, double step = 1e-5);

// sum(out * weights); with fixed random weights every output element
// contributes a distinct cotangent.
nn::Tensor weighted_sum(const nn::Tensor& out, const nn::Tensor& weights);

nn::Tensor random_tensor(nn::Shape shape, util::Rng& rng, double lo = -1.0, double hi = 1.0);

// Uniform values with |v| >= margin, keeping finite differences off kinks.
nn::Tensor random_tensor_away_from_zero(nn::Shape shape, util::Rng& rng, double margin = 1e-2);

}  // namespace webguard::testing
