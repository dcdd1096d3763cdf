#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace webguard::testing {

struct GradientCaseResult {
  std::string op;
  int instances = 0;
  double worst_relative_error = 0.0;
};

// Finite-difference check of every differentiable nn op on `instances`
// random small problems each (step 1e-5, float64).
std::vector<GradientCaseResult> run_gradient_suite(std::uint64_t seed, int instances = 20);

}  // namespace webguard::testing
