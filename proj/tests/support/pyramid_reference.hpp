#pragma once

#include <vector>

#include "webguard/url/encoder.hpp"

namespace webguard::testing {

// Plain-loop evaluation of the pyramid fusion on a UrlFeature, reading the
// same parameters as `fusion`. Returns the D-dim fused vector.
std::vector<double> pyramid_reference(const url::PyramidFusion& fusion, const url::UrlFeature& feature,
                                      const url::UrlEncoderConfig& config);

}  // namespace webguard::testing
