#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "webguard/nn/tensor.hpp"
#include "webguard/util/rng.hpp"

namespace webguard::nn {

enum class Mode { kTrain, kEval };

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// x[m x n] + v[n], broadcast over rows.
Tensor add_row_vector(const Tensor& x, const Tensor& v);

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a[m x k] * b[n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Fully connected: x[n x in] * weight[out x in]^T + bias[out]. `bias` may be
// undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Compressed sparse rows; values default to 1 when empty.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1 entries
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return col_idx.size(); }
  double value(std::size_t e) const { return values.empty() ? 1.0 : values[e]; }
};

Tensor spmm(const SparseMatrix& a, const Tensor& x);

// ---- normalization and probability -----------------------------------------

// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& x);

// Each row divided by sqrt(|row|^2 + eps).
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

struct RunningStats {
  Tensor mean;      // [D], starts at 0
  Tensor variance;  // [D], starts at 1
  double momentum = 0.1;
};

// Column-wise batch normalization over the rows of x[N x D]. Train mode
// normalizes with biased batch statistics and updates `stats` with the
// unbiased variance; eval mode reads `stats` only.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Mode mode,
                  RunningStats& stats, double eps = 1e-5);

// Inverted dropout; identity in eval mode or when rate == 0.
Tensor dropout(const Tensor& x, double rate, util::Rng& rng, Mode mode);

// Mean negative log-likelihood of `labels` under softmax(logits[B x C]).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// ---- convolution and pooling ----------------------------------------------

// x[C x H x W], kernel[C x 3 x 3]; zero "same" padding of `dilation`.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel, int dilation);
// x[C x H x W], weight[C' x C] -> [C' x H x W]
Tensor pointwise_conv2d(const Tensor& x, const Tensor& weight);
// Depthwise separable 3x3: depthwise dilated conv followed by 1x1 mixing.
Tensor dsconv2d(const Tensor& x, const Tensor& depthwise, const Tensor& pointwise, int dilation);

// x[S x D], kernel[D x K] with odd K, zero "same" padding along S.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel);

// x[C x H x W] -> [C x k x k]; window rows [floor(i*H/k), ceil((i+1)*H/k)).
Tensor adaptive_avg_pool2d(const Tensor& x, int k);

// x[C x H x W] * y[C], broadcast over space.
Tensor scale_channels(const Tensor& x, const Tensor& y);

// Zero-pads x[C x H x W] at the bottom/right to [C x height x width].
Tensor pad2d(const Tensor& x, std::size_t height, std::size_t width);

// ---- shape manipulation ----------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
// Concatenates rank-1 tensors (axis 0) or rank-2 tensors along axis 0 or 1.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// Rank-3 axis permutation: out.shape[i] = x.shape[perm[i]].
Tensor permute3(const Tensor& x, std::array<std::size_t, 3> perm);
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows);

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x);
// Mean of the rows of x[N x D] -> [D].
Tensor mean_rows(const Tensor& x);
// Mean of rows [offsets[b], offsets[b+1]) for each b -> [B x D]. Empty
// segments yield zero rows.
Tensor segment_mean(const Tensor& x, const std::vector<std::size_t>& offsets);

// Row i = mean of table rows listed in bags[i]; empty bag -> zero row.
Tensor embedding_bag_mean(const Tensor& table, const std::vector<std::vector<std::uint32_t>>& bags);

}  // namespace webguard::nn
