#include "webguard/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "webguard/error.hpp"

namespace webguard::nn {

using detail::make_result;

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, [an = a.node(), bn = b.node()](Node& self) {
    for (Node* p : {an.get(), bn.get()}) {
      if (!p->requires_grad) continue;
      auto g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, [an = a.node(), bn = b.node()](Node& self) {
    if (an->requires_grad) {
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, [an = a.node(), bn = b.node()](Node& self) {
    if (an->requires_grad) {
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [an = a.node(), factor](Node& self) {
    auto g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(x.shape(), std::move(out), {x}, [xn = x.node()](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xn->data[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xd[i];
    // Split by sign so exp never overflows.
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_result(x.shape(), std::move(out), {x}, [xn = x.node()](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = self.data[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor add_row_vector(const Tensor& x, const Tensor& v) {
  require_rank(x, 2, "add_row_vector");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (v.numel() != n) {
    throw DimensionError("add_row_vector: " + to_string(x.shape()) + " vs " + to_string(v.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto vd = v.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += vd[j];
  return make_result(x.shape(), std::move(out), {x, v}, [xn = x.node(), vn = v.node(), m, n](Node& self) {
    if (xn->requires_grad) {
      auto g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (vn->requires_grad) {
      auto g = vn->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [an = a.node(), bn = b.node(), m, k, n](Node& self) {
    if (an->requires_grad) gemm_nt(self.grad.data(), bn->data.data(), an->grad_buffer().data(), m, n, k);
    if (bn->requires_grad) gemm_tn(an->data.data(), self.grad.data(), bn->grad_buffer().data(), k, m, n);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree for " + to_string(a.shape()) + " x " +
                         to_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [an = a.node(), bn = b.node(), m, k, n](Node& self) {
    // dA = G * B ; dB = G^T * A
    if (an->requires_grad) gemm_nn(self.grad.data(), bn->data.data(), an->grad_buffer().data(), m, n, k);
    if (bn->requires_grad) gemm_tn(self.grad.data(), an->data.data(), bn->grad_buffer().data(), n, m, k);
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto ad = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = ad[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [an = a.node(), m, n](Node& self) {
    auto g = an->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  if (bias.defined() && bias.numel() != out_dim) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  std::vector<double> out(rows * out_dim, 0.0);
  if (bias.defined()) {
    auto bd = bias.data();
    for (std::size_t i = 0; i < rows; ++i) std::copy(bd.begin(), bd.end(), out.begin() + i * out_dim);
  }
  gemm_nt(x.data().data(), weight.data().data(), out.data(), rows, in, out_dim);
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result({rows, out_dim}, std::move(out), inputs,
                     [xn = x.node(), wn = weight.node(), bn = bias.node(), rows, in, out_dim](Node& self) {
                       if (xn->requires_grad)
                         gemm_nn(self.grad.data(), wn->data.data(), xn->grad_buffer().data(), rows, out_dim, in);
                       if (wn->requires_grad)
                         gemm_tn(self.grad.data(), xn->data.data(), wn->grad_buffer().data(), out_dim, rows, in);
                       if (bn && bn->requires_grad) {
                         auto g = bn->grad_buffer();
                         for (std::size_t i = 0; i < rows; ++i)
                           for (std::size_t j = 0; j < out_dim; ++j) g[j] += self.grad[i * out_dim + j];
                       }
                     });
}

Tensor spmm(const SparseMatrix& a, const Tensor& x) {
  require_rank(x, 2, "spmm");
  if (a.cols != x.dim(0) || a.row_ptr.size() != a.rows + 1) {
    throw DimensionError("spmm: sparse [" + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         "] times " + to_string(x.shape()));
  }
  const std::size_t d = x.dim(1);
  std::vector<double> out(a.rows * d, 0.0);
  auto xd = x.data();
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t e = a.row_ptr[r]; e < a.row_ptr[r + 1]; ++e) {
      const double w = a.value(e);
      const double* src = xd.data() + a.col_idx[e] * d;
      double* dst = out.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += w * src[j];
    }
  }
  return make_result({a.rows, d}, std::move(out), {x}, [a, xn = x.node(), d](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t r = 0; r < a.rows; ++r) {
      for (std::size_t e = a.row_ptr[r]; e < a.row_ptr[r + 1]; ++e) {
        const double w = a.value(e);
        double* dst = g.data() + a.col_idx[e] * d;
        const double* src = self.grad.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += w * src[j];
      }
    }
  });
}

// ---- normalization and probability -----------------------------------------

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  auto xd = x.data();
  std::vector<double> out(rows * d), norm(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += xd[i * d + j] * xd[i * d + j];
    norm[i] = std::sqrt(ss + eps);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xd[i * d + j] / norm[i];
  }
  std::vector<double> y = out;
  return make_result({rows, d}, std::move(out), {x}, [xn = x.node(), y = std::move(y), norm = std::move(norm), rows, d](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += y[i * d + j] * self.grad[i * d + j];
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += (self.grad[i * d + j] - y[i * d + j] * dot) / norm[i];
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  auto xd = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xd.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return make_result({m, n}, std::move(out), {x}, [xn = x.node(), m, n](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const double* s = self.data.data() + i * n;
      const double* gy = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += s[j] * gy[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += s[j] * (gy[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm: affine params do not match " + to_string(x.shape()));
  }
  std::vector<double> out(m * n), xhat(m * n), inv_std(m);
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xd.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = gd[j] * xhat[i * n + j] + bd[j];
    }
  }
  return make_result({m, n}, std::move(out), {x, gamma, beta},
                     [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat),
                      inv_std = std::move(inv_std), m, n](Node& self) {
                       if (gn->requires_grad) {
                         auto g = gn->grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j] * xhat[i * n + j];
                       }
                       if (bn->requires_grad) {
                         auto g = bn->grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                       }
                       if (xn->requires_grad) {
                         auto g = xn->grad_buffer();
                         const double inv_n = 1.0 / static_cast<double>(n);
                         for (std::size_t i = 0; i < m; ++i) {
                           double sum_d = 0.0, sum_dx = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                             const double d = self.grad[i * n + j] * gn->data[j];
                             sum_d += d;
                             sum_dx += d * xhat[i * n + j];
                           }
                           for (std::size_t j = 0; j < n; ++j) {
                             const double d = self.grad[i * n + j] * gn->data[j];
                             g[i * n + j] += inv_std[i] * (d - inv_n * sum_d - xhat[i * n + j] * inv_n * sum_dx);
                           }
                         }
                       }
                     });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Mode mode, RunningStats& stats,
                  double eps) {
  require_rank(x, 2, "batch_norm");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (rows == 0) throw DimensionError("batch_norm: empty batch");
  if (gamma.numel() != d || beta.numel() != d || stats.mean.numel() != d || stats.variance.numel() != d) {
    throw DimensionError("batch_norm: parameters do not match " + to_string(x.shape()));
  }
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<double> out(rows * d);

  if (mode == Mode::kEval) {
    std::vector<double> inv_std(d);
    auto rm = stats.mean.data();
    auto rv = stats.variance.data();
    for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(rv[j] + eps);
    std::vector<double> xhat(rows * d);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        xhat[i * d + j] = (xd[i * d + j] - rm[j]) * inv_std[j];
        out[i * d + j] = gd[j] * xhat[i * d + j] + bd[j];
      }
    return make_result({rows, d}, std::move(out), {x, gamma, beta},
                       [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat),
                        inv_std = std::move(inv_std), rows, d](Node& self) {
                         for (std::size_t i = 0; i < rows; ++i)
                           for (std::size_t j = 0; j < d; ++j) {
                             const double gy = self.grad[i * d + j];
                             if (xn->requires_grad) xn->grad_buffer()[i * d + j] += gy * gn->data[j] * inv_std[j];
                             if (gn->requires_grad) gn->grad_buffer()[j] += gy * xhat[i * d + j];
                             if (bn->requires_grad) bn->grad_buffer()[j] += gy;
                           }
                       });
  }

  std::vector<double> mean(d, 0.0), var(d, 0.0), inv_std(d), xhat(rows * d);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += xd[i * d + j];
  for (double& v : mean) v /= static_cast<double>(rows);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xd[i * d + j] - mean[j];
      var[j] += c * c;
    }
  for (double& v : var) v /= static_cast<double>(rows);
  for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xd[i * d + j] - mean[j]) * inv_std[j];
      out[i * d + j] = gd[j] * xhat[i * d + j] + bd[j];
    }

  {
    auto rm = stats.mean.mutable_data();
    auto rv = stats.variance.mutable_data();
    const double unbias = rows > 1 ? static_cast<double>(rows) / static_cast<double>(rows - 1) : 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      rm[j] = (1.0 - stats.momentum) * rm[j] + stats.momentum * mean[j];
      rv[j] = (1.0 - stats.momentum) * rv[j] + stats.momentum * var[j] * unbias;
    }
  }

  return make_result({rows, d}, std::move(out), {x, gamma, beta},
                     [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat),
                      inv_std = std::move(inv_std), rows, d](Node& self) {
                       std::vector<double> sum_d(d, 0.0), sum_dx(d, 0.0);
                       for (std::size_t i = 0; i < rows; ++i)
                         for (std::size_t j = 0; j < d; ++j) {
                           const double gy = self.grad[i * d + j];
                           sum_d[j] += gy;
                           sum_dx[j] += gy * xhat[i * d + j];
                         }
                       if (gn->requires_grad) {
                         auto g = gn->grad_buffer();
                         for (std::size_t j = 0; j < d; ++j) g[j] += sum_dx[j];
                       }
                       if (bn->requires_grad) {
                         auto g = bn->grad_buffer();
                         for (std::size_t j = 0; j < d; ++j) g[j] += sum_d[j];
                       }
                       if (xn->requires_grad) {
                         auto g = xn->grad_buffer();
                         const double inv_n = 1.0 / static_cast<double>(rows);
                         for (std::size_t i = 0; i < rows; ++i)
                           for (std::size_t j = 0; j < d; ++j) {
                             const double gy = self.grad[i * d + j];
                             g[i * d + j] += gn->data[j] * inv_std[j] *
                                             (gy - inv_n * sum_d[j] - xhat[i * d + j] * inv_n * sum_dx[j]);
                           }
                       }
                     });
}

Tensor dropout(const Tensor& x, double rate, util::Rng& rng, Mode mode) {
  if (rate < 0.0 || rate >= 1.0) throw ParameterError("dropout: rate must lie in [0, 1)");
  if (mode == Mode::kEval || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = rng.uniform() >= rate ? keep_scale : 0.0;
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x}, [xn = x.node(), mask = std::move(mask)](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) throw DimensionError("cross_entropy: label count does not match batch");
  auto ld = logits.data();
  std::vector<double> probs(b * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ParameterError("cross_entropy: label out of range");
    }
    const double* row = ld.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - mx);
    const double log_z = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - log_z);
    loss -= row[labels[i]] - log_z;
  }
  loss /= static_cast<double>(b);
  return make_result({1}, {loss}, {logits}, [ln = logits.node(), probs = std::move(probs), labels, b, c](Node& self) {
    auto g = ln->grad_buffer();
    const double gy = self.grad[0] / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double target = static_cast<int>(j) == labels[i] ? 1.0 : 0.0;
        g[i * c + j] += gy * (probs[i * c + j] - target);
      }
  });
}

// ---- convolution and pooling ----------------------------------------------

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel, int dilation) {
  if (dilation < 1) throw ParameterError("depthwise_conv2d: dilation must be >= 1, got " + std::to_string(dilation));
  require_rank(x, 3, "depthwise_conv2d");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (kernel.shape() != Shape{c, 3, 3}) {
    throw DimensionError("depthwise_conv2d: kernel " + to_string(kernel.shape()) + " for input " +
                         to_string(x.shape()));
  }
  const long hh = static_cast<long>(h), ww = static_cast<long>(w), dl = dilation;
  std::vector<double> out(c * h * w, 0.0);
  auto xd = x.data();
  auto kd = kernel.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* xin = xd.data() + ch * h * w;
    double* dst = out.data() + ch * h * w;
    for (long a = -1; a <= 1; ++a)
      for (long bb = -1; bb <= 1; ++bb) {
        const double kv = kd[ch * 9 + static_cast<std::size_t>((a + 1) * 3 + (bb + 1))];
        if (kv == 0.0) continue;
        for (long i = 0; i < hh; ++i) {
          const long si = i + a * dl;
          if (si < 0 || si >= hh) continue;
          for (long j = 0; j < ww; ++j) {
            const long sj = j + bb * dl;
            if (sj < 0 || sj >= ww) continue;
            dst[i * ww + j] += kv * xin[si * ww + sj];
          }
        }
      }
  }
  return make_result({c, h, w}, std::move(out), {x, kernel},
                     [xn = x.node(), kn = kernel.node(), c, hh, ww, dl](Node& self) {
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         const double* gy = self.grad.data() + ch * hh * ww;
                         const double* xin = xn->data.data() + ch * hh * ww;
                         for (long a = -1; a <= 1; ++a)
                           for (long bb = -1; bb <= 1; ++bb) {
                             const std::size_t kidx = ch * 9 + static_cast<std::size_t>((a + 1) * 3 + (bb + 1));
                             const double kv = kn->data[kidx];
                             double kacc = 0.0;
                             double* gx = xn->requires_grad ? xn->grad_buffer().data() + ch * hh * ww : nullptr;
                             for (long i = 0; i < hh; ++i) {
                               const long si = i + a * dl;
                               if (si < 0 || si >= hh) continue;
                               for (long j = 0; j < ww; ++j) {
                                 const long sj = j + bb * dl;
                                 if (sj < 0 || sj >= ww) continue;
                                 const double g = gy[i * ww + j];
                                 kacc += g * xin[si * ww + sj];
                                 if (gx) gx[si * ww + sj] += g * kv;
                               }
                             }
                             if (kn->requires_grad) kn->grad_buffer()[kidx] += kacc;
                           }
                       }
                     });
}

Tensor pointwise_conv2d(const Tensor& x, const Tensor& weight) {
  require_rank(x, 3, "pointwise_conv2d");
  require_rank(weight, 2, "pointwise_conv2d");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2), c_out = weight.dim(0);
  if (weight.dim(1) != c) {
    throw DimensionError("pointwise_conv2d: weight " + to_string(weight.shape()) + " for input " +
                         to_string(x.shape()));
  }
  // out[C' x HW] = W[C' x C] * X[C x HW]
  std::vector<double> out(c_out * hw, 0.0);
  gemm_nn(weight.data().data(), x.data().data(), out.data(), c_out, c, hw);
  return make_result({c_out, x.dim(1), x.dim(2)}, std::move(out), {x, weight},
                     [xn = x.node(), wn = weight.node(), c, hw, c_out](Node& self) {
                       if (xn->requires_grad)
                         gemm_tn(wn->data.data(), self.grad.data(), xn->grad_buffer().data(), c, c_out, hw);
                       if (wn->requires_grad)
                         gemm_nt(self.grad.data(), xn->data.data(), wn->grad_buffer().data(), c_out, hw, c);
                     });
}

Tensor dsconv2d(const Tensor& x, const Tensor& depthwise, const Tensor& pointwise, int dilation) {
  return pointwise_conv2d(depthwise_conv2d(x, depthwise, dilation), pointwise);
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel) {
  require_rank(x, 2, "depthwise_conv1d");
  require_rank(kernel, 2, "depthwise_conv1d");
  const std::size_t s = x.dim(0), d = x.dim(1), k = kernel.dim(1);
  if (kernel.dim(0) != d || k % 2 == 0) {
    throw DimensionError("depthwise_conv1d: kernel " + to_string(kernel.shape()) + " for input " +
                         to_string(x.shape()));
  }
  const long half = static_cast<long>(k / 2), ss = static_cast<long>(s);
  std::vector<double> out(s * d, 0.0);
  auto xd = x.data();
  auto kd = kernel.data();
  for (long i = 0; i < ss; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const long si = i + static_cast<long>(t) - half;
      if (si < 0 || si >= ss) continue;
      const double* src = xd.data() + si * static_cast<long>(d);
      double* dst = out.data() + i * static_cast<long>(d);
      for (std::size_t ch = 0; ch < d; ++ch) dst[ch] += kd[ch * k + t] * src[ch];
    }
  return make_result({s, d}, std::move(out), {x, kernel}, [xn = x.node(), kn = kernel.node(), ss, d, k, half](Node& self) {
    for (long i = 0; i < ss; ++i)
      for (std::size_t t = 0; t < k; ++t) {
        const long si = i + static_cast<long>(t) - half;
        if (si < 0 || si >= ss) continue;
        const double* gy = self.grad.data() + i * static_cast<long>(d);
        if (xn->requires_grad) {
          double* gx = xn->grad_buffer().data() + si * static_cast<long>(d);
          for (std::size_t ch = 0; ch < d; ++ch) gx[ch] += kn->data[ch * k + t] * gy[ch];
        }
        if (kn->requires_grad) {
          auto gk = kn->grad_buffer();
          const double* src = xn->data.data() + si * static_cast<long>(d);
          for (std::size_t ch = 0; ch < d; ++ch) gk[ch * k + t] += gy[ch] * src[ch];
        }
      }
  });
}

Tensor adaptive_avg_pool2d(const Tensor& x, int k) {
  require_rank(x, 3, "adaptive_avg_pool2d");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (k < 1 || static_cast<std::size_t>(k) > h || static_cast<std::size_t>(k) > w) {
    throw ParameterError("adaptive_avg_pool2d: output size " + std::to_string(k) + " invalid for input " +
                         to_string(x.shape()));
  }
  const std::size_t kk = static_cast<std::size_t>(k);
  auto lo = [](std::size_t i, std::size_t n, std::size_t k) { return (i * n) / k; };
  auto hi = [](std::size_t i, std::size_t n, std::size_t k) { return ((i + 1) * n + k - 1) / k; };
  std::vector<double> out(c * kk * kk, 0.0);
  auto xd = x.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < kk; ++i)
      for (std::size_t j = 0; j < kk; ++j) {
        const std::size_t r0 = lo(i, h, kk), r1 = hi(i, h, kk), c0 = lo(j, w, kk), c1 = hi(j, w, kk);
        double acc = 0.0;
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t q = c0; q < c1; ++q) acc += xd[(ch * h + r) * w + q];
        out[(ch * kk + i) * kk + j] = acc / static_cast<double>((r1 - r0) * (c1 - c0));
      }
  return make_result({c, kk, kk}, std::move(out), {x}, [xn = x.node(), c, h, w, kk, lo, hi](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < kk; ++i)
        for (std::size_t j = 0; j < kk; ++j) {
          const std::size_t r0 = lo(i, h, kk), r1 = hi(i, h, kk), c0 = lo(j, w, kk), c1 = hi(j, w, kk);
          const double share = self.grad[(ch * kk + i) * kk + j] / static_cast<double>((r1 - r0) * (c1 - c0));
          for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t q = c0; q < c1; ++q) g[(ch * h + r) * w + q] += share;
        }
  });
}

Tensor scale_channels(const Tensor& x, const Tensor& y) {
  require_rank(x, 3, "scale_channels");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  if (y.numel() != c) {
    throw DimensionError("scale_channels: " + to_string(y.shape()) + " weights for " + to_string(x.shape()));
  }
  std::vector<double> out(c * hw);
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < hw; ++p) out[ch * hw + p] = xd[ch * hw + p] * yd[ch];
  return make_result(x.shape(), std::move(out), {x, y}, [xn = x.node(), yn = y.node(), c, hw](Node& self) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t p = 0; p < hw; ++p) {
        const double g = self.grad[ch * hw + p];
        if (xn->requires_grad) xn->grad_buffer()[ch * hw + p] += g * yn->data[ch];
        acc += g * xn->data[ch * hw + p];
      }
      if (yn->requires_grad) yn->grad_buffer()[ch] += acc;
    }
  });
}

Tensor pad2d(const Tensor& x, std::size_t height, std::size_t width) {
  require_rank(x, 3, "pad2d");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (height < h || width < w) throw DimensionError("pad2d: target smaller than input " + to_string(x.shape()));
  if (height == h && width == w) return x;
  std::vector<double> out(c * height * width, 0.0);
  auto xd = x.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h; ++i)
      std::copy_n(xd.data() + (ch * h + i) * w, w, out.data() + (ch * height + i) * width);
  return make_result({c, height, width}, std::move(out), {x}, [xn = x.node(), c, h, w, height, width](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) g[(ch * h + i) * w + j] += self.grad[(ch * height + i) * width + j];
  });
}

// ---- shape manipulation ----------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (nn::numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [xn = x.node()](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t rank = parts.front().rank();
  if (rank == 1) {
    if (axis != 0) throw DimensionError("concat: rank-1 inputs only concatenate along axis 0");
    std::vector<double> out;
    std::vector<std::size_t> offsets;
    for (const Tensor& p : parts) {
      require_rank(p, 1, "concat");
      offsets.push_back(out.size());
      out.insert(out.end(), p.data().begin(), p.data().end());
    }
    const std::size_t total = out.size();
    std::vector<NodePtr> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    return make_result({total}, std::move(out), parts, [nodes, offsets](Node& self) {
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (!nodes[k]->requires_grad) continue;
        auto g = nodes[k]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] + i];
      }
    });
  }
  if (rank != 2 || axis > 1) throw DimensionError("concat: supports rank-1 or rank-2 inputs");
  for (const Tensor& p : parts) {
    require_rank(p, 2, "concat");
    if (p.dim(1 - axis) != parts.front().dim(1 - axis)) {
      throw DimensionError("concat: mismatched " + to_string(p.shape()) + " vs " + to_string(parts.front().shape()));
    }
  }
  std::vector<NodePtr> nodes;
  for (const Tensor& p : parts) nodes.push_back(p.node());
  if (axis == 0) {
    const std::size_t cols = parts.front().dim(1);
    std::vector<double> out;
    std::vector<std::size_t> offsets;
    for (const Tensor& p : parts) {
      offsets.push_back(out.size());
      out.insert(out.end(), p.data().begin(), p.data().end());
    }
    const std::size_t rows = out.size() / std::max<std::size_t>(cols, 1);
    return make_result({rows, cols}, std::move(out), parts, [nodes, offsets](Node& self) {
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (!nodes[k]->requires_grad) continue;
        auto g = nodes[k]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] + i];
      }
    });
  }
  const std::size_t rows = parts.front().dim(0);
  std::vector<std::size_t> widths, col_off;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    col_off.push_back(total);
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pd = parts[k].data();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(pd.data() + i * widths[k], widths[k], out.data() + i * total + col_off[k]);
  }
  return make_result({rows, total}, std::move(out), parts, [nodes, widths, col_off, rows, total](Node& self) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (!nodes[k]->requires_grad) continue;
      auto g = nodes[k]->grad_buffer();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += self.grad[i * total + col_off[k] + j];
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " of " + to_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = end - begin, full = s[axis];
  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<double> out(outer * len * inner);
  auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xd.data() + (o * full + begin) * inner, len * inner, out.data() + o * len * inner);
  return make_result(std::move(out_shape), std::move(out), {x}, [xn = x.node(), outer, inner, len, full, begin](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < len * inner; ++i) g[(o * full + begin) * inner + i] += self.grad[o * len * inner + i];
  });
}

Tensor permute3(const Tensor& x, std::array<std::size_t, 3> perm) {
  require_rank(x, 3, "permute3");
  const Shape& s = x.shape();
  std::array<bool, 3> seen{};
  for (std::size_t p : perm) {
    if (p > 2 || seen[p]) throw DimensionError("permute3: invalid permutation");
    seen[p] = true;
  }
  const std::array<std::size_t, 3> in_stride{s[1] * s[2], s[2], 1};
  const Shape out_shape{s[perm[0]], s[perm[1]], s[perm[2]]};
  // Source offset for each output index.
  std::vector<std::size_t> src(x.numel());
  std::size_t k = 0;
  for (std::size_t a = 0; a < out_shape[0]; ++a)
    for (std::size_t b = 0; b < out_shape[1]; ++b)
      for (std::size_t c = 0; c < out_shape[2]; ++c)
        src[k++] = a * in_stride[perm[0]] + b * in_stride[perm[1]] + c * in_stride[perm[2]];
  std::vector<double> out(src.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = xd[src[i]];
  return make_result(out_shape, std::move(out), {x}, [xn = x.node(), src = std::move(src)](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
  });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  require_rank(x, 2, "gather_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(rows.size() * d);
  auto xd = x.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(xd.data() + rows[i] * d, d, out.data() + i * d);
  }
  return make_result({rows.size(), d}, std::move(out), {x}, [xn = x.node(), rows, d](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[rows[i] * d + j] += self.grad[i * d + j];
  });
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x) {
  auto xd = x.data();
  const double total = std::accumulate(xd.begin(), xd.end(), 0.0);
  return make_result({1}, {total}, {x}, [xn = x.node()](Node& self) {
    auto g = xn->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n == 0) throw DimensionError("mean_rows: no rows");
  std::vector<double> out(d, 0.0);
  auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += xd[i * d + j];
  for (double& v : out) v /= static_cast<double>(n);
  return make_result({d}, std::move(out), {x}, [xn = x.node(), n, d](Node& self) {
    auto g = xn->grad_buffer();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[j] * inv;
  });
}

Tensor segment_mean(const Tensor& x, const std::vector<std::size_t>& offsets) {
  require_rank(x, 2, "segment_mean");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != n ||
      !std::is_sorted(offsets.begin(), offsets.end())) {
    throw DimensionError("segment_mean: offsets must run 0.." + std::to_string(n) + " nondecreasing");
  }
  const std::size_t b = offsets.size() - 1;
  std::vector<double> out(b * d, 0.0);
  auto xd = x.data();
  for (std::size_t s = 0; s < b; ++s) {
    const std::size_t len = offsets[s + 1] - offsets[s];
    if (len == 0) continue;
    for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i)
      for (std::size_t j = 0; j < d; ++j) out[s * d + j] += xd[i * d + j];
    for (std::size_t j = 0; j < d; ++j) out[s * d + j] /= static_cast<double>(len);
  }
  return make_result({b, d}, std::move(out), {x}, [xn = x.node(), offsets, b, d](Node& self) {
    auto g = xn->grad_buffer();
    for (std::size_t s = 0; s < b; ++s) {
      const std::size_t len = offsets[s + 1] - offsets[s];
      if (len == 0) continue;
      const double inv = 1.0 / static_cast<double>(len);
      for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i)
        for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[s * d + j] * inv;
    }
  });
}

Tensor embedding_bag_mean(const Tensor& table, const std::vector<std::vector<std::uint32_t>>& bags) {
  require_rank(table, 2, "embedding_bag_mean");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<double> out(bags.size() * d, 0.0);
  auto td = table.data();
  for (std::size_t i = 0; i < bags.size(); ++i) {
    if (bags[i].empty()) continue;
    for (std::uint32_t id : bags[i]) {
      if (id >= vocab) throw DimensionError("embedding_bag_mean: token id out of range");
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += td[id * d + j];
    }
    const double inv = 1.0 / static_cast<double>(bags[i].size());
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] *= inv;
  }
  return make_result({bags.size(), d}, std::move(out), {table}, [tn = table.node(), bags, d](Node& self) {
    auto g = tn->grad_buffer();
    for (std::size_t i = 0; i < bags.size(); ++i) {
      if (bags[i].empty()) continue;
      const double inv = 1.0 / static_cast<double>(bags[i].size());
      for (std::uint32_t id : bags[i])
        for (std::size_t j = 0; j < d; ++j) g[id * d + j] += self.grad[i * d + j] * inv;
    }
  });
}

}  // namespace webguard::nn
