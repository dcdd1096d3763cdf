#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "webguard/nn/module.hpp"

namespace webguard::url {

inline constexpr std::uint32_t kPad = 256;
inline constexpr std::uint32_t kCls = 257;
inline constexpr std::size_t kVocab = 258;

struct UrlToken {
  std::uint32_t char_id = kPad;
  std::size_t position = 0;
};

struct UrlEncoderConfig {
  std::size_t max_len = 200;
  std::size_t hidden = 64;  // D
  std::size_t layers = 4;   // L
  std::size_t heads = 1;
  std::size_t conv_kernel = 9;
  std::vector<int> dilations{1, 2, 4, 8};
  std::vector<int> pool_sizes{1, 2, 4};
  double dropout = 0.1;

  void validate() const;
};

// CLS followed by the URL bytes, truncated on the right and PAD-filled to
// max_len. Case is preserved.
std::vector<UrlToken> tokenize_url(std::string_view url, std::size_t max_len = 200);

// Number of non-PAD tokens.
std::size_t content_length(const std::vector<UrlToken>& tokens);

// Hidden states of every encoder block. Only the non-PAD prefix is computed;
// PAD rows are zero by construction.
struct UrlFeature {
  std::vector<nn::Tensor> layers;  // L tensors of [n x D], n = content length
  std::size_t seq_len = 0;         // S, including PAD
  std::size_t length() const { return layers.empty() ? 0 : layers[0].dim(0); }
  std::vector<bool> mask() const;
  // Full [L x S x D] stack with zero PAD rows.
  nn::Tensor stack() const;
};

class UrlEncoder {
 public:
  UrlEncoder() = default;
  UrlEncoder(nn::ParameterSet& params, const std::string& prefix, const UrlEncoderConfig& config, util::Rng& rng);

  UrlFeature encode_layers(const std::vector<UrlToken>& tokens, const nn::Context& ctx = {}) const;

  const UrlEncoderConfig& config() const { return config_; }

  struct Block {
    nn::Linear q, k, v, o;
    nn::Tensor conv;  // [D x kernel] depthwise
    nn::Linear proj;  // 2D -> D
    nn::LayerNorm norm;
  };

  nn::Tensor char_embedding;  // [kVocab x D]
  nn::Tensor pos_embedding;   // [max_len x D]
  std::vector<Block> blocks;

 private:
  nn::Tensor attention(const Block& b, const nn::Tensor& h) const;

  UrlEncoderConfig config_;
};

// Multiscale channel attention over the (layer x position) map of a
// UrlFeature; returns the D-dim O_url vector.
class PyramidFusion {
 public:
  PyramidFusion() = default;
  PyramidFusion(nn::ParameterSet& params, const std::string& prefix, const UrlEncoderConfig& config, util::Rng& rng);

  struct Trace {
    nn::Tensor x;       // input map [D x H x W] after padding
    nn::Tensor X;       // first DSConv
    nn::Tensor DX;      // X + sum of dilated branches
    nn::Tensor pooled;  // concatenated pools
    nn::Tensor y;       // channel gate [D]
    nn::Tensor out;     // DX * y + x
  };

  nn::Tensor fuse(const UrlFeature& feature, Trace* trace = nullptr) const;

  // [D x L x n] map, zero-padded to at least the largest pool on both axes.
  nn::Tensor input_map(const UrlFeature& feature) const;

  nn::Tensor base_depthwise, base_pointwise;
  std::vector<nn::Tensor> branch_depthwise, branch_pointwise;
  nn::Linear fc1, fc2;

 private:
  UrlEncoderConfig config_;
};

}  // namespace webguard::url
