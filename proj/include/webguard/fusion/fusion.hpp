#pragma once

#include <vector>

#include "webguard/nn/module.hpp"

namespace webguard::fusion {

// Scaled dot-product attention with separate query and key/value sources.
class Attention {
 public:
  Attention() = default;
  Attention(nn::ParameterSet& params, const std::string& prefix, std::size_t dim, std::size_t heads, util::Rng& rng);

  // query[n_q x D], source[n_k x D] -> [n_q x D]. When `weights` is given it
  // receives one [n_q x n_k] probability matrix per head.
  nn::Tensor operator()(const nn::Tensor& query, const nn::Tensor& source,
                        std::vector<nn::Tensor>* weights = nullptr) const;

  nn::Linear q, k, v, o;
  std::size_t heads = 1;
};

struct HybridTrace {
  std::vector<nn::Tensor> self_url, self_html, url_to_html, html_to_url;
};

// One coupling layer: per-modality self-attention, then bidirectional
// cross-attention, then a feed-forward block; residuals throughout.
class HybridLayer {
 public:
  HybridLayer() = default;
  HybridLayer(nn::ParameterSet& params, const std::string& prefix, std::size_t dim, std::size_t heads,
              std::size_t ffn_hidden, util::Rng& rng);

  std::pair<nn::Tensor, nn::Tensor> operator()(const nn::Tensor& u, const nn::Tensor& h,
                                               HybridTrace* trace = nullptr) const;

  Attention self_url, self_html;
  Attention cross_url;   // URL queries, HTML keys/values
  Attention cross_html;  // HTML queries, URL keys/values
  nn::LayerNorm norm_self_url, norm_self_html, norm_cross_url, norm_cross_html;
  nn::Linear ffn_url1, ffn_url2, ffn_html1, ffn_html2;
};

struct FusionConfig {
  std::size_t url_dim = 64;     // per URL token
  std::size_t html_dim = 228;   // per subgraph embedding
  std::size_t dim = 64;         // D_f
  std::size_t heads = 1;
  std::size_t depth = 2;
  std::size_t ffn_hidden = 128;
  bool contrastive = false;
  double temperature = 0.1;
  double contrastive_weight = 0.1;

  void validate() const;
};

struct FusionOutput {
  nn::Tensor logits;        // [2]: benign, malicious
  nn::Tensor fused;         // [2 * D_f]
  nn::Tensor url_pooled;    // [D_f]
  nn::Tensor html_pooled;   // [D_f]
};

class FusionModel {
 public:
  FusionModel() = default;
  FusionModel(nn::ParameterSet& params, const std::string& prefix, const FusionConfig& config, util::Rng& rng);

  nn::Tensor project_url(const nn::Tensor& url_tokens) const;
  nn::Tensor project_html(const nn::Tensor& html_tokens) const;

  // Raw (unprojected) modality tokens in, logits out.
  FusionOutput fuse_and_classify(const nn::Tensor& url_tokens, const nn::Tensor& html_tokens,
                                 std::vector<HybridTrace>* traces = nullptr) const;

  const FusionConfig& config() const { return config_; }

  nn::Linear url_proj, html_proj, classifier;
  std::vector<HybridLayer> layers;

 private:
  FusionConfig config_;
};

// Symmetric InfoNCE over a batch: row i of `url` and row i of `html` are the
// positive pair, every other row a negative. Cosine similarity / temperature.
nn::Tensor info_nce(const nn::Tensor& url, const nn::Tensor& html, double temperature);

}  // namespace webguard::fusion
