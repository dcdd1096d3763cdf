#include "webguard/fusion/fusion.hpp"

#include <cmath>
#include <numeric>

#include "webguard/error.hpp"

namespace webguard::fusion {

using nn::Tensor;

Attention::Attention(nn::ParameterSet& params, const std::string& prefix, std::size_t dim, std::size_t heads_,
                     util::Rng& rng)
    : q(params, prefix + ".q", dim, dim, rng),
      k(params, prefix + ".k", dim, dim, rng),
      v(params, prefix + ".v", dim, dim, rng),
      o(params, prefix + ".o", dim, dim, rng),
      heads(heads_) {
  if (heads == 0 || dim % heads != 0) throw ConfigError("attention: dim must be divisible by heads");
}

Tensor Attention::operator()(const Tensor& query, const Tensor& source, std::vector<Tensor>* weights) const {
  if (query.rank() != 2 || source.rank() != 2 || query.dim(1) != source.dim(1))
    throw ConfigError("attention: modality dims differ: " + nn::to_string(query.shape()) + " vs " +
                      nn::to_string(source.shape()));
  const Tensor qs = q(query), ks = k(source), vs = v(source);
  const std::size_t dk = qs.dim(1) / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> outs;
  for (std::size_t hd = 0; hd < heads; ++hd) {
    auto part = [&](const Tensor& t) { return heads == 1 ? t : nn::slice(t, 1, hd * dk, (hd + 1) * dk); };
    Tensor p = nn::softmax_rows(nn::scale(nn::matmul_nt(part(qs), part(ks)), scale));
    if (weights) weights->push_back(p);
    outs.push_back(nn::matmul(p, part(vs)));
  }
  return o(heads == 1 ? outs[0] : nn::concat(outs, 1));
}

HybridLayer::HybridLayer(nn::ParameterSet& params, const std::string& prefix, std::size_t dim, std::size_t heads,
                         std::size_t ffn_hidden, util::Rng& rng)
    : self_url(params, prefix + ".self_url", dim, heads, rng),
      self_html(params, prefix + ".self_html", dim, heads, rng),
      cross_url(params, prefix + ".cross_url", dim, heads, rng),
      cross_html(params, prefix + ".cross_html", dim, heads, rng),
      norm_self_url(params, prefix + ".norm_self_url", dim),
      norm_self_html(params, prefix + ".norm_self_html", dim),
      norm_cross_url(params, prefix + ".norm_cross_url", dim),
      norm_cross_html(params, prefix + ".norm_cross_html", dim),
      ffn_url1(params, prefix + ".ffn_url1", dim, ffn_hidden, rng),
      ffn_url2(params, prefix + ".ffn_url2", ffn_hidden, dim, rng),
      ffn_html1(params, prefix + ".ffn_html1", dim, ffn_hidden, rng),
      ffn_html2(params, prefix + ".ffn_html2", ffn_hidden, dim, rng) {}

std::pair<Tensor, Tensor> HybridLayer::operator()(const Tensor& u, const Tensor& h, HybridTrace* trace) const {
  if (u.rank() != 2 || h.rank() != 2 || u.dim(1) != h.dim(1))
    throw ConfigError("hybrid layer: modality dims differ: " + nn::to_string(u.shape()) + " vs " +
                      nn::to_string(h.shape()));
  Tensor u1 = norm_self_url(nn::add(u, self_url(u, u, trace ? &trace->self_url : nullptr)));
  Tensor h1 = norm_self_html(nn::add(h, self_html(h, h, trace ? &trace->self_html : nullptr)));
  Tensor u2 = norm_cross_url(nn::add(u1, cross_url(u1, h1, trace ? &trace->url_to_html : nullptr)));
  Tensor h2 = norm_cross_html(nn::add(h1, cross_html(h1, u1, trace ? &trace->html_to_url : nullptr)));
  Tensor u3 = nn::add(u2, ffn_url2(nn::relu(ffn_url1(u2))));
  Tensor h3 = nn::add(h2, ffn_html2(nn::relu(ffn_html1(h2))));
  return {u3, h3};
}

void FusionConfig::validate() const {
  if (url_dim == 0 || html_dim == 0 || dim == 0 || ffn_hidden == 0) throw ConfigError("fusion: dims must be positive");
  if (heads == 0 || dim % heads != 0) throw ConfigError("fusion: dim must be divisible by heads");
  if (depth < 1) throw ConfigError("fusion: depth must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("fusion: temperature must be positive");
}

FusionModel::FusionModel(nn::ParameterSet& params, const std::string& prefix, const FusionConfig& config,
                         util::Rng& rng)
    : config_(config) {
  config_.validate();
  url_proj = nn::Linear(params, prefix + ".url_proj", config_.url_dim, config_.dim, rng);
  html_proj = nn::Linear(params, prefix + ".html_proj", config_.html_dim, config_.dim, rng);
  for (std::size_t i = 0; i < config_.depth; ++i)
    layers.emplace_back(params, prefix + ".layer" + std::to_string(i), config_.dim, config_.heads,
                        config_.ffn_hidden, rng);
  classifier = nn::Linear(params, prefix + ".classifier", 2 * config_.dim, 2, rng);
}

Tensor FusionModel::project_url(const Tensor& url_tokens) const {
  if (url_tokens.rank() != 2 || url_tokens.dim(1) != config_.url_dim || url_tokens.dim(0) == 0)
    throw ConfigError("fusion: URL tokens " + nn::to_string(url_tokens.shape()) + " do not match url_dim " +
                      std::to_string(config_.url_dim));
  return url_proj(url_tokens);
}

Tensor FusionModel::project_html(const Tensor& html_tokens) const {
  if (html_tokens.rank() != 2 || html_tokens.dim(1) != config_.html_dim || html_tokens.dim(0) == 0)
    throw ConfigError("fusion: HTML tokens " + nn::to_string(html_tokens.shape()) + " do not match html_dim " +
                      std::to_string(config_.html_dim));
  return html_proj(html_tokens);
}

FusionOutput FusionModel::fuse_and_classify(const Tensor& url_tokens, const Tensor& html_tokens,
                                            std::vector<HybridTrace>* traces) const {
  Tensor u = project_url(url_tokens);
  Tensor h = project_html(html_tokens);
  for (const HybridLayer& layer : layers) {
    HybridTrace* t = nullptr;
    if (traces) t = &traces->emplace_back();
    std::tie(u, h) = layer(u, h, t);
  }
  FusionOutput out;
  out.url_pooled = nn::mean_rows(u);
  out.html_pooled = nn::mean_rows(h);
  out.fused = nn::concat({out.url_pooled, out.html_pooled}, 0);
  out.logits = nn::reshape(classifier(nn::reshape(out.fused, {1, 2 * config_.dim})), {2});
  return out;
}

Tensor info_nce(const Tensor& url, const Tensor& html, double temperature) {
  if (url.shape() != html.shape() || url.rank() != 2)
    throw DimensionError("info_nce: " + nn::to_string(url.shape()) + " vs " + nn::to_string(html.shape()));
  if (!(temperature > 0.0)) throw ParameterError("info_nce: temperature must be positive");
  const std::size_t b = url.dim(0);
  std::vector<int> labels(b);
  std::iota(labels.begin(), labels.end(), 0);
  Tensor sim = nn::scale(nn::matmul_nt(nn::l2_normalize_rows(url), nn::l2_normalize_rows(html)), 1.0 / temperature);
  return nn::scale(nn::add(nn::cross_entropy(sim, labels), nn::cross_entropy(nn::transpose(sim), labels)), 0.5);
}

}  // namespace webguard::fusion
