#include "webguard/url/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "webguard/error.hpp"

namespace webguard::url {

using nn::Tensor;

void UrlEncoderConfig::validate() const {
  if (max_len < 2) throw ConfigError("url: max_len must be >= 2");
  if (layers < 2) throw ConfigError("url: layers must be >= 2 to form a pyramid stack");
  if (hidden < 2) throw ConfigError("url: hidden must be >= 2");
  if (heads == 0 || hidden % heads != 0) throw ConfigError("url: hidden must be divisible by heads");
  if (conv_kernel == 0 || conv_kernel % 2 == 0) throw ConfigError("url: conv_kernel must be odd");
  if (dilations.empty()) throw ConfigError("url: dilations must be non-empty");
  for (int d : dilations)
    if (d < 1) throw ConfigError("url: dilations must be >= 1");
  if (pool_sizes.empty()) throw ConfigError("url: pool_sizes must be non-empty");
  for (int k : pool_sizes)
    if (k < 1) throw ConfigError("url: pool sizes must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("url: dropout must lie in [0, 1)");
}

std::vector<UrlToken> tokenize_url(std::string_view url, std::size_t max_len) {
  if (url.empty()) throw InputError("tokenize_url: empty URL");
  if (max_len < 2) throw ParameterError("tokenize_url: max_len must be >= 2");
  std::vector<UrlToken> out(max_len);
  for (std::size_t i = 0; i < max_len; ++i) out[i].position = i;
  out[0].char_id = kCls;
  const std::size_t n = std::min(url.size(), max_len - 1);
  for (std::size_t i = 0; i < n; ++i) out[i + 1].char_id = static_cast<std::uint8_t>(url[i]);
  return out;
}

std::size_t content_length(const std::vector<UrlToken>& tokens) {
  std::size_t n = 0;
  while (n < tokens.size() && tokens[n].char_id != kPad) ++n;
  for (std::size_t i = n; i < tokens.size(); ++i)
    if (tokens[i].char_id != kPad) throw InputError("url tokens: PAD must only appear as a suffix");
  return n;
}

std::vector<bool> UrlFeature::mask() const {
  std::vector<bool> m(seq_len, false);
  std::fill_n(m.begin(), std::min(length(), seq_len), true);
  return m;
}

Tensor UrlFeature::stack() const {
  if (layers.empty()) return {};
  const std::size_t d = layers[0].dim(1);
  std::vector<double> out(layers.size() * seq_len * d, 0.0);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto src = layers[l].data();
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(l * seq_len * d));
  }
  return Tensor(nn::Shape{layers.size(), seq_len, d}, std::move(out));
}

UrlEncoder::UrlEncoder(nn::ParameterSet& params, const std::string& prefix, const UrlEncoderConfig& config,
                       util::Rng& rng)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.hidden;
  char_embedding = params.add_normal(prefix + ".char_embedding", {kVocab, d}, 1.0, rng);
  pos_embedding = params.add_normal(prefix + ".pos_embedding", {config_.max_len, d}, 1.0, rng);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = prefix + ".block" + std::to_string(l);
    Block b;
    b.q = nn::Linear(params, p + ".attn.q", d, d, rng);
    b.k = nn::Linear(params, p + ".attn.k", d, d, rng);
    b.v = nn::Linear(params, p + ".attn.v", d, d, rng);
    b.o = nn::Linear(params, p + ".attn.o", d, d, rng);
    b.conv = params.add_uniform(p + ".conv.weight", {d, config_.conv_kernel},
                                1.0 / std::sqrt(static_cast<double>(config_.conv_kernel)), rng);
    b.proj = nn::Linear(params, p + ".proj", 2 * d, d, rng);
    b.norm = nn::LayerNorm(params, p + ".norm", d);
    blocks.push_back(std::move(b));
  }
}

Tensor UrlEncoder::attention(const Block& b, const Tensor& h) const {
  const Tensor q = b.q(h), k = b.k(h), v = b.v(h);
  const std::size_t dk = config_.hidden / config_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> heads;
  for (std::size_t i = 0; i < config_.heads; ++i) {
    auto part = [&](const Tensor& t) {
      return config_.heads == 1 ? t : nn::slice(t, 1, i * dk, (i + 1) * dk);
    };
    Tensor p = nn::softmax_rows(nn::scale(nn::matmul_nt(part(q), part(k)), scale));
    heads.push_back(nn::matmul(p, part(v)));
  }
  return b.o(config_.heads == 1 ? heads[0] : nn::concat(heads, 1));
}

UrlFeature UrlEncoder::encode_layers(const std::vector<UrlToken>& tokens, const nn::Context& ctx) const {
  const std::size_t n = content_length(tokens);
  if (n == 0) throw InputError("encode_layers: no content tokens");
  if (tokens.size() > config_.max_len) throw InputError("encode_layers: sequence longer than max_len");
  std::vector<std::size_t> ids(n), pos(n);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = tokens[i].char_id;
    pos[i] = tokens[i].position;
  }
  Tensor h = nn::add(nn::gather_rows(char_embedding, ids), nn::gather_rows(pos_embedding, pos));
  UrlFeature out;
  out.seq_len = tokens.size();
  for (const Block& b : blocks) {
    Tensor global = attention(b, h);
    Tensor local = nn::relu(nn::depthwise_conv1d(h, b.conv));
    Tensor mixed = b.proj(nn::concat({global, local}, 1));
    h = b.norm(nn::add(h, nn::dropout(mixed, config_.dropout, ctx)));
    out.layers.push_back(h);
  }
  return out;
}

PyramidFusion::PyramidFusion(nn::ParameterSet& params, const std::string& prefix, const UrlEncoderConfig& config,
                             util::Rng& rng)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.hidden;
  const double dw_bound = 1.0 / 3.0;
  const double pw_bound = 1.0 / std::sqrt(static_cast<double>(d));
  base_depthwise = params.add_uniform(prefix + ".base.depthwise", {d, 3, 3}, dw_bound, rng);
  base_pointwise = params.add_uniform(prefix + ".base.pointwise", {d, d}, pw_bound, rng);
  for (std::size_t i = 0; i < config_.dilations.size(); ++i) {
    const std::string p = prefix + ".branch" + std::to_string(i);
    branch_depthwise.push_back(params.add_uniform(p + ".depthwise", {d, 3, 3}, dw_bound, rng));
    branch_pointwise.push_back(params.add_uniform(p + ".pointwise", {d, d}, pw_bound, rng));
  }
  std::size_t pooled = 0;
  for (int k : config_.pool_sizes) pooled += static_cast<std::size_t>(k * k) * d;
  fc1 = nn::Linear(params, prefix + ".fc1", pooled, d / 2, rng);
  fc2 = nn::Linear(params, prefix + ".fc2", d / 2, d, rng);
}

Tensor PyramidFusion::input_map(const UrlFeature& feature) const {
  const std::size_t L = feature.layers.size();
  const std::size_t n = feature.length();
  const std::size_t d = feature.layers.at(0).dim(1);
  // [L*n x D] -> [L x n x D] -> [D x L x n]
  Tensor map = nn::permute3(nn::reshape(nn::concat(feature.layers, 0), {L, n, d}), {2, 0, 1});
  const std::size_t need = static_cast<std::size_t>(*std::max_element(config_.pool_sizes.begin(), config_.pool_sizes.end()));
  const std::size_t h = std::max(L, need), w = std::max(n, need);
  return (h == L && w == n) ? map : nn::pad2d(map, h, w);
}

Tensor PyramidFusion::fuse(const UrlFeature& feature, Trace* trace) const {
  if (feature.layers.size() != config_.layers)
    throw DimensionError("pyramid: expected " + std::to_string(config_.layers) + " layers, got " +
                         std::to_string(feature.layers.size()));
  const std::size_t L = feature.layers.size();
  const std::size_t n = feature.length();
  const std::size_t d = config_.hidden;

  Tensor x = input_map(feature);
  Tensor X = nn::dsconv2d(x, base_depthwise, base_pointwise, 1);
  Tensor DX = X;
  for (std::size_t i = 0; i < branch_depthwise.size(); ++i)
    DX = nn::add(DX, nn::dsconv2d(X, branch_depthwise[i], branch_pointwise[i], config_.dilations[i]));

  std::vector<Tensor> pools;
  for (int k : config_.pool_sizes) {
    Tensor p = nn::adaptive_avg_pool2d(DX, k);
    pools.push_back(nn::reshape(p, {p.numel()}));
  }
  Tensor pooled = nn::concat(pools, 0);
  Tensor hidden = nn::relu(fc1(nn::reshape(pooled, {1, pooled.numel()})));
  Tensor y = nn::reshape(nn::sigmoid(fc2(hidden)), {d});
  Tensor out = nn::add(nn::scale_channels(DX, y), x);

  // Mean over the content positions of the top real layer.
  Tensor top = nn::slice(nn::slice(out, 1, L - 1, L), 2, 0, n);
  Tensor fused = nn::mean_rows(nn::transpose(nn::reshape(top, {d, n})));
  if (trace) *trace = {x, X, DX, pooled, y, out};
  return fused;
}

}  // namespace webguard::url
