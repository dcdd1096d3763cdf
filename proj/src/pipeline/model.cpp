#include "webguard/pipeline/model.hpp"

#include "webguard/error.hpp"
#include "webguard/nn/checkpoint.hpp"

namespace webguard::pipeline {
namespace {

util::Rng init_rng(const RunConfig& c) { return util::Rng(util::Rng::derive(c.seed, 1)); }

std::array<double, 2> to_array(const nn::Tensor& logits) {
  return {logits.data()[0], logits.data()[1]};
}

}  // namespace

WebGuardModel::WebGuardModel(const RunConfig& config) : config_(config) {
  config_.finalize();
  auto rng = init_rng(config_);
  embedder = html::NodeEmbedder(params, "html.embedding", rng, config_.buckets, config_.embed_dim);
  url_encoder = url::UrlEncoder(params, "url.encoder", config_.url, rng);
  pyramid = url::PyramidFusion(params, "url.pyramid", config_.url, rng);
  graph_encoder = graph::GraphEncoder(params, "graph", config_.graph, rng);
  head = fusion::FusionModel(params, "fusion", config_.fusion, rng);
}

nn::Tensor WebGuardModel::url_tokens(const std::vector<url::UrlToken>& tokens, const nn::Context& ctx) const {
  auto feature = url_encoder.encode_layers(tokens, ctx);
  std::vector<nn::Tensor> rows;
  for (const auto& layer : feature.layers) rows.push_back(nn::reshape(nn::mean_rows(layer), {1, config_.url.hidden}));
  rows.push_back(nn::reshape(pyramid.fuse(feature), {1, config_.url.hidden}));
  return nn::concat(rows, 0);
}

nn::Tensor WebGuardModel::graph_embeddings(const std::vector<partition::SubGraph>& subgraphs) const {
  return graph_encoder.encode(graph::build_batch(subgraphs, embedder));
}

std::array<double, 2> WebGuardModel::classify(const std::vector<url::UrlToken>& tokens,
                                              const std::vector<partition::SubGraph>& selected) const {
  nn::NoGradGuard guard;
  return to_array(head.fuse_and_classify(url_tokens(tokens), graph_embeddings(selected)).logits);
}

void WebGuardModel::save(const std::filesystem::path& path) const {
  nn::save_checkpoint(path, params, config_.to_json(), config_.hash());
}

std::unique_ptr<WebGuardModel> load_model(const std::filesystem::path& path, const RunConfig* expected) {
  auto ckpt = nn::read_checkpoint(path);
  RunConfig stored = config_from_json(ckpt.config);
  if (stored.hash() != ckpt.config_hash)
    throw ConfigError("checkpoint " + path.string() + ": embedded config does not match its hash");
  if (expected && expected->hash() != ckpt.config_hash)
    throw ConfigError("checkpoint " + path.string() + " was trained with config " + ckpt.config_hash +
                      ", but the given config hashes to " + expected->hash());
  auto model = std::make_unique<WebGuardModel>(stored);
  nn::load_into(ckpt, model->params, ckpt.config_hash);
  return model;
}

SampleScorer::SampleScorer(const WebGuardModel& model, const std::vector<url::UrlToken>& url_tokens,
                           const std::vector<partition::SubGraph>& groups)
    : model_(model) {
  nn::NoGradGuard guard;
  url_ = model.url_tokens(url_tokens);
  groups_ = model.graph_embeddings(groups);
  for (std::size_t i = 0; i < groups.size(); ++i) row_[groups[i].group_id] = i;
}

std::array<double, 2> SampleScorer::classify(const std::vector<partition::SubGraph>& selected) {
  nn::NoGradGuard guard;
  std::vector<std::size_t> rows;
  for (const auto& g : selected) {
    auto it = row_.find(g.group_id);
    if (it == row_.end()) throw ContractError("SampleScorer: unknown group " + std::to_string(g.group_id));
    rows.push_back(it->second);
  }
  return to_array(model_.head.fuse_and_classify(url_, nn::gather_rows(groups_, rows)).logits);
}

}  // namespace webguard::pipeline
