#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <vector>

#include "webguard/fusion/fusion.hpp"
#include "webguard/graph/encoder.hpp"
#include "webguard/html/featurize.hpp"
#include "webguard/pipeline/config.hpp"
#include "webguard/pipeline/dataset.hpp"
#include "webguard/url/encoder.hpp"
#include "webguard/voting/voting.hpp"

namespace webguard::pipeline {

// The full detector: hashed node embeddings, URL encoder with pyramid fusion,
// subgraph encoder and the coupling/classification head.
class WebGuardModel {
 public:
  explicit WebGuardModel(const RunConfig& config);
  WebGuardModel(const WebGuardModel&) = delete;
  WebGuardModel& operator=(const WebGuardModel&) = delete;

  const RunConfig& config() const { return config_; }

  // URL side tokens [(L + 1) x D]: the mean over content positions of each
  // encoder layer, then the pyramid output.
  nn::Tensor url_tokens(const std::vector<url::UrlToken>& tokens, const nn::Context& ctx = {}) const;
  // Eval-mode subgraph embeddings [B x html_dim].
  nn::Tensor graph_embeddings(const std::vector<partition::SubGraph>& subgraphs) const;
  // Logits for one round in eval mode.
  std::array<double, 2> classify(const std::vector<url::UrlToken>& tokens,
                                 const std::vector<partition::SubGraph>& selected) const;

  void save(const std::filesystem::path& path) const;

  nn::ParameterSet params;
  html::NodeEmbedder embedder;
  url::UrlEncoder url_encoder;
  url::PyramidFusion pyramid;
  graph::GraphEncoder graph_encoder;
  fusion::FusionModel head;

 private:
  RunConfig config_;
};

// Reads a checkpoint and rebuilds the model from its embedded config. When
// `expected` is given its hash must equal the checkpoint's.
std::unique_ptr<WebGuardModel> load_model(const std::filesystem::path& path, const RunConfig* expected = nullptr);

// Round classifier for one sample. URL tokens and the embedding of every
// group are computed once up front; rounds then only run the fusion head.
// Subgraphs passed to classify() must come from `sample.groups`.
class SampleScorer : public voting::RoundClassifier {
 public:
  SampleScorer(const WebGuardModel& model, const std::vector<url::UrlToken>& url_tokens,
               const std::vector<partition::SubGraph>& groups);
  std::array<double, 2> classify(const std::vector<partition::SubGraph>& selected) override;

 private:
  const WebGuardModel& model_;
  nn::Tensor url_;
  nn::Tensor groups_;                      // [t_f x html_dim]
  std::map<std::size_t, std::size_t> row_;  // group_id -> row of groups_
};

}  // namespace webguard::pipeline
