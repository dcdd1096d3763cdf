#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "webguard/metrics/metrics.hpp"
#include "webguard/pipeline/dataset.hpp"
#include "webguard/pipeline/model.hpp"

namespace webguard::pipeline {

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;        // mean classification loss over the epoch
  double contrastive = 0.0; // mean InfoNCE term; 0 when disabled
  double accuracy = 0.0;    // training-round accuracy
};

// One Adam pass per minibatch; each sample contributes one sampled round
// (iter_num groups plus its URL) per epoch. Deterministic under config.seed.
// Refuses single-class datasets.
std::vector<EpochLog> train(WebGuardModel& model, const Dataset& data,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

nlohmann::json to_json(const std::vector<EpochLog>& log);

struct SampleVerdict {
  std::string id;
  int label = 0;
  int y_pred = 0;
  double y_score = 0.0;
  std::size_t malicious_rounds = 0;
  voting::VoteOutcome outcome;
};

struct EvalOptions {
  bool use_voting = true;
  std::uint64_t seed = 0;      // per-sample streams derive from it
  double perturb_p = 0.0;      // edge deletion probability
  std::size_t workers = 1;
};

struct Evaluation {
  metrics::MetricReport report;
  std::vector<SampleVerdict> verdicts;
  std::vector<int> labels() const;
  std::vector<double> scores() const;
};

// Voting mode runs the biased vote per sample; otherwise a single round on
// the vote's first sampled set of groups. With perturb_p > 0 each document
// loses edges (seeded per sample) and is re-partitioned first.
Evaluation evaluate(const WebGuardModel& model, const Dataset& data, const EvalOptions& options);

std::string verdicts_csv(const std::vector<SampleVerdict>& verdicts);

// Single-document inference for the CLI. The report is filled when the
// verdict is malicious and `localize` is set.
struct Prediction {
  voting::VoteOutcome outcome;
  std::optional<voting::LocalizationReport> report;
  nlohmann::json to_json() const;
};
Prediction predict(const WebGuardModel& model, const Sample& sample, std::uint64_t seed, bool localize);

}  // namespace webguard::pipeline
