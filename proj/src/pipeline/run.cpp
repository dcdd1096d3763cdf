#include "webguard/pipeline/run.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "webguard/error.hpp"
#include "webguard/nn/optim.hpp"

namespace webguard::pipeline {
namespace {

using nlohmann::json;
using partition::SubGraph;

struct BatchOutput {
  nn::Tensor loss;
  double ce = 0.0;
  double contrastive = 0.0;
  std::size_t correct = 0;
};

BatchOutput forward_batch(WebGuardModel& model, const Dataset& data, const std::vector<std::size_t>& idx,
                          util::Rng& round_rng, util::Rng& dropout_rng) {
  const auto& c = model.config();
  std::vector<SubGraph> flat;
  std::vector<std::size_t> offsets{0};
  for (auto i : idx) {
    auto round = partition::sample_round(data.samples[i].groups, c.voting.iter_num, round_rng);
    flat.insert(flat.end(), round.begin(), round.end());
    offsets.push_back(flat.size());
  }
  // All rounds of the minibatch share one block-diagonal pass so BatchNorm
  // sees minibatch statistics.
  const nn::Context ctx{nn::Mode::kTrain, &dropout_rng};
  auto html = model.graph_encoder.encode(graph::build_batch(flat, model.embedder), nn::Mode::kTrain);

  std::vector<nn::Tensor> logits, url_pooled, html_pooled;
  std::vector<int> labels;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto& s = data.samples[idx[j]];
    auto out = model.head.fuse_and_classify(model.url_tokens(s.url_tokens, ctx),
                                            nn::slice(html, 0, offsets[j], offsets[j + 1]));
    logits.push_back(nn::reshape(out.logits, {1, 2}));
    url_pooled.push_back(nn::reshape(out.url_pooled, {1, c.fusion.dim}));
    html_pooled.push_back(nn::reshape(out.html_pooled, {1, c.fusion.dim}));
    labels.push_back(s.row.label);
  }
  BatchOutput b;
  auto stacked = nn::concat(logits, 0);
  b.loss = nn::cross_entropy(stacked, labels);
  b.ce = b.loss.item();
  if (c.fusion.contrastive && idx.size() > 1) {
    auto nce = fusion::info_nce(nn::concat(url_pooled, 0), nn::concat(html_pooled, 0), c.fusion.temperature);
    b.contrastive = nce.item();
    b.loss = nn::add(b.loss, nn::scale(nce, c.fusion.contrastive_weight));
  }
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const int pred = voting::round_decision({stacked[2 * j], stacked[2 * j + 1]}).first;
    b.correct += pred == labels[j] ? 1 : 0;
  }
  return b;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<EpochLog> train(WebGuardModel& model, const Dataset& data,
                            const std::function<void(const EpochLog&)>& on_epoch) {
  const auto& c = model.config();
  if (data.size() == 0) throw InputError("train: empty dataset");
  const auto labels = data.labels();
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0 || positives == static_cast<long>(labels.size()))
    throw InputError("train: dataset has a single class; both benign and malicious samples are required");

  nn::Adam adam(model.params.trainable(), {.lr = c.training.lr, .weight_decay = c.training.weight_decay});
  util::Rng order_rng(util::Rng::derive(c.seed, 2));
  util::Rng round_rng(util::Rng::derive(c.seed, 3));
  util::Rng dropout_rng(util::Rng::derive(c.seed, 4));

  std::vector<EpochLog> log;
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 1; epoch <= c.training.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    EpochLog e{epoch, 0.0, 0.0, 0.0};
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += c.training.batch_size) {
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + std::min(order.size(), start + c.training.batch_size));
      adam.zero_grad();
      auto b = forward_batch(model, data, idx, round_rng, dropout_rng);
      b.loss.backward();
      adam.step();
      e.loss += b.ce * idx.size();
      e.contrastive += b.contrastive * idx.size();
      correct += b.correct;
    }
    e.loss /= data.size();
    e.contrastive /= data.size();
    e.accuracy = static_cast<double>(correct) / data.size();
    log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return log;
}

json to_json(const std::vector<EpochLog>& log) {
  json out = json::array();
  for (const auto& e : log)
    out.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"contrastive", e.contrastive}, {"accuracy", e.accuracy}});
  return out;
}

std::vector<int> Evaluation::labels() const {
  std::vector<int> out;
  for (const auto& v : verdicts) out.push_back(v.label);
  return out;
}

std::vector<double> Evaluation::scores() const {
  std::vector<double> out;
  for (const auto& v : verdicts) out.push_back(v.y_score);
  return out;
}

Evaluation evaluate(const WebGuardModel& model, const Dataset& data, const EvalOptions& options) {
  if (data.size() == 0) throw InputError("evaluate: empty dataset");
  if (!(options.perturb_p >= 0.0 && options.perturb_p <= 1.0))
    throw ParameterError("evaluate: perturbation probability must lie in [0, 1]");
  const auto& c = model.config();
  Evaluation ev;
  ev.verdicts.resize(data.size());
  parallel_for(data.size(), options.workers, [&](std::size_t i) {
    const auto& s = data.samples[i];
    const std::uint64_t seed = sample_seed(options.seed, s.row.id);
    std::vector<SubGraph> perturbed;
    if (options.perturb_p > 0.0) {
      auto g = html::perturb_edges(s.graph, options.perturb_p, util::Rng::derive(seed, 0x70657274));
      perturbed = partition::partition(g, c.voting.t_f, s.row.id);
    }
    const auto& groups = options.perturb_p > 0.0 ? perturbed : s.groups;
    SampleScorer scorer(model, s.url_tokens, groups);
    voting::VoteParams params = c.voting;
    params.seed = seed;
    SampleVerdict v;
    v.id = s.row.id;
    v.label = s.row.label;
    v.outcome = voting::vote(groups, scorer, params);
    for (const auto& r : v.outcome.rounds) v.malicious_rounds += r.predicted_class == 1 ? 1 : 0;
    if (options.use_voting) {
      v.y_pred = v.outcome.y_pred;
      v.y_score = v.outcome.y_score;
    } else {
      v.y_pred = v.outcome.rounds.front().predicted_class;
      v.y_score = v.outcome.rounds.front().malicious_prob;
    }
    ev.verdicts[i] = std::move(v);
  });
  std::vector<int> preds;
  for (const auto& v : ev.verdicts) preds.push_back(v.y_pred);
  ev.report = metrics::compute(ev.labels(), preds, ev.scores());
  return ev;
}

std::string verdicts_csv(const std::vector<SampleVerdict>& verdicts) {
  std::ostringstream s;
  s.precision(17);
  s << "id,label,y_pred,y_score,malicious_rounds\n";
  for (const auto& v : verdicts)
    s << v.id << ',' << v.label << ',' << v.y_pred << ',' << v.y_score << ',' << v.malicious_rounds << '\n';
  return s.str();
}

Prediction predict(const WebGuardModel& model, const Sample& sample, std::uint64_t seed, bool localize) {
  SampleScorer scorer(model, sample.url_tokens, sample.groups);
  voting::VoteParams params = model.config().voting;
  params.seed = sample_seed(seed, sample.row.id);
  Prediction p;
  p.outcome = voting::vote(sample.groups, scorer, params);
  if (localize && p.outcome.y_pred == 1)
    p.report = voting::localize(p.outcome, sample.groups, sample.graph, sample.row.id, &scorer);
  return p;
}

json Prediction::to_json() const {
  json j{{"verdict", outcome.y_pred == 1 ? "malicious" : "benign"},
         {"y_pred", outcome.y_pred},
         {"score", outcome.y_score},
         {"vote", voting::to_json(outcome)}};
  if (report) j["localization"] = voting::to_json(*report);
  return j;
}

}  // namespace webguard::pipeline
