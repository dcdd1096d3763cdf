#include "webguard/voting/voting.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "webguard/error.hpp"
#include "webguard/util/rng.hpp"

namespace webguard::voting {

void VoteParams::validate() const {
  if (t_f < 1) throw ParameterError("vote: t_f must be >= 1");
  if (iter_num < 1 || iter_num > t_f) throw ParameterError("vote: iter_num must lie in [1, t_f]");
  if (iter_per < 1) throw ParameterError("vote: iter_per must be >= 1");
  if (threshold < 1) throw ParameterError("vote: threshold must be >= 1");
}

std::pair<int, double> round_decision(const std::array<double, 2>& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
  const int cls = logits[1] > logits[0] ? 1 : 0;
  return {cls, e1 / (e0 + e1)};
}

VoteOutcome vote(const std::vector<partition::SubGraph>& subgraphs, RoundClassifier& model, const VoteParams& params) {
  params.validate();
  if (subgraphs.size() != params.t_f)
    throw ParameterError("vote: expected " + std::to_string(params.t_f) + " subgraphs, got " +
                         std::to_string(subgraphs.size()));
  VoteOutcome out;
  std::size_t benign = 0, malicious = 0;
  double benign_score = 1.0, malicious_score = 0.0;
  for (std::size_t r = 0; r < params.iter_per; ++r) {
    util::Rng rng(util::Rng::derive(params.seed, r));
    auto selected = partition::sample_round(subgraphs, params.iter_num, rng);
    auto [cls, prob] = round_decision(model.classify(selected));
    RoundRecord rec;
    rec.round_index = r;
    for (const auto& sg : selected) rec.sampled_group_ids.push_back(sg.group_id);
    rec.predicted_class = cls;
    rec.malicious_prob = prob;
    if (cls == 0) {
      ++benign;
      benign_score = std::min(benign_score, prob);
    } else {
      ++malicious;
      malicious_score = std::max(malicious_score, prob);
      out.flagged_groups.insert(out.flagged_groups.end(), rec.sampled_group_ids.begin(), rec.sampled_group_ids.end());
    }
    out.rounds.push_back(std::move(rec));
  }
  if (malicious >= params.threshold) {
    out.y_pred = 1;
    out.y_score = malicious_score;
  } else {
    out.y_pred = 0;
    // No benign round at all: fall back to the lone malicious probability
    // instead of the tracker's initial 1.
    out.y_score = benign > 0 ? benign_score : malicious_score;
  }
  return out;
}

VoteOutcome vote(const html::DomGraph& doc, RoundClassifier& model, const VoteParams& params,
                 const std::string& doc_id) {
  params.validate();
  return vote(partition::partition(doc, params.t_f, doc_id), model, params);
}

namespace {

std::string snippet(const std::string& text) {
  if (text.size() <= 120) return text;
  std::size_t cut = 120;
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return text.substr(0, cut);
}

}  // namespace

LocalizationReport localize(const VoteOutcome& outcome, const std::vector<partition::SubGraph>& subgraphs,
                            const html::DomGraph& doc, const std::string& doc_id, RoundClassifier* probe) {
  if (outcome.y_pred != 1) throw ContractError("localize: outcome is not malicious");
  std::map<std::size_t, LocalizedGroup> groups;
  for (const auto& rec : outcome.rounds) {
    for (std::size_t g : rec.sampled_group_ids) {
      auto& entry = groups[g];
      entry.group_id = g;
      if (rec.predicted_class == 1) ++entry.count;
      else ++entry.benign_count;
    }
  }
  std::vector<LocalizedGroup> ranked;
  for (auto& [id, g] : groups)
    if (g.count > 0) ranked.push_back(std::move(g));

  auto key_less = [](const LocalizedGroup& a, const LocalizedGroup& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.benign_count < b.benign_count;
  };
  std::stable_sort(ranked.begin(), ranked.end(), key_less);

  if (probe && ranked.size() > 1) {
    for (auto& g : ranked) {
      std::vector<partition::SubGraph> rest;
      for (const auto& sg : subgraphs)
        if (sg.group_id != g.group_id) rest.push_back(sg);
      g.probe_score = 1.0 - round_decision(probe->classify(rest)).second;
    }
    std::stable_sort(ranked.begin(), ranked.end(), [&](const LocalizedGroup& a, const LocalizedGroup& b) {
      if (a.probe_score != b.probe_score) return a.probe_score > b.probe_score;
      return key_less(a, b);
    });
  }

  for (auto& g : ranked) {
    const auto& sg = subgraphs.at(g.group_id - 1);
    for (std::size_t v : sg.node_indices) {
      const auto& node = doc.nodes.at(v);
      g.nodes.push_back({node.node_id, node.tag, snippet(node.text)});
    }
  }
  LocalizationReport report;
  report.doc_id = doc_id;
  report.verdict = 1;
  report.score = outcome.y_score;
  report.groups = std::move(ranked);
  return report;
}

nlohmann::json to_json(const LocalizationReport& report) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : report.groups) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : g.nodes) nodes.push_back({{"path", n.path}, {"tag", n.tag}, {"snippet", n.snippet}});
    nlohmann::json entry{{"group_id", g.group_id}, {"count", g.count}, {"benign_count", g.benign_count}, {"nodes", nodes}};
    if (g.probe_score >= 0.0) entry["probe_score"] = g.probe_score;
    groups.push_back(std::move(entry));
  }
  return {{"doc_id", report.doc_id}, {"verdict", report.verdict}, {"score", report.score}, {"groups", groups}};
}

nlohmann::json to_json(const VoteOutcome& outcome) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : outcome.rounds)
    rounds.push_back({{"round", r.round_index}, {"groups", r.sampled_group_ids}, {"class", r.predicted_class},
                      {"malicious_prob", r.malicious_prob}});
  return {{"y_pred", outcome.y_pred}, {"y_score", outcome.y_score}, {"rounds", rounds},
          {"flagged_groups", outcome.flagged_groups}};
}

}  // namespace webguard::voting
