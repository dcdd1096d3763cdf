#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "vote_replay.hpp"
#include "webguard/error.hpp"
#include "webguard/voting/voting.hpp"

using namespace webguard;
using partition::SubGraph;
using voting::RoundClassifier;

namespace {

std::array<double, 2> logits_for(double malicious_prob) {
  return {0.0, std::log(malicious_prob / (1.0 - malicious_prob))};
}

// Replays a fixed per-round transcript.
class Scripted : public RoundClassifier {
 public:
  explicit Scripted(std::vector<std::array<double, 2>> script) : script_(std::move(script)) {}
  std::array<double, 2> classify(const std::vector<SubGraph>&) override { return script_.at(next_++ % script_.size()); }

 private:
  std::vector<std::array<double, 2>> script_;
  std::size_t next_ = 0;
};

// Malicious iff the planted group is among the selected subgraphs.
class Oracle : public RoundClassifier {
 public:
  explicit Oracle(std::size_t planted) : planted_(planted) {}
  std::array<double, 2> classify(const std::vector<SubGraph>& selected) override {
    bool hit = std::any_of(selected.begin(), selected.end(), [&](const SubGraph& s) { return s.group_id == planted_; });
    return hit ? logits_for(0.9) : logits_for(0.1);
  }

 private:
  std::size_t planted_;
};

std::vector<SubGraph> groups(std::size_t t_f) {
  std::vector<SubGraph> out(t_f);
  for (std::size_t i = 0; i < t_f; ++i) {
    out[i].group_id = i + 1;
    out[i].node_indices = {i};
  }
  return out;
}

html::DomGraph chain_doc(std::size_t n) {
  html::DomGraph g;
  for (std::size_t i = 0; i < n; ++i) g.nodes.push_back({"n" + std::to_string(i), "div", {}, "text " + std::to_string(i), i});
  g.rebuild_adjacency();
  return g;
}

}  // namespace

TEST_CASE("round_decision") {
  auto [c0, p0] = voting::round_decision({1.0, 1.0});
  CHECK(c0 == 0);
  CHECK(p0 == 0.5);
  auto [c1, p1] = voting::round_decision({0.0, 2.0});
  CHECK(c1 == 1);
  CHECK(p1 == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
  auto [c2, p2] = voting::round_decision({800.0, 0.0});
  CHECK(c2 == 0);
  CHECK(p2 >= 0.0);
}

TEST_CASE("vote: worked examples") {
  voting::VoteParams params;
  auto sgs = groups(5);

  Scripted benign({logits_for(0.1)});
  auto a = voting::vote(sgs, benign, params);
  CHECK(a.y_pred == 0);
  CHECK(a.y_score == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(a.flagged_groups.empty());
  CHECK(a.rounds.size() == 5);

  Scripted one({logits_for(0.2), logits_for(0.9), logits_for(0.2), logits_for(0.3), logits_for(0.4)});
  auto b = voting::vote(sgs, one, params);
  CHECK(b.y_pred == 0);

  Scripted two({logits_for(0.2), logits_for(0.6), logits_for(0.3), logits_for(0.9), logits_for(0.4)});
  auto c = voting::vote(sgs, two, params);
  CHECK(c.y_pred == 1);
  CHECK(c.y_score == doctest::Approx(0.9).epsilon(1e-12));
  std::vector<std::size_t> expected = c.rounds[1].sampled_group_ids;
  expected.insert(expected.end(), c.rounds[3].sampled_group_ids.begin(), c.rounds[3].sampled_group_ids.end());
  CHECK(c.flagged_groups == expected);

  // Lone malicious round with no benign rounds scores that round.
  voting::VoteParams single = params;
  single.iter_per = 1;
  Scripted lone({logits_for(0.7)});
  auto d = voting::vote(sgs, lone, single);
  CHECK(d.y_pred == 0);
  CHECK(d.y_score == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("vote: full truth table against the independent replay, monotone") {
  const std::array<double, 5> mal{0.6, 0.75, 0.8, 0.9, 0.95};
  const std::array<double, 5> ben{0.05, 0.2, 0.3, 0.4, 0.45};
  auto sgs = groups(5);
  std::array<int, 32> verdict{};
  for (unsigned mask = 0; mask < 32; ++mask) {
    std::vector<std::array<double, 2>> script;
    for (unsigned r = 0; r < 5; ++r) script.push_back(logits_for((mask >> r & 1u) ? mal[r] : ben[r]));
    Scripted model(script);
    voting::VoteParams params;
    params.seed = mask;
    auto out = voting::vote(sgs, model, params);
    auto ref = testing::replay_vote(script);
    CHECK(out.y_pred == ref.y_pred);
    CHECK(out.y_score == ref.y_score);
    std::size_t flagged = 0;
    for (const auto& rec : out.rounds) {
      CHECK(rec.predicted_class == static_cast<int>(mask >> rec.round_index & 1u));
      if (rec.predicted_class == 1) flagged += rec.sampled_group_ids.size();
    }
    CHECK(out.flagged_groups.size() == flagged);
    verdict[mask] = out.y_pred;
  }
  for (unsigned mask = 0; mask < 32; ++mask)
    for (unsigned r = 0; r < 5; ++r)
      if (verdict[mask] == 1) CHECK(verdict[mask | (1u << r)] == 1);
}

TEST_CASE("vote: determinism and parameter errors") {
  auto g = chain_doc(30);
  Oracle model(2);
  voting::VoteParams params;
  params.seed = 99;
  auto a = voting::vote(g, model, params);
  auto b = voting::vote(g, model, params);
  CHECK(voting::to_json(a) == voting::to_json(b));

  voting::VoteParams bad = params;
  bad.iter_num = 6;
  CHECK_THROWS_AS(voting::vote(g, model, bad), ParameterError);
  bad = params;
  bad.t_f = 0;
  CHECK_THROWS_AS(voting::vote(g, model, bad), ParameterError);
}

TEST_CASE("vote: oracle detection rate matches the coverage analysis") {
  auto sgs = groups(5);
  Oracle model(3);
  const int seeds = 20000;
  int detected = 0;
  for (int s = 0; s < seeds; ++s) {
    voting::VoteParams params;
    params.seed = static_cast<std::uint64_t>(s);
    detected += voting::vote(sgs, model, params).y_pred;
  }
  const double p = partition::coverage_probability(5, 4, 5, 1).p_round;
  const double analytic = 1.0 - std::pow(1 - p, 5) - 5 * p * std::pow(1 - p, 4);
  const double sigma = std::sqrt(analytic * (1 - analytic) / seeds);
  const double empirical = static_cast<double>(detected) / seeds;
  MESSAGE("detected " << empirical << " analytic " << analytic);
  CHECK(std::abs(empirical - analytic) <= 3 * sigma);
}

TEST_CASE("localize: ranking and report") {
  auto g = chain_doc(5);
  auto sgs = groups(5);
  voting::VoteOutcome out;
  out.y_pred = 1;
  out.y_score = 0.8;
  out.rounds = {{0, {1, 2, 3, 4}, 1, 0.8}, {1, {1, 2, 3, 5}, 1, 0.7}};
  auto rep = voting::localize(out, sgs, g, "doc");
  REQUIRE(rep.groups.size() == 5);
  std::vector<std::size_t> order;
  for (const auto& gr : rep.groups) order.push_back(gr.group_id);
  CHECK(order == std::vector<std::size_t>{1, 2, 3, 4, 5});
  CHECK(rep.groups[0].count == 2);
  CHECK(rep.groups[3].count == 1);
  CHECK(rep.groups[0].nodes[0].path == "n0");

  // Identical samples: all equal, ordered by group id.
  voting::VoteOutcome same;
  same.y_pred = 1;
  same.rounds = {{0, {4, 2, 5, 1}, 1, 0.9}, {1, {4, 2, 5, 1}, 1, 0.9}};
  auto rs = voting::localize(same, sgs, g);
  std::vector<std::size_t> ids;
  for (const auto& gr : rs.groups) ids.push_back(gr.group_id);
  CHECK(ids == std::vector<std::size_t>{1, 2, 4, 5});

  // Benign-round appearances break count ties.
  voting::VoteOutcome mixed;
  mixed.y_pred = 1;
  mixed.rounds = {{0, {1, 2, 3, 4}, 1, 0.9}, {1, {1, 2, 3, 5}, 1, 0.9}, {2, {1, 2, 4, 5}, 0, 0.1}};
  auto rm = voting::localize(mixed, sgs, g);
  CHECK(rm.groups[0].group_id == 3);

  // Occlusion with a probe resolves the tie.
  Oracle probe(2);
  auto rp = voting::localize(same, sgs, g, "", &probe);
  CHECK(rp.groups[0].group_id == 2);
  CHECK(rp.groups[0].probe_score == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(rp.groups[1].probe_score == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(rp.groups.size() == 4);

  // and outranks the count keys; groups absent from malicious rounds stay out.
  Oracle probe5(5);
  auto ro = voting::localize(mixed, sgs, g, "", &probe5);
  CHECK(ro.groups[0].group_id == 5);
  CHECK(ro.groups[1].group_id == 3);
  Oracle probe_absent(3);
  auto ra = voting::localize(same, sgs, g, "", &probe_absent);
  CHECK(ra.groups.size() == 4);
  CHECK(ra.groups[0].group_id == 1);

  voting::VoteOutcome benign;
  CHECK_THROWS_AS(voting::localize(benign, sgs, g), ContractError);

  auto j = voting::to_json(rep);
  CHECK(j["doc_id"] == "doc");
  CHECK(j["groups"][0]["nodes"][0]["snippet"] == "text 0");
}

TEST_CASE("localize: snippets are capped at 120 bytes") {
  auto g = chain_doc(1);
  g.nodes[0].text = std::string(119, 'a') + "\xC3\xA9" + std::string(50, 'b');
  auto sgs = groups(1);
  voting::VoteOutcome out;
  out.y_pred = 1;
  out.rounds = {{0, {1}, 1, 0.9}};
  auto rep = voting::localize(out, sgs, g);
  CHECK(rep.groups[0].nodes[0].snippet == std::string(119, 'a'));
}
