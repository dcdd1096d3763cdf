#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "webguard/error.hpp"
#include "webguard/metrics/metrics.hpp"
#include "webguard/util/rng.hpp"

using namespace webguard;

namespace {

constexpr double kTol = 1e-9;

struct Brute {
  double roc_auc, pr_auc;
  std::map<double, double> tpr_at_fpr;
};

// Pairwise AUC, AP and TPR@FPR by recounting at every distinct threshold.
Brute brute_force(const std::vector<int>& y, const std::vector<double>& s) {
  double pos = 0, neg = 0;
  for (int v : y) (v ? pos : neg) += 1;
  double wins = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == 0) wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
  Brute b{wins / (pos * neg), 0.0, {}};
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double prev_r = 0;
  std::vector<std::pair<double, double>> ops{{0.0, 0.0}};
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (s[i] >= t) (y[i] ? tp : fp) += 1;
    b.pr_auc += (tp / pos - prev_r) * (tp / (tp + fp));
    prev_r = tp / pos;
    ops.emplace_back(fp / neg, tp / pos);
  }
  for (double a : metrics::kFprLevels) {
    double best = 0;
    for (auto [f, t] : ops)
      if (f <= a) best = std::max(best, t);
    b.tpr_at_fpr[a] = best;
  }
  return b;
}

void random_case(util::Rng& rng, std::size_t n, std::vector<int>& y, std::vector<double>& s) {
  y.assign(n, 0);
  s.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.uniform() < 0.4 ? 1 : 0;
    // Coarse grid so ties are common; avoid exactly 0.5 so the swap law is clean.
    s[i] = std::round(rng.uniform() * 20.0) / 20.0;
    if (s[i] == 0.5) s[i] = 0.55;
  }
  y[0] = 0;
  y[1] = 1;
}

}  // namespace

TEST_CASE("metrics: trivial examples") {
  auto r = metrics::compute({0, 1}, {0.1, 0.9});
  CHECK(r.tp == 1);
  CHECK(r.tn == 1);
  CHECK(r.acc == 1.0);
  CHECK(r.mcc == 1.0);
  CHECK(r.roc_auc == 1.0);
  CHECK(r.pr_auc == 1.0);
  CHECK(r.tpr_at_fpr.at(1e-4) == 1.0);

  auto z = metrics::compute({0, 0, 0}, {0.2, 0.7, 0.9});
  CHECK(z.recall == 0.0);
  CHECK(z.precision == 0.0);
  CHECK(z.f1 == 0.0);
  CHECK(z.mcc == 0.0);
  CHECK(z.roc_auc == 0.5);
  CHECK(z.pr_auc == 0.0);
  CHECK(z.tn + z.fp + z.fn + z.tp == 3);

  // All predicted positive and all positive: MCC denominator is zero.
  auto p = metrics::compute({1, 1}, {0.6, 0.9});
  CHECK(p.mcc == 0.0);
  CHECK(p.acc == 1.0);
  CHECK(p.tpr_at_fpr.at(1e-4) == 1.0);

  // Constant predictions on mixed labels.
  auto c = metrics::compute({0, 1, 1, 0}, {0.1, 0.2, 0.3, 0.4});
  CHECK(c.tp == 0);
  CHECK(c.mcc == 0.0);
  CHECK(c.f1 == 0.0);
}

TEST_CASE("metrics: errors") {
  CHECK_THROWS_AS(metrics::compute({}, {}), InputError);
  CHECK_THROWS_AS(metrics::compute({0, 1}, {0.5}), InputError);
  CHECK_THROWS_AS(metrics::compute({0, 2}, {0.5, 0.5}), InputError);
  CHECK_THROWS_AS(metrics::compute({0, 1}, {0.5, 1.5}), InputError);
  CHECK_THROWS_AS(metrics::compute({0, 1}, {0.5, std::nan("")}), InputError);
  CHECK_THROWS_AS(metrics::compute({0, 1}, std::vector<int>{1}, {0.5, 0.5}), InputError);
}

TEST_CASE("metrics: golden 20-sample fixture with ties") {
  std::ifstream in(std::string(WEBGUARD_FIXTURE_DIR) + "/metrics_golden.json");
  REQUIRE(in.good());
  auto g = nlohmann::json::parse(in);
  auto y = g["labels"].get<std::vector<int>>();
  auto s = g["scores"].get<std::vector<double>>();
  REQUIRE(y.size() == 20);
  REQUIRE(std::set<double>(s.begin(), s.end()).size() < s.size());
  auto r = metrics::compute(y, s, g["threshold"].get<double>());
  CHECK(r.tn == g["tn"].get<std::size_t>());
  CHECK(r.fp == g["fp"].get<std::size_t>());
  CHECK(r.fn == g["fn"].get<std::size_t>());
  CHECK(r.tp == g["tp"].get<std::size_t>());
  for (const char* key : {"acc", "precision", "recall", "f1", "mcc", "weighted_f1", "roc_auc", "pr_auc"}) {
    INFO(key);
    CHECK(std::abs(metrics::to_json(r)[key].get<double>() - g[key].get<double>()) <= kTol);
  }
  const char* keys[] = {"0.0001", "0.001", "0.01", "0.1"};
  for (std::size_t i = 0; i < metrics::kFprLevels.size(); ++i) {
    INFO(keys[i]);
    CHECK(std::abs(r.tpr_at_fpr.at(metrics::kFprLevels[i]) - g["tpr_at_fpr"][keys[i]].get<double>()) <= kTol);
  }
  auto b = brute_force(y, s);
  CHECK(std::abs(r.roc_auc - b.roc_auc) <= kTol);
  CHECK(std::abs(r.pr_auc - b.pr_auc) <= kTol);
  for (double a : metrics::kFprLevels) CHECK(std::abs(r.tpr_at_fpr.at(a) - b.tpr_at_fpr.at(a)) <= kTol);
}

TEST_CASE("metrics: brute-force agreement on random tied data") {
  util::Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> y;
    std::vector<double> s;
    random_case(rng, 2 + rng.below(60), y, s);
    auto r = metrics::compute(y, s);
    auto b = brute_force(y, s);
    CHECK(std::abs(r.roc_auc - b.roc_auc) <= kTol);
    CHECK(std::abs(r.pr_auc - b.pr_auc) <= kTol);
    for (double a : metrics::kFprLevels) CHECK(r.tpr_at_fpr.at(a) == b.tpr_at_fpr.at(a));
    const double tp = double(r.tp), tn = double(r.tn), fp = double(r.fp), fn = double(r.fn);
    CHECK(r.tn + r.fp + r.fn + r.tp == y.size());
    CHECK(r.acc == (tp + tn) / double(y.size()));
    if (r.precision + r.recall > 0) CHECK(r.f1 == 2 * r.precision * r.recall / (r.precision + r.recall));
    const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (den > 0) CHECK(std::abs(r.mcc - (tp * tn - fp * fn) / std::sqrt(den)) <= kTol);
    CHECK(r.mcc >= -1.0);
    CHECK(r.mcc <= 1.0);
  }
}

TEST_CASE("metrics: properties") {
  util::Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> y;
    std::vector<double> s;
    random_case(rng, 30, y, s);
    auto r = metrics::compute(y, s);

    std::vector<double> t(s.size());
    std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::pow(v, 3.0) * 0.5 + 0.1; });
    CHECK(std::abs(metrics::compute(y, t).roc_auc - r.roc_auc) <= kTol);

    double prev = 0;
    for (double a : metrics::kFprLevels) {
      CHECK(r.tpr_at_fpr.at(a) >= prev);
      prev = r.tpr_at_fpr.at(a);
    }
    auto roc = metrics::roc_points(y, s);
    CHECK(roc.back().fpr == 1.0);
    CHECK(roc.back().tpr == 1.0);

    std::vector<int> y2(y.size());
    std::vector<double> s2(s.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      y2[i] = 1 - y[i];
      s2[i] = 1.0 - s[i];
    }
    auto w = metrics::compute(y2, s2);
    CHECK(w.acc == doctest::Approx(r.acc).epsilon(1e-12));
    CHECK(std::abs(std::abs(w.mcc) - std::abs(r.mcc)) <= kTol);
    CHECK(std::abs(w.roc_auc - r.roc_auc) <= kTol);
  }
}

TEST_CASE("metrics: explicit predictions and output formats") {
  std::vector<int> y{0, 1, 1, 0};
  std::vector<double> s{0.2, 0.9, 0.4, 0.6};
  auto r = metrics::compute(y, std::vector<int>{0, 1, 1, 1}, s);
  CHECK(r.tp == 2);
  CHECK(r.fp == 1);
  CHECK(r.roc_auc == 0.75);

  auto j = metrics::to_json(r);
  for (const char* key : {"tn", "fp", "fn", "tp", "acc", "precision", "recall", "f1", "mcc", "weighted_f1",
                          "roc_auc", "pr_auc", "tpr@fpr=0.0001", "tpr@fpr=0.1"})
    CHECK(j.contains(key));

  auto csv = metrics::to_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(csv.rfind("tn,fp,fn,tp,", 0) == 0);

  auto roc = metrics::roc_csv(metrics::roc_points(y, s));
  CHECK(roc.rfind("threshold,fpr,tpr\ninf,0,0\n", 0) == 0);
  CHECK(std::count(roc.begin(), roc.end(), '\n') == 6);
  auto pr = metrics::pr_csv(metrics::pr_points(y, s));
  CHECK(std::count(pr.begin(), pr.end(), '\n') == 5);
}
