#include "webguard/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "webguard/error.hpp"

namespace webguard::metrics {
namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

void validate(const std::vector<int>& labels, const std::vector<double>& scores) {
  if (labels.empty()) throw InputError("metrics: no samples");
  if (labels.size() != scores.size())
    throw InputError("metrics: " + std::to_string(labels.size()) + " labels vs " + std::to_string(scores.size()) +
                     " scores");
  for (int y : labels)
    if (y != 0 && y != 1) throw InputError("metrics: labels must be 0 or 1");
  for (double s : scores)
    if (!(s >= 0.0 && s <= 1.0)) throw InputError("metrics: scores must lie in [0, 1]");
}

struct Cumulative {
  double threshold;
  std::size_t tp, fp;
};

// Cumulative counts after admitting every sample with score >= threshold,
// one entry per distinct score, descending.
std::vector<Cumulative> sweep(const std::vector<int>& labels, const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<Cumulative> out;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (labels[order[i]] == 1 ? tp : fp) += 1;
    if (i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]]) out.push_back({scores[order[i]], tp, fp});
  }
  return out;
}

void fill_confusion(MetricReport& r) {
  const double tp = static_cast<double>(r.tp), tn = static_cast<double>(r.tn);
  const double fp = static_cast<double>(r.fp), fn = static_cast<double>(r.fn);
  const double n = tp + tn + fp + fn;
  r.acc = (tp + tn) / n;
  r.precision = ratio(tp, tp + fp);
  r.recall = ratio(tp, tp + fn);
  r.f1 = f1_of(r.precision, r.recall);
  const double den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
  r.mcc = den == 0.0 ? 0.0 : (tp * tn - fp * fn) / den;
  const double f1_neg = f1_of(ratio(tn, tn + fn), ratio(tn, tn + fp));
  r.weighted_f1 = ((tp + fn) * r.f1 + (tn + fp) * f1_neg) / n;
}

void fill_curves(MetricReport& r, const std::vector<int>& labels, const std::vector<double>& scores) {
  auto roc = roc_points(labels, scores);
  const std::size_t pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    r.roc_auc = 0.5;
  } else {
    double auc = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i)
      auc += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
    r.roc_auc = auc;
  }
  r.pr_auc = 0.0;
  if (pos > 0) {
    double prev_recall = 0.0;
    for (const auto& p : pr_points(labels, scores)) {
      r.pr_auc += (p.recall - prev_recall) * p.precision;
      prev_recall = p.recall;
    }
  }
  for (double alpha : kFprLevels) {
    double best = 0.0;
    for (const auto& p : roc)
      if (p.fpr <= alpha) best = std::max(best, p.tpr);
    r.tpr_at_fpr[alpha] = best;
  }
}

}  // namespace

std::vector<RocPoint> roc_points(const std::vector<int>& labels, const std::vector<double>& scores) {
  validate(labels, scores);
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double neg = static_cast<double>(labels.size()) - pos;
  std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  for (const auto& c : sweep(labels, scores))
    out.push_back({c.threshold, ratio(static_cast<double>(c.fp), neg), ratio(static_cast<double>(c.tp), pos)});
  return out;
}

std::vector<PrPoint> pr_points(const std::vector<int>& labels, const std::vector<double>& scores) {
  validate(labels, scores);
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  std::vector<PrPoint> out;
  for (const auto& c : sweep(labels, scores)) {
    const double tp = static_cast<double>(c.tp);
    out.push_back({c.threshold, ratio(tp, tp + static_cast<double>(c.fp)), ratio(tp, pos)});
  }
  return out;
}

MetricReport compute(const std::vector<int>& labels, const std::vector<double>& scores, double threshold) {
  validate(labels, scores);
  std::vector<int> pred(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= threshold ? 1 : 0;
  return compute(labels, pred, scores);
}

MetricReport compute(const std::vector<int>& labels, const std::vector<int>& predictions,
                     const std::vector<double>& scores) {
  validate(labels, scores);
  if (predictions.size() != labels.size()) throw InputError("metrics: predictions and labels differ in length");
  MetricReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i];
    if (p != 0 && p != 1) throw InputError("metrics: predictions must be 0 or 1");
    if (labels[i] == 1) (p == 1 ? r.tp : r.fn) += 1;
    else (p == 1 ? r.fp : r.tn) += 1;
  }
  fill_confusion(r);
  fill_curves(r, labels, scores);
  return r;
}

namespace {

std::string fpr_key(double alpha) {
  std::ostringstream s;
  s << "tpr@fpr=" << alpha;
  return s.str();
}

}  // namespace

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j{{"tn", r.tn},        {"fp", r.fp},     {"fn", r.fn},
                   {"tp", r.tp},        {"acc", r.acc},   {"precision", r.precision},
                   {"recall", r.recall}, {"f1", r.f1},    {"mcc", r.mcc},
                   {"weighted_f1", r.weighted_f1}, {"roc_auc", r.roc_auc}, {"pr_auc", r.pr_auc}};
  for (const auto& [alpha, tpr] : r.tpr_at_fpr) j[fpr_key(alpha)] = tpr;
  return j;
}

std::string to_csv(const MetricReport& r) {
  std::ostringstream head, row;
  row.precision(17);
  head << "tn,fp,fn,tp,acc,precision,recall,f1,mcc,weighted_f1,roc_auc,pr_auc";
  row << r.tn << ',' << r.fp << ',' << r.fn << ',' << r.tp << ',' << r.acc << ',' << r.precision << ',' << r.recall
      << ',' << r.f1 << ',' << r.mcc << ',' << r.weighted_f1 << ',' << r.roc_auc << ',' << r.pr_auc;
  for (const auto& [alpha, tpr] : r.tpr_at_fpr) {
    head << ',' << fpr_key(alpha);
    row << ',' << tpr;
  }
  return head.str() + "\n" + row.str() + "\n";
}

std::string roc_csv(const std::vector<RocPoint>& points) {
  std::ostringstream s;
  s.precision(17);
  s << "threshold,fpr,tpr\n";
  for (const auto& p : points) s << (std::isinf(p.threshold) ? std::string("inf") : std::to_string(p.threshold)) << ','
                                 << p.fpr << ',' << p.tpr << '\n';
  return s.str();
}

std::string pr_csv(const std::vector<PrPoint>& points) {
  std::ostringstream s;
  s.precision(17);
  s << "threshold,precision,recall\n";
  for (const auto& p : points) s << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
  return s.str();
}

}  // namespace webguard::metrics
