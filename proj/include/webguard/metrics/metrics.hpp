#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace webguard::metrics {

inline const std::vector<double> kFprLevels{1e-4, 1e-3, 1e-2, 1e-1};

struct MetricReport {
  std::size_t tn = 0, fp = 0, fn = 0, tp = 0;
  double acc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  double weighted_f1 = 0.0;
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  std::map<double, double> tpr_at_fpr;
};

struct RocPoint {
  double threshold, fpr, tpr;
};
struct PrPoint {
  double threshold, precision, recall;
};

// Predicted positive iff score >= threshold. Degenerate denominators give 0
// (precision, recall, F1, MCC); ROC-AUC is 0.5 when only one class is
// present and PR-AUC is 0 without positives.
MetricReport compute(const std::vector<int>& labels, const std::vector<double>& scores, double threshold = 0.5);

// Confusion-based metrics from explicit predictions; curve metrics from scores.
MetricReport compute(const std::vector<int>& labels, const std::vector<int>& predictions,
                     const std::vector<double>& scores);

// One point per distinct score (descending), preceded by (0, 0).
std::vector<RocPoint> roc_points(const std::vector<int>& labels, const std::vector<double>& scores);
// One point per distinct score (descending).
std::vector<PrPoint> pr_points(const std::vector<int>& labels, const std::vector<double>& scores);

nlohmann::json to_json(const MetricReport& report);
std::string to_csv(const MetricReport& report);  // header line + one row
std::string roc_csv(const std::vector<RocPoint>& points);
std::string pr_csv(const std::vector<PrPoint>& points);

}  // namespace webguard::metrics
