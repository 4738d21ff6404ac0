#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

namespace dropcast::metrics {

// Positive class = high risk (label 1).
struct Confusion {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;
  long total() const { return tp + fp + tn + fn; }
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

// threshold is +infinity for the first point (nothing predicted high).
struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct MetricsReport {
  long n = 0;
  double decision_threshold = 0.5;
  Confusion confusion;
  double accuracy = 0.0;
  double precision = 0.0;  // macro over the two classes
  double recall = 0.0;
  double f1 = 0.0;
  ClassMetrics low_risk;
  ClassMetrics high_risk;
  std::vector<RocPoint> roc;
  double auc = 0.5;
};

// Score >= threshold predicts high risk. Undefined ratios (0/0) are 0.
Confusion confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold);

// One point per distinct score, descending, starting at (0, 0).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

// Trapezoid integral; 0.5 when either class is absent.
double auc_trapezoid(std::span<const RocPoint> roc);

MetricsReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

void to_json(nlohmann::json& j, const MetricsReport& r);
// Metrics without the ROC point list.
nlohmann::json summary_json(const MetricsReport& r);

// fpr,tpr,threshold with "inf" for the first threshold.
void write_roc_csv(std::ostream& out, std::span<const RocPoint> roc);

}  // namespace dropcast::metrics
