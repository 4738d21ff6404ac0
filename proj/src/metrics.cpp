#include "dropcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "dropcast/error.hpp"

namespace dropcast::metrics {

namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("metrics: score and label counts differ");
}

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

ClassMetrics class_metrics(long tp, long fp, long fn) {
  ClassMetrics m;
  m.precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  m.recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  m.support = tp + fn;
  return m;
}

nlohmann::json threshold_json(double t) {
  if (std::isinf(t)) return nullptr;
  return t;
}

}  // namespace

Confusion confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_sizes(scores, labels);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] != 0;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  long pos = 0;
  for (int v : labels) pos += v != 0;
  const long neg = static_cast<long>(labels.size()) - pos;

  std::vector<RocPoint> roc{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  long tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    for (; k < order.size() && scores[order[k]] == s; ++k) (labels[order[k]] ? tp : fp) += 1;
    roc.push_back({ratio(static_cast<double>(fp), static_cast<double>(neg)),
                   ratio(static_cast<double>(tp), static_cast<double>(pos)), s});
  }
  return roc;
}

double auc_trapezoid(std::span<const RocPoint> roc) {
  if (roc.size() < 2) return 0.5;
  const auto& last = roc.back();
  // An absent class leaves one axis pinned at zero.
  if (last.fpr == 0.0 || last.tpr == 0.0) return 0.5;
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  return area;
}

MetricsReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_sizes(scores, labels);
  MetricsReport r;
  r.n = static_cast<long>(scores.size());
  r.decision_threshold = threshold;
  r.confusion = confusion_at(scores, labels, threshold);
  const auto& c = r.confusion;
  r.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
  r.high_risk = class_metrics(c.tp, c.fp, c.fn);
  r.low_risk = class_metrics(c.tn, c.fn, c.fp);
  r.precision = (r.high_risk.precision + r.low_risk.precision) / 2.0;
  r.recall = (r.high_risk.recall + r.low_risk.recall) / 2.0;
  r.f1 = (r.high_risk.f1 + r.low_risk.f1) / 2.0;
  r.roc = roc_curve(scores, labels);
  r.auc = auc_trapezoid(r.roc);
  return r;
}

namespace {

nlohmann::json class_json(const ClassMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

}  // namespace

nlohmann::json summary_json(const MetricsReport& r) {
  return nlohmann::json{
      {"n", r.n},
      {"decision_threshold", r.decision_threshold},
      {"accuracy", r.accuracy},
      {"precision", r.precision},
      {"recall", r.recall},
      {"f1", r.f1},
      {"auc", r.auc},
      {"averaging", "macro"},
      {"per_class", {{"low_risk", class_json(r.low_risk)}, {"high_risk", class_json(r.high_risk)}}},
      {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}}};
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = summary_json(r);
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : r.roc) points.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", threshold_json(p.threshold)}});
  j["roc_points"] = std::move(points);
}

void write_roc_csv(std::ostream& out, std::span<const RocPoint> roc) {
  out << "fpr,tpr,threshold\n";
  for (const auto& p : roc) {
    out << nlohmann::json(p.fpr).dump() << ',' << nlohmann::json(p.tpr).dump() << ',';
    if (std::isinf(p.threshold)) out << "inf";
    else out << nlohmann::json(p.threshold).dump();
    out << '\n';
  }
}

}  // namespace dropcast::metrics
