#include "multee/metrics.hpp"

#include <string>

#include "multee/errors.hpp"

namespace multee {

double metric_accuracy(const std::vector<int>& predictions, const std::vector<int>& golds) {
  if (predictions.empty()) throw ConfigError("accuracy needs at least one prediction");
  if (predictions.size() != golds.size()) {
    throw ShapeError(std::to_string(predictions.size()) + " predictions for " + std::to_string(golds.size()) +
                     " gold answers");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) correct += predictions[i] == golds[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

PrecisionRecall precision_recall(std::size_t tp, std::size_t fp, std::size_t fn) {
  PrecisionRecall r;
  r.precision = tp + fp == 0 ? (fn == 0 ? 1.0 : 0.0) : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = tp + fn == 0 ? (fp == 0 ? 1.0 : 0.0) : static_cast<double>(tp) / static_cast<double>(tp + fn);
  // Harmonic mean of P and R in count form.
  r.f1 = tp + fp + fn == 0 ? 1.0 : static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
  return r;
}

MetricReport metric_multirc(const std::vector<std::set<int>>& predicted, const std::vector<std::set<int>>& gold,
                            std::size_t total_choices) {
  if (predicted.size() != gold.size()) {
    throw ShapeError(std::to_string(predicted.size()) + " predicted sets for " + std::to_string(gold.size()) +
                     " gold sets");
  }
  MetricReport report;
  report.questions = gold.size();
  report.choices = total_choices;
  if (gold.empty()) return report;
  std::size_t tp = 0, fp = 0, fn = 0, exact = 0;
  double f1_sum = 0;
  for (std::size_t q = 0; q < gold.size(); ++q) {
    std::size_t qtp = 0;
    for (int c : predicted[q]) qtp += gold[q].count(c);
    const std::size_t qfp = predicted[q].size() - qtp;
    const std::size_t qfn = gold[q].size() - qtp;
    tp += qtp;
    fp += qfp;
    fn += qfn;
    f1_sum += precision_recall(qtp, qfp, qfn).f1;
    exact += predicted[q] == gold[q] ? 1 : 0;
  }
  report.f1a = precision_recall(tp, fp, fn);
  report.f1m = f1_sum / static_cast<double>(gold.size());
  report.em = static_cast<double>(exact) / static_cast<double>(gold.size());
  return report;
}

}  // namespace multee
