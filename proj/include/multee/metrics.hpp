#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <vector>

namespace multee {

struct PrecisionRecall {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct MetricReport {
  std::optional<double> accuracy;  // single-correct tasks only
  PrecisionRecall f1a;
  double f1m = 0;
  double em = 0;
  std::size_t questions = 0;
  std::size_t choices = 0;
};

/// Fraction of questions whose predicted index equals the gold index.
double metric_accuracy(const std::vector<int>& predictions, const std::vector<int>& golds);

/// Precision, recall and F1 from raw counts. A side with an empty
/// denominator scores 1 when the other error count is also 0.
PrecisionRecall precision_recall(std::size_t tp, std::size_t fp, std::size_t fn);

/// F1a (micro over question-choice pairs), F1m (mean per-question F1) and
/// exact match of predicted answer sets.
MetricReport metric_multirc(const std::vector<std::set<int>>& predicted, const std::vector<std::set<int>>& gold,
                            std::size_t total_choices = 0);

}  // namespace multee
