#include "support.hpp"

using namespace testing;

namespace {

struct Counts {
  int tp = 0, fp = 0, fn = 0;
};

/// Membership-table oracle: walks every (question, choice) cell.
Counts count_cells(const std::vector<bool>& pred, const std::vector<bool>& gold) {
  Counts c;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (pred[k] && gold[k]) ++c.tp;
    if (pred[k] && !gold[k]) ++c.fp;
    if (!pred[k] && gold[k]) ++c.fn;
  }
  return c;
}

double oracle_f1(const Counts& c) {
  if (c.tp + c.fp + c.fn == 0) return 1.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

std::set<int> to_set(const std::vector<bool>& m) {
  std::set<int> s;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (m[k]) s.insert(static_cast<int>(k));
  }
  return s;
}

}  // namespace

TEST_CASE("hand case: gold {0, 1}, predicted {0}") {
  const MetricReport r = metric_multirc({{0}}, {{0, 1}}, 3);
  CHECK(r.f1a.precision == 1.0);
  CHECK(r.f1a.recall == 0.5);
  CHECK(r.f1a.f1 == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(r.f1m == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(r.em == 0.0);
  CHECK(r.questions == 1);
  CHECK(r.choices == 3);
}

TEST_CASE("empty prediction sets") {
  const MetricReport both_empty = metric_multirc({{}}, {{}});
  CHECK(both_empty.f1m == 1.0);
  CHECK(both_empty.em == 1.0);
  const MetricReport missed = metric_multirc({{}}, {{2}});
  CHECK(missed.f1a.f1 == 0.0);
  CHECK(missed.em == 0.0);
  CHECK(metric_multirc({}, {}).questions == 0);
}

TEST_CASE("metrics agree exactly with a brute-force oracle on 1000 random cases") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int questions = 1 + static_cast<int>(rng.below(6));
    std::vector<std::set<int>> pred_sets, gold_sets;
    Counts total;
    double f1_sum = 0;
    int exact = 0;
    std::size_t choices = 0;
    for (int q = 0; q < questions; ++q) {
      const int k = 2 + static_cast<int>(rng.below(5));
      std::vector<bool> pred(static_cast<std::size_t>(k)), gold(static_cast<std::size_t>(k));
      for (int c = 0; c < k; ++c) {
        pred[static_cast<std::size_t>(c)] = rng.below(2) == 1;
        gold[static_cast<std::size_t>(c)] = rng.below(3) == 0;
      }
      const Counts c = count_cells(pred, gold);
      total.tp += c.tp;
      total.fp += c.fp;
      total.fn += c.fn;
      f1_sum += oracle_f1(c);
      exact += pred == gold ? 1 : 0;
      choices += static_cast<std::size_t>(k);
      pred_sets.push_back(to_set(pred));
      gold_sets.push_back(to_set(gold));
    }
    const MetricReport r = metric_multirc(pred_sets, gold_sets, choices);
    CHECK(r.f1a.f1 == oracle_f1(total));
    CHECK(r.f1m == f1_sum / questions);
    CHECK(r.em == static_cast<double>(exact) / questions);
    const double p = total.tp + total.fp == 0 ? (total.fn == 0 ? 1.0 : 0.0)
                                              : static_cast<double>(total.tp) / (total.tp + total.fp);
    CHECK(r.f1a.precision == p);
  }
}

TEST_CASE("accuracy and its errors") {
  CHECK(metric_accuracy({0, 1, 2, 3}, {0, 1, 0, 0}) == 0.5);
  CHECK_THROWS_AS(metric_accuracy({}, {}), ConfigError);
  CHECK_THROWS_AS(metric_accuracy({0}, {0, 1}), ShapeError);
  CHECK_THROWS_AS(metric_multirc({{0}}, {}), ShapeError);
}
