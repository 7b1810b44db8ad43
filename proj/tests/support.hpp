#pragma once

// Oracles shared by the unit tests: central finite differences, random
// inputs, and small hand-built examples.

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "multee/harness.hpp"

namespace testing {

using namespace multee;
using Mat = Matrix<double>;
namespace fs = std::filesystem;

inline Mat random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(-scale, scale);
  }
  return m;
}

/// |a - n| / max(|a| + |n|, floor): symmetric relative error. The floor
/// keeps central-difference roundoff (about 1e-10 absolute at step 1e-6)
/// on near-zero entries from reading as a relative error.
inline double rel_error(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

struct GradCheck {
  double worst = 0;
  std::string where;
  double analytic = 0;
  double numeric = 0;
  int checked = 0;
};

/// Compares the tape gradient of `loss` with central differences for every
/// entry of every parameter (or every `stride`-th entry).
inline GradCheck check_parameter_gradients(const ParameterList<double>& params,
                                           const std::function<Var<double>(Tape<double>&)>& loss,
                                           double step = 1e-6, int stride = 1) {
  Tape<double> t;
  t.backward(loss(t));
  GradCheck out;
  for (auto* p : params) {
    auto it = t.gradients().find(p);
    const Mat analytic = it == t.gradients().end() ? Mat::Zero(p->value.rows(), p->value.cols()) : it->second;
    for (Eigen::Index k = 0; k < p->value.size(); k += stride) {
      const double orig = p->value(k);
      p->value(k) = orig + step;
      Tape<double> tp(false);
      const double up = loss(tp).value()(0, 0);
      p->value(k) = orig - step;
      Tape<double> tm(false);
      const double down = loss(tm).value()(0, 0);
      p->value(k) = orig;
      const double numeric = (up - down) / (2 * step);
      const double e = rel_error(analytic(k), numeric);
      ++out.checked;
      if (e > out.worst) {
        out.worst = e;
        out.where = p->name + "[" + std::to_string(k) + "]";
        out.analytic = analytic(k);
        out.numeric = numeric;
      }
    }
  }
  return out;
}

/// Gradient check of f with respect to a matrix input.
inline double check_input_gradient(const Mat& x0, const std::function<Var<double>(Tape<double>&, Var<double>)>& f,
                                   double step = 1e-6) {
  Tape<double> t;
  Var<double> x = t.constant(x0);
  t.backward(f(t, x));
  const Mat analytic = t.grad(x.id).size() == 0 ? Mat::Zero(x0.rows(), x0.cols()) : t.grad(x.id);
  double worst = 0;
  for (Eigen::Index k = 0; k < x0.size(); ++k) {
    Mat xp = x0, xm = x0;
    xp(k) += step;
    xm(k) -= step;
    Tape<double> a(false), b(false);
    const double numeric = (f(a, a.constant(xp)).value()(0, 0) - f(b, b.constant(xm)).value()(0, 0)) / (2 * step);
    worst = std::max(worst, rel_error(analytic(k), numeric));
  }
  return worst;
}

/// Weighted sum of all entries with fixed pseudo-random weights, so every
/// output entry contributes to a scalar loss.
inline Var<double> probe(Tape<double>& t, Var<double> v, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(cwise_product(v, t.constant(random_matrix(rng, v.rows(), v.cols()))));
}

inline TokenSeq seq(const std::vector<int>& ids) {
  TokenSeq s;
  for (int id : ids) {
    s.ids.push_back(id);
    s.tokens.push_back("t" + std::to_string(id));
  }
  return s;
}

inline TokenSeq random_seq(Rng& rng, int vocab, int len) {
  std::vector<int> ids;
  for (int i = 0; i < len; ++i) ids.push_back(2 + static_cast<int>(rng.below(static_cast<std::size_t>(vocab - 2))));
  return seq(ids);
}

inline TokenSeq padded(TokenSeq s, int pads) {
  for (int i = 0; i < pads; ++i) {
    s.ids.push_back(kPaddingId);
    s.tokens.emplace_back("<pad>");
  }
  return s;
}

/// A random indexed QA example over a vocabulary of `vocab` ids.
inline QAExample random_example(Rng& rng, int vocab, int n_premises, int n_choices, bool contiguous = false,
                                int max_len = 6) {
  QAExample ex;
  ex.question = "q";
  for (int c = 0; c < n_choices; ++c) {
    ex.choices.push_back("c" + std::to_string(c));
    ex.hypothesis_texts.push_back("h" + std::to_string(c));
    ex.hypotheses.push_back(random_seq(rng, vocab, 2 + static_cast<int>(rng.below(static_cast<std::size_t>(max_len - 1)))));
  }
  std::vector<int> labels;
  for (int i = 0; i < n_premises; ++i) {
    ex.premise_texts.push_back("p" + std::to_string(i));
    ex.premises.push_back(random_seq(rng, vocab, 2 + static_cast<int>(rng.below(static_cast<std::size_t>(max_len - 1)))));
    labels.push_back(i < 2 ? 1 : 0);
  }
  ex.relevance_labels = labels;
  ex.gold = {static_cast<int>(rng.below(static_cast<std::size_t>(n_choices)))};
  ex.contiguous = contiguous;
  return ex;
}

inline ModelConfig small_config(int vocab, int d, std::vector<JoinLayer> layers = {JoinLayer::cross_attention,
                                                                                  JoinLayer::final_layer}) {
  ModelConfig c;
  c.dims = {vocab, d, d};
  c.aggregator.join_layers = std::move(layers);
  return c;
}

/// A small trained model on the synthetic two-hop task, shared by tests that
/// need non-random weights.
struct TrainedToy {
  LoadedData data;
  std::unique_ptr<QaModel<double>> model;
};

inline TrainedToy train_toy(ModelKind kind, int questions = 60, int epochs = 3) {
  SyntheticDataConfig sc;
  sc.qa.n_questions = questions;
  sc.qa_dev = 20;
  sc.qa.n_distractors = 3;
  sc.nli.n_examples = 0;
  TrainedToy toy{synthetic_data(sc), nullptr};
  ModelConfig mc = small_config(static_cast<int>(toy.data.vocab.size()), 6);
  mc.kind = kind;
  toy.model = make_model<double>(mc, toy.data.vocab);
  TrainConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = 5e-3;
  tc.freeze_embeddings = false;
  finetune_qa(*toy.model, toy.data.qa_train, toy.data.qa_dev, tc);
  return toy;
}

}  // namespace testing
