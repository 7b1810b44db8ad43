#pragma once

// Sentence relevance: hypothesis-aware sentence vectors, optional
// cross-sentence contextualization, softmax relevance weights and the two
// relevance losses.

#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "multee/entailment.hpp"

namespace multee {

template <typename Scalar>
class RelevanceWeights {
 public:
  enum class Kind { softmax, constant_ones, direct };

  /// alpha = softmax(logits) over the sentence dimension; logits is 1 x n.
  static RelevanceWeights from_logits(Var<Scalar> logits) {
    return RelevanceWeights(softmax_row(logits), Kind::softmax);
  }

  /// All weights 1; not a distribution.
  static RelevanceWeights constant_ones(Tape<Scalar>& t, Eigen::Index n) {
    return RelevanceWeights(t.constant(Matrix<Scalar>::Ones(1, n)), Kind::constant_ones);
  }

  /// Per-sentence entailment probabilities used directly as weights.
  static RelevanceWeights direct(Var<Scalar> probabilities) {
    return RelevanceWeights(probabilities, Kind::direct);
  }

  Var<Scalar> values() const { return alpha_; }
  Eigen::Index size() const { return alpha_.cols(); }
  Kind kind() const { return kind_; }
  Scalar operator[](Eigen::Index i) const { return alpha_.value()(0, i); }

 private:
  RelevanceWeights(Var<Scalar> alpha, Kind kind) : alpha_(alpha), kind_(kind) {
    if (alpha.rows() != 1) throw ShapeError("relevance weights must be a single row");
  }

  Var<Scalar> alpha_;
  Kind kind_;
};

enum class SentenceEvaluation { sequential, parallel };

/// x_i = f_e_v(P_i, H) for every premise. The parallel mode evaluates
/// premises on separate tapes (values only) and must agree with the
/// sequential mode; it is meant for inference.
template <typename Scalar>
std::vector<FinalVector<Scalar>> sentence_vectors(Tape<Scalar>& t, std::span<const TokenSeq> premises,
                                                  const TokenSeq& hypothesis,
                                                  const EntailmentStack<Scalar>& stack,
                                                  SentenceEvaluation mode = SentenceEvaluation::sequential) {
  if (premises.empty()) throw ShapeError("sentence_vectors: no premises");
  std::vector<FinalVector<Scalar>> out;
  out.reserve(premises.size());
  if (mode == SentenceEvaluation::sequential) {
    for (const auto& p : premises) out.push_back(stack.f_e_v(t, p, hypothesis));
    return out;
  }
  std::vector<Matrix<Scalar>> values(premises.size());
  {
    std::vector<std::jthread> workers;
    workers.reserve(premises.size());
    for (std::size_t i = 0; i < premises.size(); ++i) {
      workers.emplace_back([&, i] {
        Tape<Scalar> local(false);
        values[i] = stack.f_e_v(local, premises[i], hypothesis).values.value();
      });
    }
  }
  for (auto& v : values) out.push_back({t.constant(std::move(v))});
  return out;
}

/// Contextualizer and scoring head that sit on top of the sentence vectors.
template <typename Scalar>
struct RelevanceHead {
  BiLstm<Scalar> context;   // over the sentence sequence, d_final -> 2 d_rel
  Affine<Scalar> adapter;   // used when contextualization is skipped
  Affine<Scalar> scorer;    // 2 d_rel -> 1

  RelevanceHead(const std::string& name, int d_final, int d_rel, Rng& rng)
      : context(name + ".context", d_final, d_rel, rng),
        adapter(name + ".adapter", d_final, 2 * d_rel, rng),
        scorer(name + ".scorer", 2 * d_rel, 1, rng) {}

  void collect(ParameterList<Scalar>& out) {
    context.collect(out);
    adapter.collect(out);
    scorer.collect(out);
  }
};

template <typename Scalar>
Var<Scalar> stack_rows(std::span<const FinalVector<Scalar>> xs) {
  std::vector<Var<Scalar>> rows;
  rows.reserve(xs.size());
  for (const auto& x : xs) rows.push_back(x.values);
  return concat_rows(std::span<const Var<Scalar>>(rows));
}

/// c_i for every sentence, as an n x 2 d_rel matrix. Contiguous passages
/// run a BiLSTM over the sentence sequence; otherwise each x_i passes
/// through the affine adapter independently.
template <typename Scalar>
Var<Scalar> contextualize(Tape<Scalar>& t, std::span<const FinalVector<Scalar>> x, bool contiguous,
                          const RelevanceHead<Scalar>& head) {
  if (x.empty()) throw ShapeError("contextualize: no sentences");
  Var<Scalar> stacked = stack_rows(x);
  if (contiguous) return head.context(stacked, Mask(x.size(), true));
  return head.adapter(t, stacked);
}

/// alpha = softmax(W^T c_i + b) over sentences.
template <typename Scalar>
RelevanceWeights<Scalar> relevance_weights(Tape<Scalar>& t, Var<Scalar> c, const Affine<Scalar>& scorer) {
  if (c.rows() < 1) throw ShapeError("relevance_weights: no sentences");
  return RelevanceWeights<Scalar>::from_logits(transpose(scorer(t, c)));
}

inline constexpr double kRelevanceClamp = 1e-7;

/// -(1/n) sum_i [y_i log a_i + (1 - y_i) log(1 - a_i)] with a clamped to
/// [eps, 1 - eps].
template <typename Scalar>
Var<Scalar> relevance_loss_bce(const RelevanceWeights<Scalar>& alpha, std::span<const int> y) {
  if (static_cast<Eigen::Index>(y.size()) != alpha.size()) {
    throw ShapeError("relevance_loss_bce: " + std::to_string(y.size()) + " labels for " +
                     std::to_string(alpha.size()) + " sentences");
  }
  Var<Scalar> a = alpha.values();
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> pos(1, a.cols()), neg(1, a.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    pos(0, i) = static_cast<Scalar>(y[static_cast<std::size_t>(i)]);
    neg(0, i) = Scalar(1) - pos(0, i);
  }
  const auto eps = static_cast<Scalar>(kRelevanceClamp);
  Var<Scalar> ac = clamp(a, eps, Scalar(1) - eps);
  Var<Scalar> ll = add(cwise_product(log(ac), t.constant(pos)),
                       cwise_product(log(affine(ac, Scalar(-1), Scalar(1))), t.constant(neg)));
  return affine(sum(ll), Scalar(-1) / static_cast<Scalar>(a.cols()));
}

/// sum_i a_i (1 - y_i): probability mass on irrelevant sentences.
template <typename Scalar>
Var<Scalar> relevance_loss_irsum(const RelevanceWeights<Scalar>& alpha, std::span<const int> y) {
  if (static_cast<Eigen::Index>(y.size()) != alpha.size()) {
    throw ShapeError("relevance_loss_irsum: " + std::to_string(y.size()) + " labels for " +
                     std::to_string(alpha.size()) + " sentences");
  }
  Var<Scalar> a = alpha.values();
  Matrix<Scalar> irrelevant(1, a.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    irrelevant(0, i) = Scalar(1) - static_cast<Scalar>(y[static_cast<std::size_t>(i)]);
  }
  return sum(cwise_product(a, a.tape->constant(irrelevant)));
}

/// Shannon entropy (nats) of a weight vector.
template <typename Scalar>
double entropy(const Matrix<Scalar>& alpha) {
  double h = 0;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    const double a = static_cast<double>(alpha(i));
    if (a > 0) h -= a * std::log(a);
  }
  return h;
}

}  // namespace multee
