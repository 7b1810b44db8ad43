#pragma once

// Join operations: merge sentence-level layer outputs, weighted by the
// relevance weights, into one paragraph-level output for the layer above.

#include <span>
#include <utility>
#include <vector>

#include "multee/relevance.hpp"

namespace multee {

inline constexpr double kJoinRenormEpsilon = 1e-12;

template <typename Scalar>
struct JoinedCrossAttention : CrossAttentionOutput<Scalar> {
  /// Start offset of every premise segment, followed by the total length.
  std::vector<Eigen::Index> premise_boundaries;
};

namespace detail {

template <typename Scalar>
void require_count(std::size_t n, const RelevanceWeights<Scalar>& alpha, const char* op) {
  if (n == 0 || static_cast<Eigen::Index>(n) != alpha.size()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(n) + " inputs for " +
                     std::to_string(alpha.size()) + " relevance weights");
  }
}

}  // namespace detail

/// max_i(alpha_i * s_i) over a 1 x n row of entailment probabilities.
template <typename Scalar>
Var<Scalar> join_score(Var<Scalar> s, const RelevanceWeights<Scalar>& alpha) {
  if (s.rows() != 1) throw ShapeError("join_score: scores must be a single row");
  detail::require_count(static_cast<std::size_t>(s.cols()), alpha, "join_score");
  return max_element(cwise_product(s, alpha.values()));
}

/// Scales every premise token vector by its premise weight and
/// concatenates the premises in order; the hypothesis passes unchanged.
template <typename Scalar>
std::pair<EmbeddedSeq<Scalar>, EmbeddedSeq<Scalar>> join_embedding(
    std::span<const EmbeddedSeq<Scalar>> premises, const EmbeddedSeq<Scalar>& hypothesis,
    const RelevanceWeights<Scalar>& alpha) {
  detail::require_count(premises.size(), alpha, "join_embedding");
  std::vector<Var<Scalar>> parts;
  Mask mask;
  for (std::size_t i = 0; i < premises.size(); ++i) {
    if (premises[i].values.cols() != hypothesis.values.cols()) {
      throw ShapeError("join_embedding: embedding width mismatch at premise " + std::to_string(i));
    }
    parts.push_back(scale_by_element(premises[i].values, alpha.values(), static_cast<Eigen::Index>(i)));
    mask.insert(mask.end(), premises[i].mask.begin(), premises[i].mask.end());
  }
  return {EmbeddedSeq<Scalar>{concat_rows(std::span<const Var<Scalar>>(parts)), std::move(mask)},
          hypothesis};
}

/// sum_i alpha_i h_i.
template <typename Scalar>
FinalVector<Scalar> join_final(std::span<const FinalVector<Scalar>> h, const RelevanceWeights<Scalar>& alpha) {
  detail::require_count(h.size(), alpha, "join_final");
  for (const auto& v : h) {
    if (v.values.rows() != 1 || v.values.cols() != h[0].values.cols()) {
      throw ShapeError("join_final: sentence vectors differ in length");
    }
  }
  return {matmul(alpha.values(), stack_rows(h))};
}

/// Column-concatenates alpha_i * M^{hp_i} and renormalizes every row:
/// M_ij <- M_ij / (sum_k M_ik + eps). Premise vectors are concatenated
/// unscaled; the premise-to-hypothesis matrices are kept per segment.
template <typename Scalar>
JoinedCrossAttention<Scalar> join_cross_attention(std::span<const CrossAttentionOutput<Scalar>> atts,
                                                  const RelevanceWeights<Scalar>& alpha) {
  detail::require_count(atts.size(), alpha, "join_cross_attention");
  const Eigen::Index h = atts[0].m_hp.rows();
  const Eigen::Index width = atts[0].hypothesis.values.cols();
  std::vector<Var<Scalar>> scaled, premise_vecs, reverse;
  JoinedCrossAttention<Scalar> out;
  Mask premise_mask;
  Eigen::Index offset = 0;
  for (std::size_t i = 0; i < atts.size(); ++i) {
    const auto& a = atts[i];
    if (a.m_hp.rows() != h || a.hypothesis.values.rows() != h) {
      throw ShapeError("join_cross_attention: hypothesis length differs at premise " + std::to_string(i));
    }
    if (a.hypothesis.values.id != atts[0].hypothesis.values.id &&
        a.hypothesis.values.value() != atts[0].hypothesis.values.value()) {
      throw ShapeError("join_cross_attention: premises were attended against different hypotheses");
    }
    if (a.premise.values.cols() != width) throw ShapeError("join_cross_attention: width mismatch");
    scaled.push_back(scale_by_element(a.m_hp, alpha.values(), static_cast<Eigen::Index>(i)));
    premise_vecs.push_back(a.premise.values);
    reverse.push_back(a.m_ph);
    premise_mask.insert(premise_mask.end(), a.premise.mask.begin(), a.premise.mask.end());
    out.premise_boundaries.push_back(offset);
    offset += a.premise.values.rows();
  }
  out.premise_boundaries.push_back(offset);
  out.m_hp = normalize_rows(concat_cols(std::span<const Var<Scalar>>(scaled)),
                            static_cast<Scalar>(kJoinRenormEpsilon));
  out.m_ph = concat_rows(std::span<const Var<Scalar>>(reverse));
  out.premise = {concat_rows(std::span<const Var<Scalar>>(premise_vecs)), std::move(premise_mask)};
  out.hypothesis = atts[0].hypothesis;
  return out;
}

/// compose_and_pool over the joined structure. The composer runs over each
/// premise segment separately, so the paragraph vector does not depend on
/// premise order; pooling spans all premise tokens.
template <typename Scalar>
FinalVector<Scalar> compose_joined(const JoinedCrossAttention<Scalar>& att, const BiLstm<Scalar>& composer) {
  const auto& bounds = att.premise_boundaries;
  if (bounds.size() < 2) throw ShapeError("compose_joined: no premise segments");
  Var<Scalar> p_att = matmul(att.m_ph, att.hypothesis.values);
  Var<Scalar> h_att = matmul(att.m_hp, att.premise.values);
  Var<Scalar> p_enh = enhance(att.premise.values, p_att);
  std::vector<Var<Scalar>> segments;
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
    const Eigen::Index len = bounds[i + 1] - bounds[i];
    Mask m(att.premise.mask.begin() + bounds[i], att.premise.mask.begin() + bounds[i + 1]);
    segments.push_back(composer(slice_rows(p_enh, bounds[i], len), m));
  }
  Var<Scalar> p_comp = segments.size() == 1 ? segments[0] : concat_rows(std::span<const Var<Scalar>>(segments));
  Var<Scalar> h_comp = composer(enhance(att.hypothesis.values, h_att), att.hypothesis.mask);
  return {concat_cols({masked_mean_rows(p_comp, att.premise.mask), masked_max_rows(p_comp, att.premise.mask),
                       masked_mean_rows(h_comp, att.hypothesis.mask),
                       masked_max_rows(h_comp, att.hypothesis.mask)})};
}

}  // namespace multee
