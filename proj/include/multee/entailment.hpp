#pragma once

// Sentence-pair entailment function with every layer exposed, so joins can
// splice in at any level.

#include <memory>
#include <vector>

#include "multee/layers.hpp"

namespace multee {

struct StackDims {
  int vocab_size = 0;
  int d_emb = 64;
  int d_hidden = 64;
  int num_labels = kNumEntailmentLabels;

  int d_ctx() const { return 2 * d_hidden; }
  int d_final() const { return 4 * d_ctx(); }
  bool operator==(const StackDims&) const = default;
};

template <typename Scalar>
struct EmbeddedSeq {
  Var<Scalar> values;  // tokens x d_emb
  Mask mask;
};

template <typename Scalar>
struct EncodedSeq {
  Var<Scalar> values;  // tokens x d_ctx
  Mask mask;
};

template <typename Scalar>
struct CrossAttentionOutput {
  Var<Scalar> m_hp;  // hypothesis x premise, rows stochastic over premise
  Var<Scalar> m_ph;  // premise x hypothesis, rows stochastic over hypothesis
  EncodedSeq<Scalar> premise;
  EncodedSeq<Scalar> hypothesis;
};

template <typename Scalar>
struct FinalVector {
  Var<Scalar> values;  // 1 x d_final
};

template <typename Scalar>
struct EntailmentOutput {
  Var<Scalar> logits;  // 1 x num_labels
  Var<Scalar> probs;
};

inline Mask mask_of(const TokenSeq& seq) {
  Mask m(seq.ids.size());
  for (std::size_t i = 0; i < seq.ids.size(); ++i) m[i] = seq.ids[i] != kPaddingId;
  return m;
}

template <typename Scalar>
EmbeddedSeq<Scalar> embed(Tape<Scalar>& t, const TokenSeq& seq, const Embedding<Scalar>& table) {
  // Padding-only input is legal for the lookup itself; the layers above
  // require at least one real token.
  return {lookup_rows(t, table.table, std::span<const int>(seq.ids), kPaddingId), mask_of(seq)};
}

template <typename Scalar>
EncodedSeq<Scalar> encode(const EmbeddedSeq<Scalar>& x, const BiLstm<Scalar>& encoder) {
  return {encoder(x.values, x.mask), x.mask};
}

/// Dot-product similarity and masked softmax in both directions.
template <typename Scalar>
CrossAttentionOutput<Scalar> cross_attend(const EncodedSeq<Scalar>& p, const EncodedSeq<Scalar>& h) {
  if (p.values.cols() != h.values.cols()) throw ShapeError("cross_attend: context widths differ");
  Var<Scalar> sim = matmul(h.values, transpose(p.values));  // h x p
  Var<Scalar> m_hp = masked_softmax_rows(sim, p.mask, h.mask);
  Var<Scalar> m_ph = masked_softmax_rows(transpose(sim), h.mask, p.mask);
  return {m_hp, m_ph, p, h};
}

/// [a; a~; a - a~; a * a~] for every position of one side.
template <typename Scalar>
Var<Scalar> enhance(Var<Scalar> side, Var<Scalar> attended) {
  return concat_cols({side, attended, sub(side, attended), cwise_product(side, attended)});
}

/// Local enhancement, composition BiLSTM per side, masked average and max
/// pooling, concatenated as [avg_p; max_p; avg_h; max_h].
template <typename Scalar>
FinalVector<Scalar> compose_and_pool(const CrossAttentionOutput<Scalar>& att,
                                     const BiLstm<Scalar>& composer) {
  Var<Scalar> p_att = matmul(att.m_ph, att.hypothesis.values);  // premise attends hypothesis
  Var<Scalar> h_att = matmul(att.m_hp, att.premise.values);     // hypothesis attends premise
  Var<Scalar> p_comp = composer(enhance(att.premise.values, p_att), att.premise.mask);
  Var<Scalar> h_comp = composer(enhance(att.hypothesis.values, h_att), att.hypothesis.mask);
  return {concat_cols({masked_mean_rows(p_comp, att.premise.mask),
                       masked_max_rows(p_comp, att.premise.mask),
                       masked_mean_rows(h_comp, att.hypothesis.mask),
                       masked_max_rows(h_comp, att.hypothesis.mask)})};
}

/// One copy of the entailment function. Layers are held by shared_ptr so
/// that copies can share lower layers as literal objects.
template <typename Scalar>
struct EntailmentStack {
  StackDims dims;
  std::shared_ptr<Embedding<Scalar>> embedding;
  std::shared_ptr<BiLstm<Scalar>> encoder;
  std::shared_ptr<BiLstm<Scalar>> composer;
  std::shared_ptr<Affine<Scalar>> classifier;  // absent on vector-only copies

  static EntailmentStack create(const std::string& name, const StackDims& dims, Rng& rng,
                                bool with_classifier = true) {
    EntailmentStack s;
    s.dims = dims;
    s.embedding = std::make_shared<Embedding<Scalar>>(name + ".embedding", dims.vocab_size, dims.d_emb, rng);
    s.encoder = std::make_shared<BiLstm<Scalar>>(name + ".encoder", dims.d_emb, dims.d_hidden, rng);
    s.composer = std::make_shared<BiLstm<Scalar>>(name + ".composer", 4 * dims.d_ctx(), dims.d_hidden, rng);
    if (with_classifier) {
      s.classifier = std::make_shared<Affine<Scalar>>(name + ".classifier", dims.d_final(), dims.num_labels, rng);
    }
    return s;
  }

  EncodedSeq<Scalar> encode_tokens(Tape<Scalar>& t, const TokenSeq& seq) const {
    return encode(embed(t, seq, *embedding), *encoder);
  }

  FinalVector<Scalar> f_e_v(Tape<Scalar>& t, const TokenSeq& p, const TokenSeq& h) const {
    return compose_and_pool(cross_attend(encode_tokens(t, p), encode_tokens(t, h)), *composer);
  }

  /// Affine projection + softmax over the label set.
  EntailmentOutput<Scalar> classify(Tape<Scalar>& t, const FinalVector<Scalar>& v) const {
    if (!classifier) throw ConfigError("entailment stack has no classifier head");
    Var<Scalar> logits = (*classifier)(t, v.values);
    return {logits, softmax_row(logits)};
  }

  EntailmentOutput<Scalar> f_e_p(Tape<Scalar>& t, const TokenSeq& p, const TokenSeq& h) const {
    return classify(t, f_e_v(t, p, h));
  }

  /// Parameters in a fixed order: embedding, encoder, composer, classifier.
  ParameterList<Scalar> parameters() const {
    ParameterList<Scalar> out;
    embedding->collect(out);
    encoder->collect(out);
    composer->collect(out);
    if (classifier) classifier->collect(out);
    return out;
  }
};

}  // namespace multee
