#pragma once

// Full QA wiring: relevance weights feed the cross-attention (CA) and
// final-layer (FL) sub-aggregators, whose paragraph vectors are
// concatenated and projected to one logit per answer choice. The Max and
// Concat baselines use a single entailment stack as a black box.

#include <algorithm>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "multee/joins.hpp"

namespace multee {

enum class JoinLayer { cross_attention, final_layer };
enum class RelevanceMode { learned, constant_ones, direct };
enum class ModelKind { multee, max, concat };

std::string_view to_string(JoinLayer layer);
std::string_view to_string(RelevanceMode mode);
std::string_view to_string(ModelKind kind);
JoinLayer parse_join_layer(std::string_view text);
RelevanceMode parse_relevance_mode(std::string_view text);
ModelKind parse_model_kind(std::string_view text);

struct AggregatorConfig {
  std::vector<JoinLayer> join_layers = {JoinLayer::cross_attention, JoinLayer::final_layer};
  RelevanceMode use_relevance = RelevanceMode::learned;
  bool share_below_min_join = true;
  /// Encode contiguous passages as one sequence before splitting into
  /// sentences.
  bool paragraph_encoding = false;

  bool has(JoinLayer layer) const {
    return std::find(join_layers.begin(), join_layers.end(), layer) != join_layers.end();
  }
  void validate() const;
  bool operator==(const AggregatorConfig&) const = default;
};

struct ModelConfig {
  ModelKind kind = ModelKind::multee;
  StackDims dims;
  AggregatorConfig aggregator;
  int max_concat_tokens = 400;
  std::uint64_t init_seed = 1;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

inline int relevance_width(const StackDims& dims) { return dims.d_final() / 2; }

/// Score of one (question, choice) pair.
template <typename Scalar>
struct ChoiceScore {
  Var<Scalar> logit;                      // 1 x 1
  Var<Scalar> probability;                // 1 x 1, in [0, 1]
  std::vector<Var<Scalar>> paragraph;     // Y^CA then Y^FL, as configured
  std::optional<RelevanceWeights<Scalar>> alpha;
  std::optional<JoinedCrossAttention<Scalar>> joined;
};

/// Per-choice outputs of one example.
template <typename Scalar>
struct QaForward {
  Var<Scalar> logits;  // 1 x k, softmax-normalized for single-correct tasks
  Var<Scalar> probs;   // 1 x k, independent probabilities for multi-label tasks
  std::vector<ChoiceScore<Scalar>> choices;
};

struct Prediction {
  std::vector<double> scores;
  std::vector<int> predicted;
};

inline constexpr double kDecisionThreshold = 0.5;

template <typename Scalar>
class QaModel {
 public:
  explicit QaModel(ModelConfig config) : config_(std::move(config)) { config_.validate(); }
  virtual ~QaModel() = default;
  QaModel(const QaModel&) = delete;
  QaModel& operator=(const QaModel&) = delete;

  virtual ChoiceScore<Scalar> forward(Tape<Scalar>& t, const QAExample& ex, int choice) const = 0;

  /// Every trainable parameter exactly once, in a fixed order.
  virtual ParameterList<Scalar> parameters() const = 0;
  /// Word-embedding tables (frozen during fine-tuning when configured).
  virtual ParameterList<Scalar> embedding_parameters() const = 0;
  /// Initializes every entailment-stack copy from pre-trained weights.
  virtual void load_pretrained(const EntailmentStack<Scalar>& pretrained) = 0;

  QaForward<Scalar> forward_example(Tape<Scalar>& t, const QAExample& ex) const {
    if (ex.num_choices() < 2) throw ShapeError("need at least two choices");
    QaForward<Scalar> out;
    std::vector<Var<Scalar>> logits, probs;
    for (std::size_t c = 0; c < ex.num_choices(); ++c) {
      out.choices.push_back(forward(t, ex, static_cast<int>(c)));
      logits.push_back(out.choices.back().logit);
      probs.push_back(out.choices.back().probability);
    }
    out.logits = concat_cols(std::span<const Var<Scalar>>(logits));
    out.probs = concat_cols(std::span<const Var<Scalar>>(probs));
    return out;
  }

  Prediction predict(const QAExample& ex) const {
    Tape<Scalar> t(false);
    return prediction_from(forward_example(t, ex), ex);
  }

  /// Softmax-normalized scores and argmax for single-correct tasks,
  /// independent probabilities thresholded at 0.5 otherwise.
  static Prediction prediction_from(const QaForward<Scalar>& f, const QAExample& ex) {
    Prediction p;
    if (ex.task_type == TaskType::single_correct) {
      const Matrix<Scalar> s = softmax_row(f.logits).value();
      int best = 0;
      for (Eigen::Index i = 0; i < s.cols(); ++i) {
        p.scores.push_back(static_cast<double>(s(0, i)));
        if (s(0, i) > s(0, best)) best = static_cast<int>(i);
      }
      p.predicted = {best};
    } else {
      const Matrix<Scalar>& s = f.probs.value();
      for (Eigen::Index i = 0; i < s.cols(); ++i) {
        p.scores.push_back(static_cast<double>(s(0, i)));
        if (p.scores.back() >= kDecisionThreshold) p.predicted.push_back(static_cast<int>(i));
      }
    }
    return p;
  }

  const ModelConfig& config() const { return config_; }

 protected:
  ModelConfig config_;
};

namespace detail {

template <typename Scalar>
void dedupe_append(ParameterList<Scalar>& out, const ParameterList<Scalar>& more) {
  for (auto* p : more) {
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  }
}

/// Per-premise encodings, optionally computed over the whole passage.
template <typename Scalar>
std::vector<EncodedSeq<Scalar>> encode_premises(Tape<Scalar>& t, const EntailmentStack<Scalar>& stack,
                                                const QAExample& ex, bool paragraph) {
  std::vector<EncodedSeq<Scalar>> out;
  if (!paragraph || !ex.contiguous || ex.premises.size() == 1) {
    for (const auto& p : ex.premises) out.push_back(stack.encode_tokens(t, p));
    return out;
  }
  TokenSeq passage;
  for (const auto& p : ex.premises) {
    passage.tokens.insert(passage.tokens.end(), p.tokens.begin(), p.tokens.end());
    passage.ids.insert(passage.ids.end(), p.ids.begin(), p.ids.end());
  }
  EncodedSeq<Scalar> whole = stack.encode_tokens(t, passage);
  Eigen::Index off = 0;
  for (const auto& p : ex.premises) {
    const auto len = static_cast<Eigen::Index>(p.size());
    Mask m(whole.mask.begin() + off, whole.mask.begin() + off + len);
    out.push_back({slice_rows(whole.values, off, len), std::move(m)});
    off += len;
  }
  return out;
}

template <typename Scalar>
Var<Scalar> logit_of_probability(Var<Scalar> p) {
  return log(clamp(p, static_cast<Scalar>(kRelevanceClamp), Scalar(1)));
}

}  // namespace detail

template <typename Scalar>
class MulteeModel : public QaModel<Scalar> {
 public:
  MulteeModel(const ModelConfig& config, Rng& rng) : QaModel<Scalar>(config) {
    const auto& agg = this->config_.aggregator;
    const StackDims& d = this->config_.dims;
    if (agg.use_relevance != RelevanceMode::constant_ones) {
      relevance_stack_ = EntailmentStack<Scalar>::create(
          "relevance", d, rng, agg.use_relevance == RelevanceMode::direct);
    }
    if (agg.use_relevance == RelevanceMode::learned) {
      relevance_head_ = std::make_unique<RelevanceHead<Scalar>>("relevance", d.d_final(), relevance_width(d), rng);
    }
    const bool ca = agg.has(JoinLayer::cross_attention);
    const bool fl = agg.has(JoinLayer::final_layer);
    if (ca) ca_stack_ = EntailmentStack<Scalar>::create("ca", d, rng, false);
    if (fl) fl_stack_ = EntailmentStack<Scalar>::create("fl", d, rng, false);
    if (ca && fl && agg.share_below_min_join) {
      // Layers up to and including cross attention (the lowest join) are
      // one object used by both sub-aggregators.
      fl_stack_->embedding = ca_stack_->embedding;
      fl_stack_->encoder = ca_stack_->encoder;
    }
    const int joined = static_cast<int>(agg.join_layers.size()) * d.d_final();
    hidden_ = std::make_unique<Affine<Scalar>>("head.hidden", joined, d.d_final(), rng);
    output_ = std::make_unique<Affine<Scalar>>("head.output", d.d_final(), 1, rng);
  }

  const std::optional<EntailmentStack<Scalar>>& relevance_stack() const { return relevance_stack_; }
  const std::optional<EntailmentStack<Scalar>>& ca_aggregator() const { return ca_stack_; }
  const std::optional<EntailmentStack<Scalar>>& fl_aggregator() const { return fl_stack_; }
  const RelevanceHead<Scalar>* relevance_head() const { return relevance_head_.get(); }

  /// Relevance weights of every premise for one choice's hypothesis.
  RelevanceWeights<Scalar> relevance(Tape<Scalar>& t, const QAExample& ex, int choice) const {
    const auto& agg = this->config_.aggregator;
    const TokenSeq& h = ex.hypotheses.at(static_cast<std::size_t>(choice));
    const auto n = static_cast<Eigen::Index>(ex.premises.size());
    if (agg.use_relevance == RelevanceMode::constant_ones) {
      return RelevanceWeights<Scalar>::constant_ones(t, n);
    }
    const auto& stack = *relevance_stack_;
    const auto enc_h = stack.encode_tokens(t, h);
    const auto enc_p = detail::encode_premises(t, stack, ex, agg.paragraph_encoding);
    std::vector<FinalVector<Scalar>> x;
    for (const auto& p : enc_p) x.push_back(compose_and_pool(cross_attend(p, enc_h), *stack.composer));
    if (agg.use_relevance == RelevanceMode::direct) {
      std::vector<Var<Scalar>> probs;
      for (const auto& v : x) {
        probs.push_back(element(stack.classify(t, v).probs, 0, static_cast<int>(EntailmentLabel::entailment)));
      }
      return RelevanceWeights<Scalar>::direct(concat_cols(std::span<const Var<Scalar>>(probs)));
    }
    Var<Scalar> c = contextualize(t, std::span<const FinalVector<Scalar>>(x), ex.contiguous, *relevance_head_);
    return relevance_weights(t, c, relevance_head_->scorer);
  }

  ChoiceScore<Scalar> forward(Tape<Scalar>& t, const QAExample& ex, int choice) const override {
    if (choice < 0 || static_cast<std::size_t>(choice) >= ex.hypotheses.size()) {
      throw IndexError("choice index " + std::to_string(choice) + " out of range");
    }
    if (ex.premises.empty()) throw ShapeError("example has no premises");
    const auto& agg = this->config_.aggregator;
    const TokenSeq& h = ex.hypotheses[static_cast<std::size_t>(choice)];

    ChoiceScore<Scalar> out;
    RelevanceWeights<Scalar> alpha = relevance(t, ex, choice);

    // Sentence-level layers below the lowest join.
    struct Lower {
      std::vector<CrossAttentionOutput<Scalar>> atts;
    };
    auto lower = [&](const EntailmentStack<Scalar>& s) {
      Lower l;
      const auto enc_h = s.encode_tokens(t, h);
      for (const auto& p : detail::encode_premises(t, s, ex, agg.paragraph_encoding)) {
        l.atts.push_back(cross_attend(p, enc_h));
      }
      return l;
    };
    std::optional<Lower> ca_lower, fl_lower;
    if (ca_stack_) ca_lower = lower(*ca_stack_);
    if (fl_stack_) {
      const bool shared = ca_stack_ && fl_stack_->encoder == ca_stack_->encoder &&
                          fl_stack_->embedding == ca_stack_->embedding;
      fl_lower = shared ? ca_lower : lower(*fl_stack_);
    }

    for (JoinLayer layer : agg.join_layers) {
      if (layer == JoinLayer::cross_attention) {
        auto joined = join_cross_attention(std::span<const CrossAttentionOutput<Scalar>>(ca_lower->atts), alpha);
        out.paragraph.push_back(compose_joined(joined, *ca_stack_->composer).values);
        out.joined = std::move(joined);
      } else {
        std::vector<FinalVector<Scalar>> hs;
        for (const auto& a : fl_lower->atts) hs.push_back(compose_and_pool(a, *fl_stack_->composer));
        out.paragraph.push_back(join_final(std::span<const FinalVector<Scalar>>(hs), alpha).values);
      }
    }
    Var<Scalar> y = out.paragraph.size() == 1
                        ? out.paragraph[0]
                        : concat_cols(std::span<const Var<Scalar>>(out.paragraph));
    out.logit = (*output_)(t, tanh((*hidden_)(t, y)));
    out.probability = sigmoid(out.logit);
    out.alpha = alpha;
    return out;
  }

  /// The joined hypothesis-to-passage attention of one choice, computed
  /// from whichever sub-aggregator is configured (CA preferred).
  JoinedCrossAttention<Scalar> joined_attention(Tape<Scalar>& t, const QAExample& ex, int choice) const {
    const auto& s = ca_stack_ ? *ca_stack_ : *fl_stack_;
    const auto enc_h = s.encode_tokens(t, ex.hypotheses.at(static_cast<std::size_t>(choice)));
    std::vector<CrossAttentionOutput<Scalar>> atts;
    for (const auto& p : detail::encode_premises(t, s, ex, this->config_.aggregator.paragraph_encoding)) {
      atts.push_back(cross_attend(p, enc_h));
    }
    return join_cross_attention(std::span<const CrossAttentionOutput<Scalar>>(atts), relevance(t, ex, choice));
  }

  ParameterList<Scalar> parameters() const override {
    ParameterList<Scalar> out;
    if (relevance_stack_) detail::dedupe_append(out, relevance_stack_->parameters());
    if (relevance_head_) {
      ParameterList<Scalar> head;
      relevance_head_->collect(head);
      detail::dedupe_append(out, head);
    }
    if (ca_stack_) detail::dedupe_append(out, ca_stack_->parameters());
    if (fl_stack_) detail::dedupe_append(out, fl_stack_->parameters());
    ParameterList<Scalar> head;
    hidden_->collect(head);
    output_->collect(head);
    detail::dedupe_append(out, head);
    return out;
  }

  ParameterList<Scalar> embedding_parameters() const override {
    ParameterList<Scalar> out;
    for (const auto* s : {&relevance_stack_, &ca_stack_, &fl_stack_}) {
      if (*s) detail::dedupe_append(out, {&(*s)->embedding->table});
    }
    return out;
  }

  void load_pretrained(const EntailmentStack<Scalar>& pre) override {
    if (!(pre.dims == this->config_.dims)) throw CheckpointError("pre-trained stack dimensions differ");
    auto copy_stack = [&pre](EntailmentStack<Scalar>& s) {
      s.embedding->table.value = pre.embedding->table.value;
      ParameterList<Scalar> from, to;
      pre.encoder->collect(from);
      pre.composer->collect(from);
      s.encoder->collect(to);
      s.composer->collect(to);
      copy_values(from, to);
      if (s.classifier && pre.classifier) {
        copy_values(ParameterList<Scalar>{&pre.classifier->weight, &pre.classifier->bias},
                    ParameterList<Scalar>{&s.classifier->weight, &s.classifier->bias});
      }
    };
    if (relevance_stack_) copy_stack(*relevance_stack_);
    if (ca_stack_) copy_stack(*ca_stack_);
    if (fl_stack_) copy_stack(*fl_stack_);
  }

 private:
  std::optional<EntailmentStack<Scalar>> relevance_stack_;
  std::unique_ptr<RelevanceHead<Scalar>> relevance_head_;
  std::optional<EntailmentStack<Scalar>> ca_stack_;
  std::optional<EntailmentStack<Scalar>> fl_stack_;
  std::unique_ptr<Affine<Scalar>> hidden_;
  std::unique_ptr<Affine<Scalar>> output_;
};

/// Shared plumbing of the two black-box baselines.
template <typename Scalar>
class BaselineModel : public QaModel<Scalar> {
 public:
  BaselineModel(const ModelConfig& config, Rng& rng)
      : QaModel<Scalar>(config), stack_(EntailmentStack<Scalar>::create("stack", config.dims, rng, true)) {}

  const EntailmentStack<Scalar>& stack() const { return stack_; }

  ParameterList<Scalar> parameters() const override { return stack_.parameters(); }
  ParameterList<Scalar> embedding_parameters() const override { return {&stack_.embedding->table}; }

  void load_pretrained(const EntailmentStack<Scalar>& pre) override {
    if (!(pre.dims == this->config_.dims)) throw CheckpointError("pre-trained stack dimensions differ");
    copy_values(pre.parameters(), stack_.parameters());
  }

 protected:
  Var<Scalar> entailment_probability(Tape<Scalar>& t, const TokenSeq& p, const TokenSeq& h) const {
    return element(stack_.f_e_p(t, p, h).probs, 0, static_cast<int>(EntailmentLabel::entailment));
  }

  ChoiceScore<Scalar> from_probability(Var<Scalar> p) const {
    ChoiceScore<Scalar> out;
    out.probability = p;
    out.logit = detail::logit_of_probability(p);
    return out;
  }

  EntailmentStack<Scalar> stack_;
};

/// max_i f_e(P_i, H).
template <typename Scalar>
class MaxBaseline : public BaselineModel<Scalar> {
 public:
  using BaselineModel<Scalar>::BaselineModel;

  /// Per-premise entailment probabilities as a 1 x n row.
  Var<Scalar> premise_scores(Tape<Scalar>& t, const QAExample& ex, int choice) const {
    const TokenSeq& h = ex.hypotheses.at(static_cast<std::size_t>(choice));
    std::vector<Var<Scalar>> s;
    for (const auto& p : ex.premises) s.push_back(this->entailment_probability(t, p, h));
    return concat_cols(std::span<const Var<Scalar>>(s));
  }

  ChoiceScore<Scalar> forward(Tape<Scalar>& t, const QAExample& ex, int choice) const override {
    if (ex.premises.empty()) throw ShapeError("example has no premises");
    return this->from_probability(max_element(premise_scores(t, ex, choice)));
  }
};

struct ConcatenatedPremises {
  TokenSeq tokens;
  bool truncated = false;
};

/// Premises joined in order with one separator token between sentences
/// (none when `separator_id` is negative), truncated at the tail to
/// `max_tokens`.
ConcatenatedPremises concatenate_premises(const std::vector<TokenSeq>& premises, int separator_id,
                                          int max_tokens);

/// f_e(P_1 ... P_n, H) on the concatenated passage.
template <typename Scalar>
class ConcatBaseline : public BaselineModel<Scalar> {
 public:
  ConcatBaseline(const ModelConfig& config, Rng& rng, int separator_id)
      : BaselineModel<Scalar>(config, rng), separator_id_(separator_id) {}

  ChoiceScore<Scalar> forward(Tape<Scalar>& t, const QAExample& ex, int choice) const override {
    if (ex.premises.empty()) throw ShapeError("example has no premises");
    ConcatenatedPremises passage =
        concatenate_premises(ex.premises, separator_id_, this->config_.max_concat_tokens);
    if (passage.truncated) {
      std::clog << "warning: TruncationWarning: concatenated premises exceed "
                << this->config_.max_concat_tokens << " tokens; tail truncated\n";
    }
    return this->from_probability(
        this->entailment_probability(t, passage.tokens, ex.hypotheses.at(static_cast<std::size_t>(choice))));
  }

 private:
  int separator_id_;
};

template <typename Scalar>
std::unique_ptr<QaModel<Scalar>> make_model(const ModelConfig& config, const Vocabulary& vocab) {
  Rng rng(config.init_seed);
  switch (config.kind) {
    case ModelKind::multee: return std::make_unique<MulteeModel<Scalar>>(config, rng);
    case ModelKind::max: return std::make_unique<MaxBaseline<Scalar>>(config, rng);
    case ModelKind::concat:
      return std::make_unique<ConcatBaseline<Scalar>>(config, rng, vocab.id(kSentenceSeparator));
  }
  throw ConfigError("unknown model kind");
}

}  // namespace multee
