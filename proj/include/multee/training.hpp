#pragma once

// NLI pre-training and QA fine-tuning. Every example of a batch is run on
// its own tape; gradients are summed in example order so that training is
// bit-reproducible for a given seed whatever the thread count.

#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "multee/metrics.hpp"
#include "multee/model.hpp"
#include "multee/parallel.hpp"

namespace multee {

enum class RelevanceLoss { none, bce, irsum };

std::string_view to_string(RelevanceLoss loss);
RelevanceLoss parse_relevance_loss(std::string_view text);

struct TrainConfig {
  TaskType task_type = TaskType::single_correct;
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 13;
  RelevanceLoss relevance_loss = RelevanceLoss::none;
  double relevance_lambda = 1.0;
  bool freeze_embeddings = true;
  /// "scratch" or a path to a pre-trained entailment-stack checkpoint.
  std::string init = "scratch";
  int patience = 5;
  double clip_norm = 5.0;
  int threads = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double dev_loss = 0;
  double dev_metric = 0;
  double best_dev_loss = 0;  // running minimum of dev_loss
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_metric = 0;
  std::string checkpoint_path;
  std::uint64_t seed = 0;
  TrainConfig config;
};

inline constexpr double kProbabilityClamp = 1e-7;

/// Cross entropy of softmax(logits) against the gold index; logits is 1 x k.
template <typename Scalar>
Var<Scalar> loss_single_correct(Var<Scalar> logits, int gold) {
  if (logits.rows() != 1 || logits.cols() < 2) throw ShapeError("loss_single_correct: need a row of >= 2 logits");
  if (gold < 0 || gold >= logits.cols()) {
    throw IndexError("gold index " + std::to_string(gold) + " out of range for " +
                     std::to_string(logits.cols()) + " choices");
  }
  return affine(element(log_softmax_row(logits), 0, gold), Scalar(-1));
}

/// Mean binary cross entropy of independent choice probabilities against
/// membership in the gold set.
template <typename Scalar>
Var<Scalar> loss_multi_label(Var<Scalar> probs, const std::vector<int>& gold) {
  if (probs.rows() != 1 || probs.cols() < 1) throw ShapeError("loss_multi_label: need a row of probabilities");
  Tape<Scalar>& t = *probs.tape;
  Matrix<Scalar> pos = Matrix<Scalar>::Zero(1, probs.cols());
  for (int g : gold) {
    if (g < 0 || g >= probs.cols()) throw IndexError("gold index " + std::to_string(g) + " out of range");
    pos(0, g) = Scalar(1);
  }
  const Matrix<Scalar> neg = Matrix<Scalar>::Ones(1, probs.cols()) - pos;
  const auto eps = static_cast<Scalar>(kProbabilityClamp);
  Var<Scalar> p = clamp(probs, eps, Scalar(1) - eps);
  Var<Scalar> ll = add(cwise_product(log(p), t.constant(pos)),
                       cwise_product(log(affine(p, Scalar(-1), Scalar(1))), t.constant(neg)));
  return affine(sum(ll), Scalar(-1) / static_cast<Scalar>(probs.cols()));
}

template <typename Scalar>
Var<Scalar> qa_loss(const QaForward<Scalar>& f, const QAExample& ex) {
  if (ex.task_type == TaskType::single_correct) return loss_single_correct(f.logits, ex.gold.at(0));
  return loss_multi_label(f.probs, ex.gold);
}

/// Mean relevance loss over the gold choices' weights.
template <typename Scalar>
Var<Scalar> relevance_loss(const QaForward<Scalar>& f, const QAExample& ex, RelevanceLoss kind) {
  if (!ex.relevance_labels) throw ConfigError("relevance loss requested for an example without relevance_labels");
  std::vector<Var<Scalar>> parts;
  const std::span<const int> y(*ex.relevance_labels);
  for (int g : ex.gold) {
    const auto& alpha = f.choices.at(static_cast<std::size_t>(g)).alpha;
    if (!alpha || alpha->kind() != RelevanceWeights<Scalar>::Kind::softmax) {
      throw ConfigError("relevance loss needs learned relevance weights");
    }
    parts.push_back(kind == RelevanceLoss::bce ? relevance_loss_bce(*alpha, y) : relevance_loss_irsum(*alpha, y));
  }
  return affine(sum(concat_cols(std::span<const Var<Scalar>>(parts))),
                Scalar(1) / static_cast<Scalar>(parts.size()));
}

struct LossParts {
  double qa = 0;
  double relevance = 0;
  double total = 0;
};

/// QA loss + lambda * relevance loss for one example.
template <typename Scalar>
Var<Scalar> total_loss(const QaForward<Scalar>& f, const QAExample& ex, const TrainConfig& config,
                       LossParts* parts = nullptr) {
  Var<Scalar> loss = qa_loss(f, ex);
  if (parts != nullptr) parts->qa = static_cast<double>(loss.value()(0, 0));
  if (config.relevance_loss != RelevanceLoss::none) {
    Var<Scalar> r = relevance_loss(f, ex, config.relevance_loss);
    if (parts != nullptr) parts->relevance = static_cast<double>(r.value()(0, 0));
    loss = add(loss, affine(r, static_cast<Scalar>(config.relevance_lambda)));
  }
  if (parts != nullptr) parts->total = static_cast<double>(loss.value()(0, 0));
  return loss;
}

/// Adaptive-moment optimizer over a fixed parameter list. Parameters not in
/// the list are never touched.
template <typename Scalar>
class Adam {
 public:
  Adam(ParameterList<Scalar> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  const ParameterList<Scalar>& parameters() const { return params_; }

  /// grads[i] pairs with parameters()[i].
  void step(const std::vector<Matrix<Scalar>>& grads) {
    ++t_;
    const auto b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
    const auto c1 = static_cast<Scalar>(1 - std::pow(beta1_, t_));
    const auto c2 = static_cast<Scalar>(1 - std::pow(beta2_, t_));
    const auto lr = static_cast<Scalar>(lr_), eps = static_cast<Scalar>(eps_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * grads[i];
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * grads[i].cwiseProduct(grads[i]);
      params_[i]->value.array() -=
          lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

 private:
  ParameterList<Scalar> params_;
  std::vector<Matrix<Scalar>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

namespace detail {

template <typename Scalar>
ParameterList<Scalar> without(const ParameterList<Scalar>& all, const ParameterList<Scalar>& excluded) {
  ParameterList<Scalar> out;
  for (auto* p : all) {
    if (std::find(excluded.begin(), excluded.end(), p) == excluded.end()) out.push_back(p);
  }
  return out;
}

/// Runs `loss_of(tape, i)` for every example of a batch, then sums the
/// per-example gradients in example order and averages them.
template <typename Scalar, typename LossFn>
double batch_step(Adam<Scalar>& opt, std::span<const std::size_t> batch, const TrainConfig& config,
                  LossFn&& loss_of) {
  const auto& params = opt.parameters();
  std::vector<std::vector<Matrix<Scalar>>> grads(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), config.threads, [&](std::size_t b) {
    Tape<Scalar> t;
    Var<Scalar> loss = loss_of(t, batch[b]);
    losses[b] = static_cast<double>(loss.value()(0, 0));
    t.backward(loss);
    const auto& store = t.gradients();
    grads[b].reserve(params.size());
    for (auto* p : params) {
      auto it = store.find(p);
      grads[b].push_back(it == store.end() ? Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()) : it->second);
    }
  });
  std::vector<Matrix<Scalar>> total = std::move(grads[0]);
  for (std::size_t b = 1; b < batch.size(); ++b) {
    for (std::size_t i = 0; i < params.size(); ++i) total[i] += grads[b][i];
  }
  const auto scale = Scalar(1) / static_cast<Scalar>(batch.size());
  double norm2 = 0;
  for (auto& g : total) {
    g *= scale;
    norm2 += static_cast<double>(g.squaredNorm());
  }
  const double norm = std::sqrt(norm2);
  if (config.clip_norm > 0 && norm > config.clip_norm) {
    const auto c = static_cast<Scalar>(config.clip_norm / norm);
    for (auto& g : total) g *= c;
  }
  opt.step(total);
  double sum = 0;
  for (double l : losses) sum += l;
  return sum;
}

template <typename Scalar>
std::vector<Matrix<Scalar>> snapshot(const ParameterList<Scalar>& params) {
  std::vector<Matrix<Scalar>> out;
  for (auto* p : params) out.push_back(p->value);
  return out;
}

template <typename Scalar>
void restore(const ParameterList<Scalar>& params, const std::vector<Matrix<Scalar>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

/// Epoch loop shared by both training entry points: shuffle, batch, step,
/// evaluate, keep the best weights, stop after `patience` epochs without a
/// dev-loss improvement.
template <typename Scalar, typename StepLoss, typename Evaluate, typename Better>
TrainReport train_loop(const ParameterList<Scalar>& all, Adam<Scalar>& opt, std::size_t n_train,
                       const TrainConfig& config, StepLoss&& step_loss, Evaluate&& evaluate, Better&& better) {
  TrainReport report;
  report.seed = config.seed;
  report.config = config;
  Rng rng(config.seed);
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
  auto best = snapshot(all);
  double best_loss = std::numeric_limits<double>::infinity();
  double best_metric_loss = std::numeric_limits<double>::infinity();
  int since_improved = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double train_sum = 0;
    for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t len = std::min(static_cast<std::size_t>(config.batch_size), n_train - start);
      train_sum += batch_step(opt, std::span<const std::size_t>(order.data() + start, len), config, step_loss);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_sum / static_cast<double>(n_train);
    const auto [dev_loss, dev_metric] = evaluate();
    rec.dev_loss = dev_loss;
    rec.dev_metric = dev_metric;
    if (report.best_epoch < 0 || better(dev_metric, dev_loss, report.best_metric, best_metric_loss)) {
      report.best_epoch = epoch;
      report.best_metric = dev_metric;
      best_metric_loss = dev_loss;
      best = snapshot(all);
    }
    if (dev_loss < best_loss) {
      best_loss = dev_loss;
      since_improved = 0;
    } else {
      ++since_improved;
    }
    rec.best_dev_loss = best_loss;
    report.epochs.push_back(rec);
    if (config.patience > 0 && since_improved >= config.patience) break;
  }
  restore(all, best);
  return report;
}

}  // namespace detail

struct NliEvaluation {
  double loss = 0;
  double accuracy = 0;
};

template <typename Scalar>
NliEvaluation evaluate_nli(const EntailmentStack<Scalar>& stack, const std::vector<NLIExample>& data,
                           int threads = 1) {
  if (data.empty()) return {};
  std::vector<double> losses(data.size());
  std::vector<int> correct(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    Tape<Scalar> t(false);
    auto out = stack.f_e_p(t, data[i].premise, data[i].hypothesis);
    const int label = static_cast<int>(data[i].label);
    losses[i] = static_cast<double>(loss_single_correct(out.logits, label).value()(0, 0));
    Eigen::Index best = 0;
    out.probs.value().row(0).maxCoeff(&best);
    correct[i] = best == label ? 1 : 0;
  });
  NliEvaluation e;
  for (std::size_t i = 0; i < data.size(); ++i) {
    e.loss += losses[i];
    e.accuracy += correct[i];
  }
  e.loss /= static_cast<double>(data.size());
  e.accuracy /= static_cast<double>(data.size());
  return e;
}

/// Trains f_e_p with 3-way cross entropy; the embedding table is held fixed
/// when freeze_embeddings is set. The stack is left holding the weights of
/// the best dev-loss epoch.
template <typename Scalar>
TrainReport pretrain_nli(EntailmentStack<Scalar>& stack, const std::vector<NLIExample>& train,
                         const std::vector<NLIExample>& dev, const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw ConfigError("pretrain_nli: empty training data");
  if (!stack.classifier) throw ConfigError("pretrain_nli: stack has no classifier head");
  const ParameterList<Scalar> params = stack.parameters();
  const ParameterList<Scalar> trainable =
      config.freeze_embeddings ? detail::without(params, ParameterList<Scalar>{&stack.embedding->table}) : params;
  Adam<Scalar> opt(trainable, config.learning_rate);
  const auto& selection = dev.empty() ? train : dev;
  return detail::train_loop<Scalar>(
      params, opt, train.size(), config,
      [&](Tape<Scalar>& t, std::size_t i) {
        auto out = stack.f_e_p(t, train[i].premise, train[i].hypothesis);
        return loss_single_correct(out.logits, static_cast<int>(train[i].label));
      },
      [&] {
        const NliEvaluation e = evaluate_nli(stack, selection, config.threads);
        return std::pair{e.loss, e.accuracy};
      },
      [](double, double loss, double, double best_loss) { return loss < best_loss; });
}

struct QaEvaluation {
  double loss = 0;
  MetricReport metrics;
  std::vector<Prediction> predictions;

  /// Accuracy for single-correct tasks, F1a otherwise.
  double selection_metric() const { return metrics.accuracy ? *metrics.accuracy : metrics.f1a.f1; }
};

template <typename Scalar>
QaEvaluation evaluate_qa(const QaModel<Scalar>& model, const std::vector<QAExample>& data, int threads = 1) {
  QaEvaluation e;
  if (data.empty()) return e;
  std::vector<double> losses(data.size());
  e.predictions.resize(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    Tape<Scalar> t(false);
    const QaForward<Scalar> f = model.forward_example(t, data[i]);
    losses[i] = static_cast<double>(qa_loss(f, data[i]).value()(0, 0));
    e.predictions[i] = QaModel<Scalar>::prediction_from(f, data[i]);
  });
  std::vector<std::set<int>> predicted, gold;
  std::vector<int> argmax, gold_single;
  std::size_t choices = 0;
  bool single = true;
  for (std::size_t i = 0; i < data.size(); ++i) {
    e.loss += losses[i];
    predicted.emplace_back(e.predictions[i].predicted.begin(), e.predictions[i].predicted.end());
    gold.emplace_back(data[i].gold.begin(), data[i].gold.end());
    choices += data[i].num_choices();
    single = single && data[i].task_type == TaskType::single_correct;
    if (single) {
      argmax.push_back(e.predictions[i].predicted.at(0));
      gold_single.push_back(data[i].gold.at(0));
    }
  }
  e.loss /= static_cast<double>(data.size());
  e.metrics = metric_multirc(predicted, gold, choices);
  if (single) e.metrics.accuracy = metric_accuracy(argmax, gold_single);
  return e;
}

/// Fine-tunes a QA model. Embedding tables are left out of the optimizer
/// when freeze_embeddings is set. The model is left holding the weights of
/// the best dev-metric epoch.
template <typename Scalar>
TrainReport finetune_qa(QaModel<Scalar>& model, const std::vector<QAExample>& train,
                        const std::vector<QAExample>& dev, const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw ConfigError("finetune_qa: empty training data");
  if (config.relevance_loss != RelevanceLoss::none) {
    if (model.config().kind != ModelKind::multee ||
        model.config().aggregator.use_relevance != RelevanceMode::learned) {
      throw ConfigError("relevance loss requires a Multee model with learned relevance");
    }
    for (const auto* set : {&train, &dev}) {
      for (const auto& ex : *set) {
        if (!ex.relevance_labels) throw ConfigError("relevance loss requested but data lacks relevance_labels");
      }
    }
  }
  for (const auto* set : {&train, &dev}) {
    for (const auto& ex : *set) {
      if (ex.task_type != config.task_type) throw ConfigError("dataset task_type differs from train.task_type");
    }
  }
  const ParameterList<Scalar> all = model.parameters();
  const ParameterList<Scalar> trainable =
      config.freeze_embeddings ? detail::without(all, model.embedding_parameters()) : all;
  Adam<Scalar> opt(trainable, config.learning_rate);
  const auto& selection = dev.empty() ? train : dev;
  return detail::train_loop<Scalar>(
      all, opt, train.size(), config,
      [&](Tape<Scalar>& t, std::size_t i) { return total_loss(model.forward_example(t, train[i]), train[i], config); },
      [&] {
        const QaEvaluation e = evaluate_qa(model, selection, config.threads);
        return std::pair{e.loss, e.selection_metric()};
      },
      [](double metric, double loss, double best_metric, double best_loss) {
        return metric > best_metric || (metric == best_metric && loss < best_loss);
      });
}

}  // namespace multee
