#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "multee/autodiff.hpp"
#include "multee/corpus.hpp"
#include "multee/rng.hpp"

namespace multee {

template <typename Scalar>
using ParameterList = std::vector<Parameter<Scalar>*>;

/// Glorot-uniform initialized parameter.
template <typename Scalar>
Parameter<Scalar> glorot(std::string name, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Parameter<Scalar> p{std::move(name), Matrix<Scalar>(rows, cols)};
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) p.value(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
  }
  return p;
}

template <typename Scalar>
Parameter<Scalar> zeros(std::string name, Eigen::Index rows, Eigen::Index cols) {
  return Parameter<Scalar>{std::move(name), Matrix<Scalar>::Zero(rows, cols)};
}

template <typename Scalar>
struct Affine {
  Parameter<Scalar> weight;  // in x out
  Parameter<Scalar> bias;    // 1 x out

  Affine(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng)
      : weight(glorot<Scalar>(name + ".weight", in, out, rng)),
        bias(zeros<Scalar>(name + ".bias", 1, out)) {}

  Eigen::Index in_dim() const { return weight.value.rows(); }
  Eigen::Index out_dim() const { return weight.value.cols(); }

  Var<Scalar> operator()(Tape<Scalar>& t, Var<Scalar> x) const {
    return add_row(matmul(x, t.parameter(weight)), t.parameter(bias));
  }

  void collect(ParameterList<Scalar>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <typename Scalar>
struct Embedding {
  Parameter<Scalar> table;  // vocab x d_emb, padding row kept at zero

  Embedding(const std::string& name, Eigen::Index vocab, Eigen::Index dim, Rng& rng)
      : table{name + ".table", Matrix<Scalar>(vocab, dim)} {
    for (Eigen::Index c = 0; c < dim; ++c) {
      for (Eigen::Index r = 0; r < vocab; ++r) table.value(r, c) = static_cast<Scalar>(rng.uniform(-1.0, 1.0));
    }
    table.value.row(kPaddingId).setZero();
  }

  Eigen::Index dim() const { return table.value.cols(); }

  void collect(ParameterList<Scalar>& out) { out.push_back(&table); }
};

/// Bidirectional LSTM; output is [forward; backward] along columns.
template <typename Scalar>
struct BiLstm {
  LstmWeights<Scalar> forward;
  LstmWeights<Scalar> backward;

  BiLstm(const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng)
      : forward(make(name + ".fwd", in, hidden, rng)), backward(make(name + ".bwd", in, hidden, rng)) {}

  Eigen::Index in_dim() const { return forward.input.value.rows(); }
  Eigen::Index hidden() const { return forward.recurrent.value.rows(); }
  Eigen::Index out_dim() const { return 2 * hidden(); }

  Var<Scalar> operator()(Var<Scalar> x, const Mask& mask) const {
    Var<Scalar> f = lstm(x, forward, mask, false);
    Var<Scalar> b = lstm(x, backward, mask, true);
    return concat_cols({f, b});
  }

  void collect(ParameterList<Scalar>& out) {
    for (auto* w : {&forward, &backward}) {
      out.push_back(&w->input);
      out.push_back(&w->recurrent);
      out.push_back(&w->bias);
    }
  }

 private:
  static LstmWeights<Scalar> make(const std::string& name, Eigen::Index in, Eigen::Index hidden,
                                  Rng& rng) {
    LstmWeights<Scalar> w{glorot<Scalar>(name + ".input", in, 4 * hidden, rng),
                          glorot<Scalar>(name + ".recurrent", hidden, 4 * hidden, rng),
                          zeros<Scalar>(name + ".bias", 1, 4 * hidden)};
    w.bias.value.middleCols(hidden, hidden).setOnes();  // forget gate
    return w;
  }
};

/// Copies parameter values between two lists of identical layout.
template <typename Scalar>
void copy_values(const ParameterList<Scalar>& from, const ParameterList<Scalar>& to) {
  if (from.size() != to.size()) throw ShapeError("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i]->value.rows() != to[i]->value.rows() || from[i]->value.cols() != to[i]->value.cols()) {
      throw ShapeError("copy_values: shape mismatch for " + to[i]->name);
    }
    to[i]->value = from[i]->value;
  }
}

}  // namespace multee
