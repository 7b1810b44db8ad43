#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records every operation of one forward pass. Values are plain
// `Matrix<Scalar>`s with rows indexing sequence positions and columns
// indexing features. Parameter gradients are accumulated into a per-tape
// store, so independent tapes can run concurrently over shared read-only
// parameters and be reduced afterwards in a fixed order.

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "multee/errors.hpp"

namespace multee {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Position mask over a sequence; `true` marks a real (unpadded) position.
using Mask = std::vector<bool>;

inline std::size_t count_true(const Mask& mask) {
  std::size_t n = 0;
  for (bool b : mask) n += b ? 1 : 0;
  return n;
}

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
};

template <typename Scalar>
using GradientStore = std::unordered_map<const Parameter<Scalar>*, Matrix<Scalar>>;

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<Scalar>& value() const { return tape->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var<Scalar> constant(Mat value) { return push(std::move(value), nullptr); }

  Var<Scalar> parameter(const Parameter<Scalar>& p) {
    Var<Scalar> v = push(p.value, nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  Var<Scalar> push(Mat value, Backward backward) {
    Node node;
    node.value = std::move(value);
    if (record_) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<Scalar>{this, nodes_.size() - 1};
  }

  const Mat& value(Var<Scalar> v) const { return nodes_[v.id].value; }
  const Mat& value(std::size_t id) const { return nodes_[id].value; }

  /// Gradient flowing into node `id`; empty when nothing reached it.
  const Mat& grad(std::size_t id) const { return nodes_[id].grad; }

  Mat& grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  Mat& param_grad(const Parameter<Scalar>& p) {
    auto it = store_.find(&p);
    if (it == store_.end()) {
      it = store_.emplace(&p, Mat::Zero(p.value.rows(), p.value.cols())).first;
    }
    return it->second;
  }

  const GradientStore<Scalar>& gradients() const { return store_; }

  /// Back-propagates from a 1x1 root. May be called once per tape.
  void backward(Var<Scalar> root) {
    if (!record_) throw ConfigError("backward() on a non-recording tape");
    if (value(root).size() != 1) throw ShapeError("backward() root must be 1x1");
    grad_ref(root.id).setOnes();
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr) param_grad(*n.param) += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward backward;
    const Parameter<Scalar>* param = nullptr;
  };

  bool record_;
  std::vector<Node> nodes_;
  GradientStore<Scalar> store_;
};

namespace detail {

template <typename Scalar>
void require_same_tape(Var<Scalar> a, Var<Scalar> b) {
  if (a.tape != b.tape) throw ShapeError("operands recorded on different tapes");
}

inline void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear algebra
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = a.value() * b.value();
  return t.push(std::move(out), [a = a.id, b = b.id](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    tp.grad_ref(a).noalias() += g * tp.value(b).transpose();
    tp.grad_ref(b).noalias() += tp.value(a).transpose() * g;
  });
}

template <typename Scalar>
Var<Scalar> transpose(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  return t.push(a.value().transpose(), [a = a.id](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_ref(a) += tp.grad(self).transpose();
  });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Tape<Scalar>& t = *a.tape;
  return t.push(a.value() + b.value(), [a = a.id, b = b.id](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_ref(a) += tp.grad(self);
    tp.grad_ref(b) += tp.grad(self);
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Tape<Scalar>& t = *a.tape;
  return t.push(a.value() - b.value(), [a = a.id, b = b.id](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_ref(a) += tp.grad(self);
    tp.grad_ref(b) -= tp.grad(self);
  });
}

/// `a` (r x c) plus a broadcast row `bias` (1 x c).
template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> a, Var<Scalar> bias) {
  detail::require_same_tape(a, bias);
  detail::require(bias.rows() == 1 && bias.cols() == a.cols(), "add_row: bias shape");
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = a.value().rowwise() + RowVector<Scalar>(bias.value().row(0));
  return t.push(std::move(out), [a = a.id, b = bias.id](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_ref(a) += tp.grad(self);
    tp.grad_ref(b) += tp.grad(self).colwise().sum();
  });
}

template <typename Scalar>
Var<Scalar> cwise_product(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "cwise_product: shape mismatch");
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out), [a = a.id, b = b.id](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    tp.grad_ref(a) += g.cwiseProduct(tp.value(b));
    tp.grad_ref(b) += g.cwiseProduct(tp.value(a));
  });
}

/// scale * a + shift, with constant scalars.
template <typename Scalar>
Var<Scalar> affine(Var<Scalar> a, Scalar scale, Scalar shift = Scalar(0)) {
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = (a.value().array() * scale + shift).matrix();
  return t.push(std::move(out), [a = a.id, scale](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_ref(a) += tp.grad(self) * scale;
  });
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  return t.push(std::move(out), [a = a.id](Tape<Scalar>& tp, std::size_t self) {
    const auto& y = tp.value(self);
    tp.grad_ref(a).array() += tp.grad(self).array() * (Scalar(1) - y.array().square());
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = (Scalar(1) / (Scalar(1) + (-a.value().array()).exp())).matrix();
  return t.push(std::move(out), [a = a.id](Tape<Scalar>& tp, std::size_t self) {
    const auto& y = tp.value(self);
    tp.grad_ref(a).array() += tp.grad(self).array() * y.array() * (Scalar(1) - y.array());
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  return t.push(std::move(out), [a = a.id](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_ref(a).array() +=
        (tp.value(a).array() > Scalar(0)).select(tp.grad(self).array(), Scalar(0));
  });
}

template <typename Scalar>
Var<Scalar> log(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = a.value().array().log().matrix();
  return t.push(std::move(out), [a = a.id](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_ref(a).array() += tp.grad(self).array() / tp.value(a).array();
  });
}

/// Elementwise clamp to [lo, hi]; gradient passes only strictly inside.
template <typename Scalar>
Var<Scalar> clamp(Var<Scalar> a, Scalar lo, Scalar hi) {
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = a.value().cwiseMax(lo).cwiseMin(hi);
  return t.push(std::move(out), [a = a.id, lo, hi](Tape<Scalar>& tp, std::size_t self) {
    const auto& x = tp.value(a);
    tp.grad_ref(a).array() +=
        (x.array() > lo && x.array() < hi).select(tp.grad(self).array(), Scalar(0));
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), [a = a.id](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_ref(a).array() += tp.grad(self)(0, 0);
  });
}

template <typename Scalar>
Var<Scalar> element(Var<Scalar> a, Eigen::Index row, Eigen::Index col) {
  detail::require(row >= 0 && row < a.rows() && col >= 0 && col < a.cols(),
                  "element: index out of range");
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value()(row, col);
  return t.push(std::move(out), [a = a.id, row, col](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_ref(a)(row, col) += tp.grad(self)(0, 0);
  });
}

/// Multiplies every entry of `m` by the scalar alpha(0, index).
template <typename Scalar>
Var<Scalar> scale_by_element(Var<Scalar> m, Var<Scalar> alpha, Eigen::Index index) {
  detail::require_same_tape(m, alpha);
  detail::require(alpha.rows() == 1 && index >= 0 && index < alpha.cols(),
                  "scale_by_element: alpha index out of range");
  Tape<Scalar>& t = *m.tape;
  Matrix<Scalar> out = m.value() * alpha.value()(0, index);
  return t.push(std::move(out),
                [m = m.id, a = alpha.id, index](Tape<Scalar>& tp, std::size_t self) {
                  const auto& g = tp.grad(self);
                  tp.grad_ref(m) += g * tp.value(a)(0, index);
                  tp.grad_ref(a)(0, index) += g.cwiseProduct(tp.value(m)).sum();
                });
}

// ---------------------------------------------------------------------------
// Structural
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
  detail::require(!parts.empty(), "concat_cols: no parts");
  Tape<Scalar>& t = *parts[0].tape;
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == rows, "concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    spans.emplace_back(p.id, off);
    off += p.cols();
  }
  return t.push(std::move(out), [spans = std::move(spans)](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    for (const auto& [id, start] : spans) {
      auto& dst = tp.grad_ref(id);
      dst += g.middleCols(start, dst.cols());
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts) {
  detail::require(!parts.empty(), "concat_rows: no parts");
  Tape<Scalar>& t = *parts[0].tape;
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == cols, "concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    spans.emplace_back(p.id, off);
    off += p.rows();
  }
  return t.push(std::move(out), [spans = std::move(spans)](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    for (const auto& [id, start] : spans) {
      auto& dst = tp.grad_ref(id);
      dst += g.middleRows(start, dst.rows());
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(std::initializer_list<Var<Scalar>> parts) {
  std::vector<Var<Scalar>> v(parts);
  return concat_cols(std::span<const Var<Scalar>>(v));
}

template <typename Scalar>
Var<Scalar> concat_rows(std::initializer_list<Var<Scalar>> parts) {
  std::vector<Var<Scalar>> v(parts);
  return concat_rows(std::span<const Var<Scalar>>(v));
}

template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> a, Eigen::Index start, Eigen::Index count) {
  detail::require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: range");
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = a.value().middleRows(start, count);
  return t.push(std::move(out), [a = a.id, start, count](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_ref(a).middleRows(start, count) += tp.grad(self);
  });
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Eigen::Index start, Eigen::Index count) {
  detail::require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: range");
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = a.value().middleCols(start, count);
  return t.push(std::move(out), [a = a.id, start, count](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_ref(a).middleCols(start, count) += tp.grad(self);
  });
}

/// Zeroes the rows of `a` where `mask` is false.
template <typename Scalar>
Var<Scalar> mask_rows(Var<Scalar> a, const Mask& mask) {
  detail::require(static_cast<Eigen::Index>(mask.size()) == a.rows(), "mask_rows: mask length");
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    if (!mask[r]) out.row(r).setZero();
  }
  return t.push(std::move(out), [a = a.id, mask](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& dst = tp.grad_ref(a);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      if (mask[r]) dst.row(r) += g.row(r);
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization and pooling
// ---------------------------------------------------------------------------

/// Row-wise softmax restricted to columns with `col_mask` true. Masked
/// columns are exactly zero. Rows with `row_mask` false are all zero.
template <typename Scalar>
Var<Scalar> masked_softmax_rows(Var<Scalar> s, const Mask& col_mask, const Mask& row_mask) {
  detail::require(static_cast<Eigen::Index>(col_mask.size()) == s.cols(),
                  "masked_softmax_rows: column mask length");
  detail::require(static_cast<Eigen::Index>(row_mask.size()) == s.rows(),
                  "masked_softmax_rows: row mask length");
  Tape<Scalar>& t = *s.tape;
  const auto& x = s.value();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (!row_mask[r]) continue;
    Scalar hi = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (col_mask[c] && x(r, c) > hi) hi = x(r, c);
    }
    if (!std::isfinite(hi)) continue;
    Scalar total = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (col_mask[c]) {
        out(r, c) = std::exp(x(r, c) - hi);
        total += out(r, c);
      }
    }
    out.row(r) /= total;
  }
  return t.push(std::move(out), [s = s.id](Tape<Scalar>& tp, std::size_t self) {
    const auto& y = tp.value(self);
    const auto& g = tp.grad(self);
    // Masked entries have y == 0 and therefore receive zero gradient.
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inner = (g.cwiseProduct(y)).rowwise().sum();
    tp.grad_ref(s) += y.cwiseProduct(g - inner.replicate(1, g.cols()));
  });
}

/// Softmax over a 1 x k row.
template <typename Scalar>
Var<Scalar> softmax_row(Var<Scalar> a) {
  detail::require(a.rows() == 1, "softmax_row: expects a single row");
  return masked_softmax_rows(a, Mask(static_cast<std::size_t>(a.cols()), true), Mask{true});
}

/// log(softmax(a)) over a 1 x k row, computed stably.
template <typename Scalar>
Var<Scalar> log_softmax_row(Var<Scalar> a) {
  detail::require(a.rows() == 1, "log_softmax_row: expects a single row");
  Tape<Scalar>& t = *a.tape;
  const auto& x = a.value();
  const Scalar hi = x.maxCoeff();
  const Scalar lse = hi + std::log((x.array() - hi).exp().sum());
  Matrix<Scalar> out = (x.array() - lse).matrix();
  return t.push(std::move(out), [a = a.id](Tape<Scalar>& tp, std::size_t self) {
    const auto& y = tp.value(self);
    const auto& g = tp.grad(self);
    tp.grad_ref(a) += g - (y.array().exp() * g.sum()).matrix();
  });
}

/// Divides each row by (row sum + eps).
template <typename Scalar>
Var<Scalar> normalize_rows(Var<Scalar> m, Scalar eps) {
  Tape<Scalar>& t = *m.tape;
  const auto& x = m.value();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> denom =
      (x.rowwise().sum().array() + eps).matrix();
  Matrix<Scalar> out = x.array().colwise() / denom.array();
  return t.push(std::move(out), [m = m.id, eps](Tape<Scalar>& tp, std::size_t self) {
    const auto& x = tp.value(m);
    const auto& g = tp.grad(self);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> denom =
        (x.rowwise().sum().array() + eps).matrix();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inner =
        (g.cwiseProduct(x)).rowwise().sum().array() / denom.array().square();
    tp.grad_ref(m) +=
        (g.array().colwise() / denom.array()).matrix() - inner.replicate(1, g.cols());
  });
}

/// Mean over rows with `mask` true, as a 1 x c row.
template <typename Scalar>
Var<Scalar> masked_mean_rows(Var<Scalar> a, const Mask& mask) {
  detail::require(static_cast<Eigen::Index>(mask.size()) == a.rows(),
                  "masked_mean_rows: mask length");
  const auto n = static_cast<Scalar>(count_true(mask));
  detail::require(n > 0, "masked_mean_rows: empty mask");
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = Matrix<Scalar>::Zero(1, a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    if (mask[r]) out += a.value().row(r);
  }
  out /= n;
  return t.push(std::move(out), [a = a.id, mask, n](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& dst = tp.grad_ref(a);
    for (Eigen::Index r = 0; r < dst.rows(); ++r) {
      if (mask[r]) dst.row(r) += g / n;
    }
  });
}

/// Column-wise max over rows with `mask` true; ties go to the lowest row.
template <typename Scalar>
Var<Scalar> masked_max_rows(Var<Scalar> a, const Mask& mask) {
  detail::require(static_cast<Eigen::Index>(mask.size()) == a.rows(),
                  "masked_max_rows: mask length");
  detail::require(count_true(mask) > 0, "masked_max_rows: empty mask");
  Tape<Scalar>& t = *a.tape;
  const auto& x = a.value();
  Matrix<Scalar> out(1, x.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(x.cols()), -1);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      if (!mask[r]) continue;
      if (arg[c] < 0 || x(r, c) > out(0, c)) {
        out(0, c) = x(r, c);
        arg[c] = r;
      }
    }
  }
  return t.push(std::move(out), [a = a.id, arg = std::move(arg)](Tape<Scalar>& tp,
                                                                std::size_t self) {
    const auto& g = tp.grad(self);
    auto& dst = tp.grad_ref(a);
    for (Eigen::Index c = 0; c < g.cols(); ++c) dst(arg[c], c) += g(0, c);
  });
}

/// Largest entry of a 1 x k row; ties go to the lowest index.
template <typename Scalar>
Var<Scalar> max_element(Var<Scalar> a) {
  detail::require(a.rows() == 1 && a.cols() >= 1, "max_element: expects a non-empty row");
  Tape<Scalar>& t = *a.tape;
  const auto& x = a.value();
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < x.cols(); ++c) {
    if (x(0, c) > x(0, best)) best = c;
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x(0, best);
  return t.push(std::move(out), [a = a.id, best](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_ref(a)(0, best) += tp.grad(self)(0, 0);
  });
}

// ---------------------------------------------------------------------------
// Parameterized primitives
// ---------------------------------------------------------------------------

/// Looks up rows of `table`; `padding_id` always yields the zero row and
/// receives no gradient.
template <typename Scalar>
Var<Scalar> lookup_rows(Tape<Scalar>& t, const Parameter<Scalar>& table, std::span<const int> ids,
                        int padding_id) {
  const auto& w = table.value;
  Matrix<Scalar> out(static_cast<Eigen::Index>(ids.size()), w.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= w.rows()) {
      throw IndexError("token id " + std::to_string(ids[i]) + " outside embedding table of " +
                       std::to_string(w.rows()) + " rows");
    }
    if (ids[i] == padding_id) {
      out.row(static_cast<Eigen::Index>(i)).setZero();
    } else {
      out.row(static_cast<Eigen::Index>(i)) = w.row(ids[i]);
    }
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return t.push(std::move(out), [&table, idv = std::move(idv), padding_id](Tape<Scalar>& tp,
                                                                          std::size_t self) {
    const auto& g = tp.grad(self);
    auto& dst = tp.param_grad(table);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      if (idv[i] != padding_id) dst.row(idv[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

/// One direction of an LSTM. Gate layout along columns is (input, forget,
/// cell, output). Masked positions are skipped: the state carries over
/// unchanged and the output row is zero.
template <typename Scalar>
struct LstmWeights {
  Parameter<Scalar> input;      // in x 4h
  Parameter<Scalar> recurrent;  // h x 4h
  Parameter<Scalar> bias;       // 1 x 4h
};

template <typename Scalar>
Var<Scalar> lstm(Var<Scalar> x, const LstmWeights<Scalar>& w, const Mask& mask, bool reverse) {
  using Mat = Matrix<Scalar>;
  const Eigen::Index steps = x.rows();
  const Eigen::Index h = w.recurrent.value.rows();
  detail::require(x.cols() == w.input.value.rows(), "lstm: input width mismatch");
  detail::require(static_cast<Eigen::Index>(mask.size()) == steps, "lstm: mask length");

  struct Cache {
    Mat gates, cell, tanh_cell, h_prev, c_prev;
    std::vector<Eigen::Index> order;
  };
  auto cache = std::make_shared<Cache>();
  cache->gates = Mat::Zero(steps, 4 * h);
  cache->cell = Mat::Zero(steps, h);
  cache->tanh_cell = Mat::Zero(steps, h);
  cache->h_prev = Mat::Zero(steps, h);
  cache->c_prev = Mat::Zero(steps, h);

  Mat pre = x.value() * w.input.value;
  pre.rowwise() += RowVector<Scalar>(w.bias.value.row(0));
  Mat out = Mat::Zero(steps, h);
  RowVector<Scalar> hs = RowVector<Scalar>::Zero(h);
  RowVector<Scalar> cs = RowVector<Scalar>::Zero(h);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::Index s = reverse ? steps - 1 - k : k;
    if (!mask[s]) continue;
    cache->order.push_back(s);
    RowVector<Scalar> z = pre.row(s) + hs * w.recurrent.value;
    auto sig = [](auto v) { return (Scalar(1) / (Scalar(1) + (-v.array()).exp())).matrix(); };
    RowVector<Scalar> ig = sig(z.segment(0, h));
    RowVector<Scalar> fg = sig(z.segment(h, h));
    RowVector<Scalar> gg = z.segment(2 * h, h).array().tanh().matrix();
    RowVector<Scalar> og = sig(z.segment(3 * h, h));
    cache->h_prev.row(s) = hs;
    cache->c_prev.row(s) = cs;
    cs = fg.cwiseProduct(cs) + ig.cwiseProduct(gg);
    RowVector<Scalar> tc = cs.array().tanh().matrix();
    hs = og.cwiseProduct(tc);
    cache->gates.row(s) << ig, fg, gg, og;
    cache->cell.row(s) = cs;
    cache->tanh_cell.row(s) = tc;
    out.row(s) = hs;
  }

  Tape<Scalar>& t = *x.tape;
  return t.push(std::move(out), [x = x.id, &w, cache, h](Tape<Scalar>& tp, std::size_t self) {
    const auto& dy = tp.grad(self);
    Mat dz = Mat::Zero(dy.rows(), 4 * h);
    RowVector<Scalar> dh_next = RowVector<Scalar>::Zero(h);
    RowVector<Scalar> dc_next = RowVector<Scalar>::Zero(h);
    auto& d_rec = tp.param_grad(w.recurrent);
    for (auto it = cache->order.rbegin(); it != cache->order.rend(); ++it) {
      const Eigen::Index s = *it;
      auto ig = cache->gates.row(s).segment(0, h);
      auto fg = cache->gates.row(s).segment(h, h);
      auto gg = cache->gates.row(s).segment(2 * h, h);
      auto og = cache->gates.row(s).segment(3 * h, h);
      auto tc = cache->tanh_cell.row(s);
      RowVector<Scalar> dh = dy.row(s) + dh_next;
      RowVector<Scalar> dc =
          dc_next + (dh.array() * og.array() * (Scalar(1) - tc.array().square())).matrix();
      RowVector<Scalar> row(4 * h);
      row.segment(0, h) = (dc.array() * gg.array() * ig.array() * (Scalar(1) - ig.array())).matrix();
      row.segment(h, h) = (dc.array() * cache->c_prev.row(s).array() * fg.array() *
                           (Scalar(1) - fg.array())).matrix();
      row.segment(2 * h, h) = (dc.array() * ig.array() * (Scalar(1) - gg.array().square())).matrix();
      row.segment(3 * h, h) = (dh.array() * tc.array() * og.array() * (Scalar(1) - og.array())).matrix();
      dz.row(s) = row;
      d_rec.noalias() += cache->h_prev.row(s).transpose() * row;
      dh_next = row * w.recurrent.value.transpose();
      dc_next = dc.cwiseProduct(fg);
    }
    tp.grad_ref(x).noalias() += dz * w.input.value.transpose();
    tp.param_grad(w.input).noalias() += tp.value(x).transpose() * dz;
    tp.param_grad(w.bias) += dz.colwise().sum();
  });
}

}  // namespace multee
