// Copyright 2026 The speechkd Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Differentiable primitives. Every function here is pure: inputs are never
// modified, and the output is recorded on the inputs' tape when any input
// requires a gradient.

#ifndef SPEECHKD_OPS_HPP_
#define SPEECHKD_OPS_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "speechkd/rng.hpp"
#include "speechkd/tensor.hpp"

namespace speechkd {

namespace detail {

template <typename S>
Tape<S>* grad_tape(const char* op, std::initializer_list<const Tensor<S>*> inputs) {
  Tape<S>* tape = nullptr;
  for (const Tensor<S>* t : inputs) {
    if (!t->defined()) throw InvalidArgument(std::string(op) + ": undefined tensor");
    if (!t->requires_grad()) continue;
    if (tape != nullptr && t->tape() != tape) {
      throw InvalidArgument(std::string(op) + ": inputs recorded on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

template <typename S, typename Backward>
Tensor<S> finish(const char* op, Shape shape, RowMatrix<S> value, Tape<S>* tape,
                 Backward&& backward) {
  if (!value.allFinite()) throw NumericalError(std::string(op) + ": non-finite output");
  if (tape == nullptr) return Tensor<S>::constant(std::move(shape), std::move(value));
  return tape->record(op, std::move(shape), std::move(value),
                      std::forward<Backward>(backward));
}

template <typename S>
void require_rank2(const Tensor<S>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "add");
  auto* tape = detail::grad_tape<S>("add", {&a, &b});
  auto an = a.node(), bn = b.node();
  return detail::finish<S>("add", a.shape(), a.matrix() + b.matrix(), tape,
                           [an, bn](const RowMatrix<S>& g) {
                             if (an->requires_grad) an->accumulate(g);
                             if (bn->requires_grad) bn->accumulate(g);
                           });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "sub");
  auto* tape = detail::grad_tape<S>("sub", {&a, &b});
  auto an = a.node(), bn = b.node();
  return detail::finish<S>("sub", a.shape(), a.matrix() - b.matrix(), tape,
                           [an, bn](const RowMatrix<S>& g) {
                             if (an->requires_grad) an->accumulate(g);
                             if (bn->requires_grad) bn->accumulate(-g);
                           });
}

// Elementwise product.
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "mul");
  auto* tape = detail::grad_tape<S>("mul", {&a, &b});
  auto an = a.node(), bn = b.node();
  RowMatrix<S> out = a.matrix().cwiseProduct(b.matrix());
  return detail::finish<S>("mul", a.shape(), std::move(out), tape,
                           [an, bn](const RowMatrix<S>& g) {
                             if (an->requires_grad) an->accumulate(g.cwiseProduct(bn->value));
                             if (bn->requires_grad) bn->accumulate(g.cwiseProduct(an->value));
                           });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  auto* tape = detail::grad_tape<S>("scale", {&a});
  auto an = a.node();
  return detail::finish<S>("scale", a.shape(), a.matrix() * factor, tape,
                           [an, factor](const RowMatrix<S>& g) { an->accumulate(g * factor); });
}

// x [L x d] plus bias [d] broadcast over rows.
template <typename S>
Tensor<S> add_bias(const Tensor<S>& x, const Tensor<S>& bias) {
  detail::require_rank2(x, "add_bias");
  if (bias.rank() != 1 || bias.size() != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not fit " +
                         shape_str(x.shape()));
  }
  auto* tape = detail::grad_tape<S>("add_bias", {&x, &bias});
  auto xn = x.node(), bn = bias.node();
  RowMatrix<S> out = x.matrix().rowwise() + bias.matrix().row(0);
  return detail::finish<S>("add_bias", x.shape(), std::move(out), tape,
                           [xn, bn](const RowMatrix<S>& g) {
                             if (xn->requires_grad) xn->accumulate(g);
                             if (bn->requires_grad) bn->accumulate(g.colwise().sum());
                           });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  auto* tape = detail::grad_tape<S>("relu", {&x});
  auto xn = x.node();
  RowMatrix<S> out = x.matrix().cwiseMax(S(0));
  return detail::finish<S>("relu", x.shape(), std::move(out), tape,
                           [xn](const RowMatrix<S>& g) {
                             xn->accumulate((xn->value.array() > S(0)).select(g.array(), S(0)).matrix());
                           });
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  auto* tape = detail::grad_tape<S>("matmul", {&a, &b});
  auto an = a.node(), bn = b.node();
  RowMatrix<S> out = a.matrix() * b.matrix();
  return detail::finish<S>("matmul", Shape{a.rows(), b.cols()}, std::move(out), tape,
                           [an, bn](const RowMatrix<S>& g) {
                             if (an->requires_grad) an->accumulate(g * bn->value.transpose());
                             if (bn->requires_grad) bn->accumulate(an->value.transpose() * g);
                           });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
  detail::require_rank2(x, "transpose");
  auto* tape = detail::grad_tape<S>("transpose", {&x});
  auto xn = x.node();
  RowMatrix<S> out = x.matrix().transpose();
  return detail::finish<S>("transpose", Shape{x.cols(), x.rows()}, std::move(out), tape,
                           [xn](const RowMatrix<S>& g) { xn->accumulate(g.transpose()); });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  auto* tape = detail::grad_tape<S>("reshape", {&x});
  auto xn = x.node();
  const auto [r, c] = matrix_dims(shape);
  RowMatrix<S> out = Eigen::Map<const RowMatrix<S>>(x.matrix().data(), r, c);
  return detail::finish<S>("reshape", std::move(shape), std::move(out), tape,
                           [xn](const RowMatrix<S>& g) {
                             xn->accumulate(Eigen::Map<const RowMatrix<S>>(
                                 g.data(), xn->value.rows(), xn->value.cols()));
                           });
}

// Concatenates matrices along rows (axis 0) or columns (axis 1).
template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw InvalidArgument("concat: no inputs");
  if (axis != 0 && axis != 1) throw InvalidArgument("concat: axis must be 0 or 1");
  Index rows = 0, cols = 0;
  Tape<S>* tape = nullptr;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat");
    const Index other = axis == 0 ? p.cols() : p.rows();
    const Index ref = axis == 0 ? parts.front().cols() : parts.front().rows();
    if (other != ref) {
      throw DimensionError("concat: " + shape_str(p.shape()) + " does not fit " +
                           shape_str(parts.front().shape()));
    }
    if (auto* t = detail::grad_tape<S>("concat", {&p})) {
      if (tape != nullptr && tape != t) throw InvalidArgument("concat: mixed tapes");
      tape = t;
    }
    if (axis == 0) rows += p.rows(); else cols += p.cols();
  }
  if (axis == 0) cols = parts.front().cols(); else rows = parts.front().rows();
  RowMatrix<S> out(rows, cols);
  std::vector<typename Tensor<S>::NodePtr> nodes;
  Index offset = 0;
  for (const auto& p : parts) {
    if (axis == 0) out.middleRows(offset, p.rows()) = p.matrix();
    else out.middleCols(offset, p.cols()) = p.matrix();
    offset += axis == 0 ? p.rows() : p.cols();
    nodes.push_back(p.node());
  }
  return detail::finish<S>("concat", Shape{rows, cols}, std::move(out), tape,
                           [nodes, axis](const RowMatrix<S>& g) {
                             Index off = 0;
                             for (const auto& n : nodes) {
                               const Index w = axis == 0 ? n->value.rows() : n->value.cols();
                               if (n->requires_grad) {
                                 if (axis == 0) n->accumulate(g.middleRows(off, w));
                                 else n->accumulate(g.middleCols(off, w));
                               }
                               off += w;
                             }
                           });
}

// Contiguous block of rows [start, start + count).
template <typename S>
Tensor<S> slice_rows(const Tensor<S>& x, Index start, Index count) {
  detail::require_rank2(x, "slice_rows");
  if (start < 0 || count < 1 || start + count > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + shape_str(x.shape()));
  }
  auto* tape = detail::grad_tape<S>("slice_rows", {&x});
  auto xn = x.node();
  RowMatrix<S> out = x.matrix().middleRows(start, count);
  return detail::finish<S>("slice_rows", Shape{count, x.cols()}, std::move(out), tape,
                           [xn, start, count](const RowMatrix<S>& g) {
                             RowMatrix<S> full = RowMatrix<S>::Zero(xn->value.rows(), xn->value.cols());
                             full.middleRows(start, count) = g;
                             xn->accumulate(full);
                           });
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, Index start, Index count) {
  detail::require_rank2(x, "slice_cols");
  if (start < 0 || count < 1 || start + count > x.cols()) {
    throw DimensionError("slice_cols: cols [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + shape_str(x.shape()));
  }
  auto* tape = detail::grad_tape<S>("slice_cols", {&x});
  auto xn = x.node();
  RowMatrix<S> out = x.matrix().middleCols(start, count);
  return detail::finish<S>("slice_cols", Shape{x.rows(), count}, std::move(out), tape,
                           [xn, start, count](const RowMatrix<S>& g) {
                             RowMatrix<S> full = RowMatrix<S>::Zero(xn->value.rows(), xn->value.cols());
                             full.middleCols(start, count) = g;
                             xn->accumulate(full);
                           });
}

// Mean of a matrix over `axis`; the result is a vector (rank 1).
template <typename S>
Tensor<S> mean(const Tensor<S>& x, int axis) {
  detail::require_rank2(x, "mean");
  if (axis != 0 && axis != 1) throw InvalidArgument("mean: axis must be 0 or 1");
  auto* tape = detail::grad_tape<S>("mean", {&x});
  auto xn = x.node();
  if (axis == 0) {
    RowMatrix<S> out = x.matrix().colwise().mean();
    return detail::finish<S>("mean", Shape{x.cols()}, std::move(out), tape,
                             [xn](const RowMatrix<S>& g) {
                               const S inv = S(1) / static_cast<S>(xn->value.rows());
                               xn->accumulate(g.replicate(xn->value.rows(), 1) * inv);
                             });
  }
  RowMatrix<S> out = x.matrix().rowwise().mean().transpose();
  return detail::finish<S>("mean", Shape{x.rows()}, std::move(out), tape,
                           [xn](const RowMatrix<S>& g) {
                             const S inv = S(1) / static_cast<S>(xn->value.cols());
                             xn->accumulate(g.transpose().replicate(1, xn->value.cols()) * inv);
                           });
}

// Column-wise maximum over rows; ties route the adjoint to the first row.
template <typename S>
Tensor<S> max_over_rows(const Tensor<S>& x) {
  detail::require_rank2(x, "max_over_rows");
  auto* tape = detail::grad_tape<S>("max_over_rows", {&x});
  auto xn = x.node();
  std::vector<Index> arg(static_cast<std::size_t>(x.cols()));
  RowMatrix<S> out(1, x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    Index best = 0;
    for (Index i = 1; i < x.rows(); ++i) {
      if (x.matrix()(i, j) > x.matrix()(best, j)) best = i;
    }
    arg[static_cast<std::size_t>(j)] = best;
    out(0, j) = x.matrix()(best, j);
  }
  return detail::finish<S>("max_over_rows", Shape{x.cols()}, std::move(out), tape,
                           [xn, arg](const RowMatrix<S>& g) {
                             RowMatrix<S> full = RowMatrix<S>::Zero(xn->value.rows(), xn->value.cols());
                             for (Index j = 0; j < full.cols(); ++j) {
                               full(arg[static_cast<std::size_t>(j)], j) = g(0, j);
                             }
                             xn->accumulate(full);
                           });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  auto* tape = detail::grad_tape<S>("sum", {&x});
  auto xn = x.node();
  RowMatrix<S> out(1, 1);
  out(0, 0) = x.matrix().sum();
  return detail::finish<S>("sum", Shape{}, std::move(out), tape, [xn](const RowMatrix<S>& g) {
    xn->accumulate(RowMatrix<S>::Constant(xn->value.rows(), xn->value.cols(), g(0, 0)));
  });
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
  return scale(sum(x), S(1) / static_cast<S>(x.size()));
}

// Row-wise softmax restricted to positions where `mask` is true; masked
// positions are exactly zero. Every row needs at least one valid position.
template <typename S>
Tensor<S> softmax_masked(const Tensor<S>& x, const BoolMatrix& mask) {
  detail::require_rank2(x, "softmax_masked");
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw DimensionError("softmax_masked: mask does not match " + shape_str(x.shape()));
  }
  auto* tape = detail::grad_tape<S>("softmax_masked", {&x});
  RowMatrix<S> out = RowMatrix<S>::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    S row_max = -std::numeric_limits<S>::infinity();
    for (Index j = 0; j < x.cols(); ++j) {
      if (mask(i, j)) row_max = std::max(row_max, x.matrix()(i, j));
    }
    if (row_max == -std::numeric_limits<S>::infinity()) {
      throw InvalidArgument("softmax_masked: row " + std::to_string(i) + " is fully masked");
    }
    S total = 0;
    for (Index j = 0; j < x.cols(); ++j) {
      if (mask(i, j)) {
        out(i, j) = std::exp(x.matrix()(i, j) - row_max);
        total += out(i, j);
      }
    }
    out.row(i) /= total;
  }
  auto xn = x.node();
  RowMatrix<S> y = out;
  return detail::finish<S>("softmax_masked", x.shape(), std::move(out), tape,
                           [xn, y = std::move(y)](const RowMatrix<S>& g) {
                             const Eigen::Matrix<S, Eigen::Dynamic, 1> dot =
                                 g.cwiseProduct(y).rowwise().sum();
                             xn->accumulate(y.cwiseProduct(g - dot.replicate(1, g.cols())));
                           });
}

template <typename S>
Tensor<S> log_softmax(const Tensor<S>& x) {
  const Index rows = x.rows(), cols = x.cols();
  auto* tape = detail::grad_tape<S>("log_softmax", {&x});
  RowMatrix<S> out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const S m = x.matrix().row(i).maxCoeff();
    const S lse = m + std::log((x.matrix().row(i).array() - m).exp().sum());
    out.row(i) = x.matrix().row(i).array() - lse;
  }
  auto xn = x.node();
  RowMatrix<S> p = out.array().exp().matrix();
  return detail::finish<S>("log_softmax", x.shape(), std::move(out), tape,
                           [xn, p = std::move(p)](const RowMatrix<S>& g) {
                             const Eigen::Matrix<S, Eigen::Dynamic, 1> total = g.rowwise().sum();
                             xn->accumulate(g - p.cwiseProduct(total.replicate(1, g.cols())));
                           });
}

// Per-row normalization to zero mean and unit (biased) variance, then affine.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     S eps = S(1e-5)) {
  detail::require_rank2(x, "layer_norm");
  const Index d = x.cols();
  if (d < 2) throw DimensionError("layer_norm: need at least 2 features, got " + shape_str(x.shape()));
  if (!(eps > S(0))) throw InvalidArgument("layer_norm: eps must be positive");
  if (gamma.rank() != 1 || gamma.size() != d || beta.rank() != 1 || beta.size() != d) {
    throw DimensionError("layer_norm: gain/shift must be [" + std::to_string(d) + "]");
  }
  auto* tape = detail::grad_tape<S>("layer_norm", {&x, &gamma, &beta});
  using Col = Eigen::Array<S, Eigen::Dynamic, 1>;
  const Col mu = x.matrix().rowwise().mean().array();
  RowMatrix<S> xhat = x.matrix().colwise() - mu.matrix();
  const Col inv = (xhat.array().square().rowwise().mean() + eps).rsqrt();
  xhat.array().colwise() *= inv;
  RowMatrix<S> out = (xhat.array().rowwise() * gamma.matrix().row(0).array()).matrix();
  out.rowwise() += beta.matrix().row(0);
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return detail::finish<S>(
      "layer_norm", x.shape(), std::move(out), tape,
      [xn, gn, bn, xhat = std::move(xhat), inv](const RowMatrix<S>& g) {
        if (gn->requires_grad) gn->accumulate(g.cwiseProduct(xhat).colwise().sum());
        if (bn->requires_grad) bn->accumulate(g.colwise().sum());
        if (!xn->requires_grad) return;
        const RowMatrix<S> dxhat = (g.array().rowwise() * gn->value.row(0).array()).matrix();
        const Col m1 = dxhat.rowwise().mean().array();
        const Col m2 = dxhat.cwiseProduct(xhat).rowwise().mean().array();
        RowMatrix<S> dx = dxhat;
        dx.colwise() -= m1.matrix();
        dx -= (xhat.array().colwise() * m2).matrix();
        dx.array().colwise() *= inv;
        xn->accumulate(dx);
      });
}

// Inverted dropout. Element i is kept iff counter_uniform(seed, stream, i) >= p,
// so the mask depends only on (seed, stream, i).
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, std::uint64_t seed, std::uint64_t stream) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  auto* tape = detail::grad_tape<S>("dropout", {&x});
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  RowMatrix<S> m(x.rows(), x.cols());
  for (Index i = 0; i < m.size(); ++i) {
    m.data()[i] = counter_uniform(seed, stream, static_cast<std::uint64_t>(i)) >= p ? keep_scale : S(0);
  }
  auto xn = x.node();
  RowMatrix<S> out = x.matrix().cwiseProduct(m);
  return detail::finish<S>("dropout", x.shape(), std::move(out), tape,
                           [xn, m = std::move(m)](const RowMatrix<S>& g) {
                             xn->accumulate(g.cwiseProduct(m));
                           });
}

// Value copy with no gradient path.
template <typename S>
Tensor<S> detach(const Tensor<S>& x) {
  return Tensor<S>::constant(x.shape(), x.matrix());
}

// Mean squared error over all elements.
template <typename S>
Tensor<S> mse(const Tensor<S>& a, const Tensor<S>& b) {
  const Tensor<S> diff = sub(a, b);
  return mean_all(mul(diff, diff));
}

}  // namespace speechkd

#endif  // SPEECHKD_OPS_HPP_
