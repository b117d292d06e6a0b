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

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto an immutable value. Tensors that require a
// gradient belong to exactly one Tape, which records every differentiable
// operation in execution order; operations whose inputs are all constants
// produce constants and are not recorded. Adjoints are accumulated in double
// precision regardless of the scalar type and rounded on read.

#ifndef SPEECHKD_TENSOR_HPP_
#define SPEECHKD_TENSOR_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "speechkd/error.hpp"

namespace speechkd {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixF = RowMatrix<float>;
using MatrixD = RowMatrix<double>;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         [](Index a, Index b) { return a * b; });
}

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Rank-0 and rank-1 tensors are viewed as a single row; higher ranks fold
// every leading dimension into the row count.
inline std::pair<Index, Index> matrix_dims(const Shape& shape) {
  if (shape.empty()) return {1, 1};
  const Index cols = shape.back();
  return {cols == 0 ? 0 : shape_size(shape) / cols, cols};
}

template <typename S>
class Tape;

// A trainable array owned by a model. Gradients from any number of tapes are
// summed into `grad` by Tape::accumulate_param_grads.
template <typename S>
struct Param {
  std::string name;
  Shape shape;
  RowMatrix<S> value;
  MatrixD grad;

  Param() = default;
  Param(std::string n, Shape s) : name(std::move(n)), shape(std::move(s)) {
    const auto [r, c] = matrix_dims(shape);
    value = RowMatrix<S>::Zero(r, c);
    grad = MatrixD::Zero(r, c);
  }

  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }

  template <typename T>
  Param<T> cast() const {
    Param<T> out(name, shape);
    out.value = value.template cast<T>();
    return out;
  }
};

namespace detail {

template <typename S>
struct Node {
  Shape shape;
  RowMatrix<S> value;
  MatrixD grad;  // empty until an adjoint reaches this node
  bool requires_grad = false;
  Tape<S>* tape = nullptr;
  Param<S>* param = nullptr;
  const char* op = "constant";
  std::function<void(const RowMatrix<S>&)> backward;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0) grad = MatrixD::Zero(value.rows(), value.cols());
    grad += g.template cast<double>();
  }
};

}  // namespace detail

template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using NodePtr = std::shared_ptr<detail::Node<S>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  // Constants never require a gradient and belong to no tape.
  static Tensor constant(Shape shape, RowMatrix<S> value) {
    const auto [r, c] = matrix_dims(shape);
    if (value.rows() != r || value.cols() != c) {
      throw DimensionError("constant: value does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<detail::Node<S>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    return Tensor(std::move(node));
  }
  static Tensor constant(RowMatrix<S> value) {
    Shape shape{value.rows(), value.cols()};
    return constant(std::move(shape), std::move(value));
  }
  static Tensor scalar(S v) {
    RowMatrix<S> m(1, 1);
    m(0, 0) = v;
    return constant(Shape{}, std::move(m));
  }
  static Tensor vector(std::span<const S> values) {
    RowMatrix<S> m(1, static_cast<Index>(values.size()));
    for (Index i = 0; i < m.cols(); ++i) m(0, i) = values[static_cast<std::size_t>(i)];
    return constant(Shape{m.cols()}, std::move(m));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }

  const RowMatrix<S>& matrix() const { return node_->value; }
  std::span<const S> data() const {
    return {node_->value.data(), static_cast<std::size_t>(node_->value.size())};
  }
  S item() const {
    if (size() != 1) throw DimensionError("item: tensor " + shape_str(shape()) + " is not a scalar");
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  // Adjoint rounded to the tensor's scalar type; empty when absent.
  RowMatrix<S> grad() const { return node_->grad.template cast<S>(); }
  const MatrixD& grad_accumulator() const { return node_->grad; }

  Tape<S>* tape() const { return node_->tape; }
  const char* op() const { return node_->op; }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// The computation record: differentiable operations in execution order
// (which is a topological order), plus the seed for stochastic operations.
template <typename S>
class Tape {
 public:
  explicit Tape(std::uint64_t seed = 0) : seed_(seed) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t seed() const { return seed_; }
  // Fresh stream id for the next stochastic operation.
  std::uint64_t next_stream() { return stream_counter_++; }

  Tensor<S> leaf(Shape shape, RowMatrix<S> value, bool requires_grad = true) {
    Tensor<S> t = Tensor<S>::constant(std::move(shape), std::move(value));
    if (requires_grad) {
      t.node()->requires_grad = true;
      t.node()->tape = this;
      t.node()->op = "leaf";
      nodes_.push_back(t.node());
    }
    return t;
  }
  Tensor<S> leaf(RowMatrix<S> value, bool requires_grad = true) {
    Shape shape{value.rows(), value.cols()};
    return leaf(std::move(shape), std::move(value), requires_grad);
  }

  // Leaf bound to a model parameter. Repeated calls return the same leaf.
  Tensor<S> variable(Param<S>& p) {
    if (auto it = bound_.find(&p); it != bound_.end()) return it->second;
    Tensor<S> t = leaf(p.shape, p.value);
    t.node()->param = &p;
    bound_.emplace(&p, t);
    return t;
  }

  // Used by operations; `backward` receives the output adjoint.
  Tensor<S> record(const char* op, Shape shape, RowMatrix<S> value,
                   std::function<void(const RowMatrix<S>&)> backward) {
    Tensor<S> t = Tensor<S>::constant(std::move(shape), std::move(value));
    t.node()->requires_grad = true;
    t.node()->tape = this;
    t.node()->op = op;
    t.node()->backward = std::move(backward);
    nodes_.push_back(t.node());
    return t;
  }

  std::size_t size() const { return nodes_.size(); }
  std::vector<std::string> ops() const {
    std::vector<std::string> out;
    out.reserve(nodes_.size());
    for (const auto& n : nodes_) out.emplace_back(n->op);
    return out;
  }

  void backward(const Tensor<S>& loss) {
    if (loss.size() != 1) {
      throw DimensionError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad() || loss.tape() != this) {
      throw InvalidArgument("backward: loss was not recorded on this tape");
    }
    if (backward_done_) throw InvalidArgument("backward: tape already consumed");
    backward_done_ = true;
    loss.node()->accumulate(RowMatrix<double>::Ones(1, 1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      auto& node = **it;
      if (node.grad.size() == 0 || !node.backward) continue;
      const RowMatrix<S> g = node.grad.template cast<S>();
      node.backward(g);
    }
  }

  // Adds the adjoints of parameter leaves into Param::grad.
  void accumulate_param_grads(double weight = 1.0) const {
    for (const auto& [param, t] : bound_) {
      if (!t.has_grad()) continue;
      if (param->grad.size() == 0) param->zero_grad();
      param->grad += weight * t.grad_accumulator();
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_counter_ = 0;
  bool backward_done_ = false;
  std::vector<typename Tensor<S>::NodePtr> nodes_;
  std::unordered_map<Param<S>*, Tensor<S>> bound_;
};

}  // namespace speechkd

#endif  // SPEECHKD_TENSOR_HPP_
