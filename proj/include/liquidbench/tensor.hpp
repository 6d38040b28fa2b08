// Copyright 2026 The liquidbench Authors
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

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace lqb {

using std::exp;
using std::log;
using std::sqrt;
using std::tanh;

using Index = Eigen::Index;

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// Raised when a value leaves the finite range or shapes disagree.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename S>
struct Node {
  Matrix<S> value;
  Matrix<S> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  std::uint64_t visit_mark = 0;

  void accumulate(const Matrix<S>& delta) {
    if (grad.size() == 0) {
      grad = delta;
    } else {
      grad += delta;
    }
  }
};

inline thread_local bool grad_enabled = true;

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_mode_enabled() { return detail::grad_enabled; }

/// Dense 2-D tensor handle with reverse-mode gradient tracking.
///
/// Copies share the underlying node, so a parameter tensor held by a model
/// and the same tensor captured by a graph refer to one value and one grad.
/// Vectors are represented as 1 x n rows; batches are stacked as rows.
template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using MatrixType = Matrix<S>;
  using NodeType = detail::Node<S>;

  Tensor() = default;

  explicit Tensor(MatrixType value) : node_(std::make_shared<NodeType>()) {
    node_->value = std::move(value);
  }

  static Tensor parameter(MatrixType value) {
    Tensor t(std::move(value));
    t.node_->requires_grad = true;
    return t;
  }

  static Tensor scalar(S v) { return Tensor(MatrixType::Constant(1, 1, v)); }

  bool defined() const { return static_cast<bool>(node_); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }

  const MatrixType& value() const { return node_->value; }
  MatrixType& value() { return node_->value; }

  bool has_grad() const { return node_->grad.size() != 0; }
  const MatrixType& grad() const { return node_->grad; }
  MatrixType& grad() { return node_->grad; }

  bool requires_grad() const { return node_->requires_grad; }

  void zero_grad() { node_->grad = MatrixType::Zero(rows(), cols()); }

  S item() const {
    if (size() != 1) throw NumericError("item() on a tensor with " + std::to_string(size()) + " entries");
    return node_->value(0, 0);
  }

  NodeType* node() const { return node_.get(); }
  const std::shared_ptr<NodeType>& node_ptr() const { return node_; }

  /// Builds a result node. When no input needs a gradient (or grad mode is
  /// off) the node is a plain constant and the closure is dropped.
  static Tensor make(MatrixType value, std::vector<Tensor> inputs,
                     std::function<void(NodeType&)> backward_fn) {
    Tensor out(std::move(value));
    if (!detail::grad_enabled) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

 private:
  std::shared_ptr<NodeType> node_;
};

template <typename S>
bool all_finite(const Matrix<S>& m) {
  return m.allFinite();
}

/// Populates grad on every tensor reachable from `loss` that requires one.
template <typename S>
void backward(const Tensor<S>& loss) {
  if (loss.size() != 1) {
    throw NumericError("backward() needs a scalar loss, got " + std::to_string(loss.rows()) + "x" +
                       std::to_string(loss.cols()));
  }
  if (!std::isfinite(static_cast<double>(loss.item()))) {
    throw NumericError("backward() on a non-finite loss");
  }
  if (!loss.requires_grad()) return;

  static thread_local std::uint64_t epoch = 0;
  const std::uint64_t mark = ++epoch;

  // Iterative post-order DFS gives a topological order.
  using NodeT = detail::Node<S>;
  std::vector<NodeT*> order;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  loss.node()->visit_mark = mark;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* parent = node->parents[next++].get();
      if (parent->requires_grad && parent->visit_mark != mark) {
        parent->visit_mark = mark;
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix<S>::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (node->backward_fn && node->grad.size() != 0) node->backward_fn(*node);
  }
}

}  // namespace lqb
