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

#include "liquidbench/tensor.hpp"

#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

namespace lqb {

namespace detail {

inline std::string shape_str(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

inline Index broadcast_dim(Index a, Index b, const char* op) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw NumericError(std::string(op) + ": incompatible dimensions " + std::to_string(a) + " and " +
                     std::to_string(b));
}

template <typename S>
Matrix<S> expand(const Matrix<S>& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

/// Sums a broadcast gradient back down to the operand's shape.
template <typename S>
Matrix<S> reduce_to(const Matrix<S>& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix<S>::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with row/column/scalar broadcasting.

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  const Index r = detail::broadcast_dim(a.rows(), b.rows(), "add");
  const Index c = detail::broadcast_dim(a.cols(), b.cols(), "add");
  Matrix<S> out = detail::expand(a.value(), r, c) + detail::expand(b.value(), r, c);
  return Tensor<S>::make(std::move(out), {a, b}, [](detail::Node<S>& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(detail::reduce_to(self.grad, p->value.rows(), p->value.cols()));
    }
  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  const Index r = detail::broadcast_dim(a.rows(), b.rows(), "sub");
  const Index c = detail::broadcast_dim(a.cols(), b.cols(), "sub");
  Matrix<S> out = detail::expand(a.value(), r, c) - detail::expand(b.value(), r, c);
  return Tensor<S>::make(std::move(out), {a, b}, [](detail::Node<S>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) pa->accumulate(detail::reduce_to(self.grad, pa->value.rows(), pa->value.cols()));
    if (pb->requires_grad) {
      pb->accumulate(detail::reduce_to<S>(-self.grad, pb->value.rows(), pb->value.cols()));
    }
  });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  const Index r = detail::broadcast_dim(a.rows(), b.rows(), "mul");
  const Index c = detail::broadcast_dim(a.cols(), b.cols(), "mul");
  Matrix<S> out = detail::expand(a.value(), r, c).cwiseProduct(detail::expand(b.value(), r, c));
  return Tensor<S>::make(std::move(out), {a, b}, [r, c](detail::Node<S>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      Matrix<S> g = self.grad.cwiseProduct(detail::expand(pb->value, r, c));
      pa->accumulate(detail::reduce_to(g, pa->value.rows(), pa->value.cols()));
    }
    if (pb->requires_grad) {
      Matrix<S> g = self.grad.cwiseProduct(detail::expand(pa->value, r, c));
      pb->accumulate(detail::reduce_to(g, pb->value.rows(), pb->value.cols()));
    }
  });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  const Index r = detail::broadcast_dim(a.rows(), b.rows(), "div");
  const Index c = detail::broadcast_dim(a.cols(), b.cols(), "div");
  Matrix<S> out = detail::expand(a.value(), r, c).cwiseQuotient(detail::expand(b.value(), r, c));
  return Tensor<S>::make(std::move(out), {a, b}, [r, c](detail::Node<S>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const Matrix<S> bv = detail::expand(pb->value, r, c);
    if (pa->requires_grad) {
      pa->accumulate(detail::reduce_to<S>(self.grad.cwiseQuotient(bv), pa->value.rows(), pa->value.cols()));
    }
    if (pb->requires_grad) {
      // d(a/b)/db = -out / b
      Matrix<S> g = -self.grad.cwiseProduct(self.value).cwiseQuotient(bv);
      pb->accumulate(detail::reduce_to(g, pb->value.rows(), pb->value.cols()));
    }
  });
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
/// Elementwise product; use matmul() for matrix products.
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <typename S>
Tensor<S> operator/(const Tensor<S>& a, const Tensor<S>& b) { return div(a, b); }

// ---------------------------------------------------------------------------
// Scalar affine ops.

template <typename S>
Tensor<S> scale(const Tensor<S>& a, std::type_identity_t<S> s) {
  return Tensor<S>::make(a.value() * s, {a}, [s](detail::Node<S>& self) {
    self.parents[0]->accumulate(self.grad * s);
  });
}

template <typename S>
Tensor<S> shift(const Tensor<S>& a, std::type_identity_t<S> s) {
  Matrix<S> out = a.value().array() + s;
  return Tensor<S>::make(std::move(out), {a}, [](detail::Node<S>& self) {
    self.parents[0]->accumulate(self.grad);
  });
}

template <typename S>
Tensor<S> operator*(const Tensor<S>& a, std::type_identity_t<S> s) { return scale(a, s); }
template <typename S>
Tensor<S> operator*(std::type_identity_t<S> s, const Tensor<S>& a) { return scale(a, s); }
template <typename S>
Tensor<S> operator+(const Tensor<S>& a, std::type_identity_t<S> s) { return shift(a, s); }
template <typename S>
Tensor<S> operator+(std::type_identity_t<S> s, const Tensor<S>& a) { return shift(a, s); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, std::type_identity_t<S> s) { return shift(a, -s); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a) { return scale(a, S(-1)); }
template <typename S>
Tensor<S> operator-(std::type_identity_t<S> s, const Tensor<S>& a) { return shift(scale(a, S(-1)), s); }

// ---------------------------------------------------------------------------
// Linear algebra.

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.cols() != b.rows()) {
    throw NumericError("matmul: " + detail::shape_str(a.rows(), a.cols()) + " by " +
                       detail::shape_str(b.rows(), b.cols()));
  }
  Matrix<S> out = a.value() * b.value();
  return Tensor<S>::make(std::move(out), {a, b}, [](detail::Node<S>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) pa->accumulate(self.grad * pb->value.transpose());
    if (pb->requires_grad) pb->accumulate(pa->value.transpose() * self.grad);
  });
}

/// y = x W^T + b, with W stored as (out x in) and b as a 1 x out row.
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  if (x.cols() != weight.cols()) {
    throw NumericError("linear: input " + detail::shape_str(x.rows(), x.cols()) + " vs weight " +
                       detail::shape_str(weight.rows(), weight.cols()));
  }
  if (bias.rows() != 1 || bias.cols() != weight.rows()) {
    throw NumericError("linear: bias " + detail::shape_str(bias.rows(), bias.cols()) + " vs weight " +
                       detail::shape_str(weight.rows(), weight.cols()));
  }
  Matrix<S> out = x.value() * weight.value().transpose();
  out.rowwise() += bias.value().row(0);
  return Tensor<S>::make(std::move(out), {x, weight, bias}, [](detail::Node<S>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    if (px->requires_grad) px->accumulate(self.grad * pw->value);
    if (pw->requires_grad) pw->accumulate(self.grad.transpose() * px->value);
    if (pb->requires_grad) pb->accumulate(self.grad.colwise().sum());
  });
}

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight) {
  if (x.cols() != weight.cols()) {
    throw NumericError("linear: input " + detail::shape_str(x.rows(), x.cols()) + " vs weight " +
                       detail::shape_str(weight.rows(), weight.cols()));
  }
  Matrix<S> out = x.value() * weight.value().transpose();
  return Tensor<S>::make(std::move(out), {x, weight}, [](detail::Node<S>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    if (px->requires_grad) px->accumulate(self.grad * pw->value);
    if (pw->requires_grad) pw->accumulate(self.grad.transpose() * px->value);
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities.

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  Matrix<S> out = (S(1) + (-a.value().array()).exp()).inverse().matrix();
  return Tensor<S>::make(std::move(out), {a}, [](detail::Node<S>& self) {
    const auto y = self.value.array();
    self.parents[0]->accumulate((self.grad.array() * y * (S(1) - y)).matrix());
  });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& a) {
  Matrix<S> out = a.value().array().tanh().matrix();
  return Tensor<S>::make(std::move(out), {a}, [](detail::Node<S>& self) {
    const auto y = self.value.array();
    self.parents[0]->accumulate((self.grad.array() * (S(1) - y.square())).matrix());
  });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& a) {
  Matrix<S> out = a.value().array().exp().matrix();
  return Tensor<S>::make(std::move(out), {a}, [](detail::Node<S>& self) {
    self.parents[0]->accumulate(self.grad.cwiseProduct(self.value));
  });
}

template <typename S>
Tensor<S> log(const Tensor<S>& a) {
  Matrix<S> out = a.value().array().log().matrix();
  return Tensor<S>::make(std::move(out), {a}, [](detail::Node<S>& self) {
    self.parents[0]->accumulate(self.grad.cwiseQuotient(self.parents[0]->value));
  });
}

template <typename S>
Tensor<S> square(const Tensor<S>& a) {
  Matrix<S> out = a.value().array().square().matrix();
  return Tensor<S>::make(std::move(out), {a}, [](detail::Node<S>& self) {
    self.parents[0]->accumulate((S(2) * self.grad.array() * self.parents[0]->value.array()).matrix());
  });
}

/// x * sigmoid(x)
template <typename S>
Tensor<S> silu(const Tensor<S>& a) {
  const auto x = a.value().array();
  Matrix<S> out = (x / (S(1) + (-x).exp())).matrix();
  return Tensor<S>::make(std::move(out), {a}, [](detail::Node<S>& self) {
    const auto x = self.parents[0]->value.array();
    const auto s = (S(1) + (-x).exp()).inverse();
    self.parents[0]->accumulate((self.grad.array() * s * (S(1) + x * (S(1) - s))).matrix());
  });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  Matrix<S> out = a.value().cwiseMax(S(0));
  return Tensor<S>::make(std::move(out), {a}, [](detail::Node<S>& self) {
    const auto mask = (self.parents[0]->value.array() > S(0)).template cast<S>();
    self.parents[0]->accumulate((self.grad.array() * mask).matrix());
  });
}

// ---------------------------------------------------------------------------
// Shape ops.

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw NumericError("concat_cols: no inputs");
  const Index r = parts.front().rows();
  Index c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw NumericError("concat_cols: row mismatch");
    c += p.cols();
  }
  Matrix<S> out(r, c);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return Tensor<S>::make(std::move(out), parts, [](detail::Node<S>& self) {
    Index at = 0;
    for (auto& p : self.parents) {
      const Index w = p->value.cols();
      if (p->requires_grad) p->accumulate(self.grad.middleCols(at, w));
      at += w;
    }
  });
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw NumericError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                       ") out of " + std::to_string(a.cols()));
  }
  Matrix<S> out = a.value().middleCols(start, count);
  return Tensor<S>::make(std::move(out), {a}, [start, count](detail::Node<S>& self) {
    auto& p = self.parents[0];
    Matrix<S> g = Matrix<S>::Zero(p->value.rows(), p->value.cols());
    g.middleCols(start, count) = self.grad;
    p->accumulate(g);
  });
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw NumericError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                       ") out of " + std::to_string(a.rows()));
  }
  Matrix<S> out = a.value().middleRows(start, count);
  return Tensor<S>::make(std::move(out), {a}, [start, count](detail::Node<S>& self) {
    auto& p = self.parents[0];
    Matrix<S> g = Matrix<S>::Zero(p->value.rows(), p->value.cols());
    g.middleRows(start, count) = self.grad;
    p->accumulate(g);
  });
}

/// Repeats a 1 x n row `rows` times.
template <typename S>
Tensor<S> broadcast_rows(const Tensor<S>& a, Index rows) {
  if (a.rows() != 1) throw NumericError("broadcast_rows: expects a single row");
  Matrix<S> out = a.value().replicate(rows, 1);
  return Tensor<S>::make(std::move(out), {a}, [](detail::Node<S>& self) {
    self.parents[0]->accumulate(self.grad.colwise().sum());
  });
}

// ---------------------------------------------------------------------------
// Reductions.

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  return Tensor<S>::make(Matrix<S>::Constant(1, 1, a.value().sum()), {a}, [](detail::Node<S>& self) {
    auto& p = self.parents[0];
    p->accumulate(Matrix<S>::Constant(p->value.rows(), p->value.cols(), self.grad(0, 0)));
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  const S n = static_cast<S>(a.size());
  return Tensor<S>::make(Matrix<S>::Constant(1, 1, a.value().sum() / n), {a}, [n](detail::Node<S>& self) {
    auto& p = self.parents[0];
    p->accumulate(Matrix<S>::Constant(p->value.rows(), p->value.cols(), self.grad(0, 0) / n));
  });
}

/// Per-row sum: (B x n) -> (B x 1).
template <typename S>
Tensor<S> row_sum(const Tensor<S>& a) {
  Matrix<S> out = a.value().rowwise().sum();
  return Tensor<S>::make(std::move(out), {a}, [](detail::Node<S>& self) {
    auto& p = self.parents[0];
    p->accumulate(self.grad.replicate(1, p->value.cols()));
  });
}

// ---------------------------------------------------------------------------
// Normalization.

/// Per-row softmax.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& a) {
  Matrix<S> out = a.value();
  for (Index i = 0; i < out.rows(); ++i) {
    const S m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return Tensor<S>::make(std::move(out), {a}, [](detail::Node<S>& self) {
    const auto& y = self.value;
    Matrix<S> dot = (self.grad.cwiseProduct(y)).rowwise().sum();
    Matrix<S> g = y.cwiseProduct(self.grad - dot.replicate(1, y.cols()));
    self.parents[0]->accumulate(g);
  });
}

/// Per-row (x - mean) / sqrt(var + eps), before any affine rescale.
template <typename S>
Matrix<S> layer_norm_standardize(const Matrix<S>& x, S eps) {
  Matrix<S> out(x.rows(), x.cols());
  const S n = static_cast<S>(x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const S mu = x.row(i).sum() / n;
    const S var = (x.row(i).array() - mu).square().sum() / n;
    out.row(i) = ((x.row(i).array() - mu) / sqrt(var + eps)).matrix();
  }
  return out;
}

/// Per-row layer normalization with a 1 x n gain and bias.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias, S eps = S(1e-5)) {
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols()) {
    throw NumericError("layer_norm: affine parameters must be 1 x " + std::to_string(x.cols()));
  }
  const Index n = x.cols();
  Matrix<S> xhat(x.rows(), n);
  Vector<S> inv_std(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const S mu = x.value().row(i).sum() / static_cast<S>(n);
    const S var = (x.value().row(i).array() - mu).square().sum() / static_cast<S>(n);
    inv_std(i) = S(1) / sqrt(var + eps);
    xhat.row(i) = ((x.value().row(i).array() - mu) * inv_std(i)).matrix();
  }
  Matrix<S> out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return Tensor<S>::make(std::move(out), {x, gain, bias},
                         [xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<S>& self) {
                           auto& px = self.parents[0];
                           auto& pg = self.parents[1];
                           auto& pb = self.parents[2];
                           if (pg->requires_grad) pg->accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
                           if (pb->requires_grad) pb->accumulate(self.grad.colwise().sum());
                           if (px->requires_grad) {
                             const S n = static_cast<S>(xhat.cols());
                             Matrix<S> dxhat = self.grad.array().rowwise() * pg->value.row(0).array();
                             Matrix<S> dx(xhat.rows(), xhat.cols());
                             for (Index i = 0; i < xhat.rows(); ++i) {
                               const S m1 = dxhat.row(i).sum() / n;
                               const S m2 = dxhat.row(i).dot(xhat.row(i)) / n;
                               dx.row(i) =
                                   ((dxhat.row(i).array() - m1 - xhat.row(i).array() * m2) * inv_std(i)).matrix();
                             }
                             px->accumulate(dx);
                           }
                         });
}

}  // namespace lqb
