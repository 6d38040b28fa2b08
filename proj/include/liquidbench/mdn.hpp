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

#include "liquidbench/ops.hpp"
#include "liquidbench/rng.hpp"
#include "liquidbench/tensor.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace lqb {

inline constexpr double kDefaultSigmaFloor = 1e-3;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

/// Width of one step's raw mixture output: K logits, K*d means, K*d log-stds.
inline Index mixture_output_width(Index components, Index action_dim) {
  return components * (2 * action_dim + 1);
}

/// One step's Gaussian mixture with diagonal covariances.
/// Rows of `means` / `stds` index components.
template <typename S>
struct MixtureParams {
  Vector<S> weights;
  Matrix<S> means;
  Matrix<S> stds;

  Index components() const { return weights.size(); }
  Index action_dim() const { return means.cols(); }
};

/// Decodes one raw output row: softmax for weights, exp + floor for stds.
template <typename S>
MixtureParams<S> mixture_from_raw(const Eigen::Ref<const RowVector<S>>& raw, Index components, Index action_dim,
                                  double sigma_floor = kDefaultSigmaFloor) {
  if (raw.size() != mixture_output_width(components, action_dim)) {
    throw NumericError("mixture_from_raw: expected width " +
                       std::to_string(mixture_output_width(components, action_dim)) + ", got " +
                       std::to_string(raw.size()));
  }
  if (!raw.allFinite()) throw NumericError("mixture_from_raw: non-finite head output");
  MixtureParams<S> mix;
  const auto logits = raw.head(components);
  const S m = logits.maxCoeff();
  mix.weights = (logits.array() - m).exp().matrix().transpose();
  mix.weights /= mix.weights.sum();
  mix.means.resize(components, action_dim);
  mix.stds.resize(components, action_dim);
  for (Index j = 0; j < components; ++j) {
    for (Index d = 0; d < action_dim; ++d) {
      mix.means(j, d) = raw(components + j * action_dim + d);
      const S s = exp(raw(components + components * action_dim + j * action_dim + d));
      mix.stds(j, d) = std::max(s, static_cast<S>(sigma_floor));
    }
  }
  return mix;
}

/// Exact -log sum_j pi_j prod_d N(a_d; mu_jd, sigma_jd^2), via log-sum-exp.
/// Accumulates in double regardless of S.
template <typename S, typename Derived>
double mdn_nll(const MixtureParams<S>& mix, const Eigen::MatrixBase<Derived>& action) {
  if (action.size() != mix.action_dim()) throw NumericError("mdn_nll: action dimension mismatch");
  if (!action.allFinite()) throw NumericError("mdn_nll: non-finite action");
  const Index k = mix.components();
  std::vector<double> terms(static_cast<std::size_t>(k));
  double best = -std::numeric_limits<double>::infinity();
  for (Index j = 0; j < k; ++j) {
    double lp = std::log(static_cast<double>(mix.weights(j)));
    for (Index d = 0; d < mix.action_dim(); ++d) {
      const double s = static_cast<double>(mix.stds(j, d));
      const double z = (static_cast<double>(action(d)) - static_cast<double>(mix.means(j, d))) / s;
      lp += -kHalfLog2Pi - std::log(s) - 0.5 * z * z;
    }
    terms[static_cast<std::size_t>(j)] = lp;
    best = std::max(best, lp);
  }
  if (!std::isfinite(best)) throw NumericError("mdn_nll: every component has zero weight");
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - best);
  return -(best + std::log(acc));
}

/// Index of the highest-weight component (first on ties).
template <typename S>
Index argmax_component(const MixtureParams<S>& mix) {
  Index best = 0;
  for (Index j = 1; j < mix.components(); ++j)
    if (mix.weights(j) > mix.weights(best)) best = j;
  return best;
}

/// Component drawn from the weights, then a diagonal Gaussian draw.
template <typename S>
RowVector<S> sample_mixture(const MixtureParams<S>& mix, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  Index comp = mix.components() - 1;
  for (Index j = 0; j < mix.components(); ++j) {
    acc += static_cast<double>(mix.weights(j));
    if (u < acc) {
      comp = j;
      break;
    }
  }
  RowVector<S> out(mix.action_dim());
  for (Index d = 0; d < mix.action_dim(); ++d) {
    out(d) = static_cast<S>(static_cast<double>(mix.means(comp, d)) +
                            static_cast<double>(mix.stds(comp, d)) * standard_normal(rng));
  }
  return out;
}

/// Row-wise mixture NLL as a differentiable op: raw (B x K(2d+1)) against
/// constant targets (B x d) gives (B x 1). Stds are exp(raw) floored at
/// sigma_floor; the floor has zero gradient where active.
template <typename S>
Tensor<S> mdn_nll(const Tensor<S>& raw, const Matrix<S>& target, Index components,
                  double sigma_floor = kDefaultSigmaFloor) {
  const Index d = target.cols();
  const Index k = components;
  const Index b = raw.rows();
  if (raw.cols() != mixture_output_width(k, d) || target.rows() != b) {
    throw NumericError("mdn_nll: raw " + detail::shape_str(raw.rows(), raw.cols()) + " vs target " +
                       detail::shape_str(target.rows(), target.cols()));
  }
  const auto& r = raw.value();
  const S floor = static_cast<S>(sigma_floor);

  Matrix<S> out(b, 1);
  // Posterior responsibilities and prior weights, kept for the backward pass.
  Matrix<S> gamma(b, k);
  Matrix<S> prior(b, k);
  std::vector<S> lp(static_cast<std::size_t>(k));
  for (Index i = 0; i < b; ++i) {
    const S lmax = r.row(i).head(k).maxCoeff();
    S lse_logits = 0;
    for (Index j = 0; j < k; ++j) lse_logits += exp(r(i, j) - lmax);
    lse_logits = lmax + log(lse_logits);
    S best = -std::numeric_limits<S>::infinity();
    for (Index j = 0; j < k; ++j) {
      prior(i, j) = exp(r(i, j) - lse_logits);
      S acc = r(i, j) - lse_logits;
      for (Index c = 0; c < d; ++c) {
        const S sigma = std::max(exp(r(i, k + k * d + j * d + c)), floor);
        const S z = (target(i, c) - r(i, k + j * d + c)) / sigma;
        acc += -static_cast<S>(kHalfLog2Pi) - log(sigma) - S(0.5) * z * z;
      }
      lp[static_cast<std::size_t>(j)] = acc;
      best = std::max(best, acc);
    }
    S total = 0;
    for (Index j = 0; j < k; ++j) total += exp(lp[static_cast<std::size_t>(j)] - best);
    const S lse = best + log(total);
    out(i, 0) = -lse;
    for (Index j = 0; j < k; ++j) gamma(i, j) = exp(lp[static_cast<std::size_t>(j)] - lse);
  }
  if (!out.allFinite()) throw NumericError("mdn_nll: non-finite likelihood");

  return Tensor<S>::make(
      std::move(out), {raw},
      [target, gamma = std::move(gamma), prior = std::move(prior), k, d, floor](detail::Node<S>& self) {
        const auto& r = self.parents[0]->value;
        Matrix<S> g(r.rows(), r.cols());
        for (Index i = 0; i < r.rows(); ++i) {
          const S up = self.grad(i, 0);
          for (Index j = 0; j < k; ++j) {
            const S gm = gamma(i, j);
            g(i, j) = up * (prior(i, j) - gm);
            for (Index c = 0; c < d; ++c) {
              const S ls = r(i, k + k * d + j * d + c);
              const S es = exp(ls);
              const bool floored = es < floor;
              const S sigma = floored ? floor : es;
              const S diff = target(i, c) - r(i, k + j * d + c);
              g(i, k + j * d + c) = -up * gm * diff / (sigma * sigma);
              const S z = diff / sigma;
              g(i, k + k * d + j * d + c) = floored ? S(0) : up * gm * (S(1) - z * z);
            }
          }
        }
        self.parents[0]->accumulate(g);
      });
}

/// Per-row mean of the highest-weight component: raw (B x K(2d+1)) -> (B x d).
/// Gradient flows into the selected means; the selection itself is constant.
template <typename S>
Tensor<S> argmax_component_mean(const Tensor<S>& raw, Index components, Index action_dim) {
  const Index k = components;
  const Index d = action_dim;
  if (raw.cols() != mixture_output_width(k, d)) throw NumericError("argmax_component_mean: width mismatch");
  const auto& r = raw.value();
  std::vector<Index> pick(static_cast<std::size_t>(r.rows()));
  Matrix<S> out(r.rows(), d);
  for (Index i = 0; i < r.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < k; ++j)
      if (r(i, j) > r(i, best)) best = j;
    pick[static_cast<std::size_t>(i)] = best;
    out.row(i) = r.row(i).segment(k + best * d, d);
  }
  return Tensor<S>::make(std::move(out), {raw}, [pick = std::move(pick), k, d](detail::Node<S>& self) {
    const auto& r = self.parents[0]->value;
    Matrix<S> g = Matrix<S>::Zero(r.rows(), r.cols());
    for (Index i = 0; i < r.rows(); ++i) {
      g.row(i).segment(k + pick[static_cast<std::size_t>(i)] * d, d) = self.grad.row(i);
    }
    self.parents[0]->accumulate(g);
  });
}

}  // namespace lqb
