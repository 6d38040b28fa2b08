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
#include "liquidbench/optim.hpp"
#include "liquidbench/rng.hpp"
#include "liquidbench/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace lqb {

/// Linear-beta DDPM schedule. Index t runs 1..steps; vectors are 0-based.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
  double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars.at(static_cast<std::size_t>(t - 1)); }
  /// Variance of q(x_{t-1} | x_t, x_0).
  double posterior_variance(int t) const { return (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)) * beta(t); }
};

NoiseSchedule make_schedule(int steps = 50, double beta_start = 1e-4, double beta_end = 2e-2);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, for t in [1, steps].
template <typename S>
Matrix<S> q_sample(const Matrix<S>& x0, int t, const Matrix<S>& eps, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps) {
    throw NumericError("q_sample: t=" + std::to_string(t) + " outside [1, " + std::to_string(sched.steps) + "]");
  }
  if (eps.rows() != x0.rows() || eps.cols() != x0.cols()) throw NumericError("q_sample: eps shape mismatch");
  const double ab = sched.alpha_bar(t);
  return static_cast<S>(std::sqrt(ab)) * x0 + static_cast<S>(std::sqrt(1.0 - ab)) * eps;
}

/// Sinusoidal embedding of integer timesteps, one row per entry.
template <typename S>
Matrix<S> timestep_embedding(const std::vector<int>& t, Index dim);

/// Predicts noise for a batch: (x_t rows, per-row timestep) -> eps rows.
template <typename S>
using DenoiserFn = std::function<Matrix<S>(const Matrix<S>& x_t, const std::vector<int>& t)>;

/// Mean squared noise-prediction error of an arbitrary denoiser, with
/// caller-provided timesteps and noise.
template <typename S>
double denoise_mse(const DenoiserFn<S>& denoiser, const Matrix<S>& x0, const std::vector<int>& t,
                   const Matrix<S>& eps, const NoiseSchedule& sched) {
  if (static_cast<Index>(t.size()) != x0.rows()) throw NumericError("denoise_mse: timestep count mismatch");
  Matrix<S> x_t(x0.rows(), x0.cols());
  for (Index i = 0; i < x0.rows(); ++i) x_t.row(i) = q_sample<S>(x0.row(i), t[static_cast<std::size_t>(i)], eps.row(i), sched);
  const Matrix<S> pred = denoiser(x_t, t);
  return static_cast<double>((pred - eps).squaredNorm()) / static_cast<double>(eps.size());
}

/// Ancestral sampling from N(0, I) through steps..1. Row i draws all its noise
/// from rngs[i]. Calls the denoiser exactly `steps` times. Output clipped to
/// [-1, 1] when `clip` is set.
template <typename S>
Matrix<S> ddpm_sample(const DenoiserFn<S>& denoiser, const NoiseSchedule& sched, Index width, std::vector<Rng>& rngs,
                      bool clip = true) {
  const Index b = static_cast<Index>(rngs.size());
  Matrix<S> x(b, width);
  for (Index i = 0; i < b; ++i) x.row(i) = normal_matrix<S>(1, width, rngs[static_cast<std::size_t>(i)]);
  for (int t = sched.steps; t >= 1; --t) {
    const Matrix<S> eps = denoiser(x, std::vector<int>(static_cast<std::size_t>(b), t));
    if (eps.rows() != b || eps.cols() != width) throw NumericError("ddpm_sample: denoiser output shape mismatch");
    const S c_eps = static_cast<S>(sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t)));
    const S c_x = static_cast<S>(1.0 / std::sqrt(sched.alpha(t)));
    Matrix<S> mean = c_x * (x - c_eps * eps);
    if (t > 1) {
      const double sd = std::sqrt(sched.posterior_variance(t));
      for (Index i = 0; i < b; ++i) {
        mean.row(i) += static_cast<S>(sd) * normal_matrix<S>(1, width, rngs[static_cast<std::size_t>(i)]);
      }
    }
    x = std::move(mean);
    if (!x.allFinite()) throw NumericError("ddpm_sample: non-finite sample at t=" + std::to_string(t));
  }
  if (clip) x = x.cwiseMax(S(-1)).cwiseMin(S(1));
  return x;
}

struct DiffusionConfig {
  Index d_model = 64;
  Index action_dim = 2;
  Index horizon = 16;
  /// Hidden width of the denoiser; 0 means "solve from a parameter target".
  Index width = 0;
  Index depth = 3;
  Index time_embed = 32;
  int steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.4;

  Index window_width() const { return horizon * action_dim; }
  Index input_width() const { return window_width() + time_embed + d_model; }
};

/// Denoiser parameter count for a given config (width must be resolved).
std::int64_t diffusion_param_count(const DiffusionConfig& cfg);

/// Smallest width whose parameter count reaches `target`.
Index diffusion_width_for(DiffusionConfig cfg, std::int64_t target);

/// Conditional noise-prediction MLP over [x_t | time embedding | context].
template <typename S>
class DiffusionHead {
 public:
  DiffusionHead() = default;
  DiffusionHead(const DiffusionConfig& cfg, Rng& rng);

  const DiffusionConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return sched_; }

  /// One network evaluation; increments the call counter.
  Tensor<S> predict_eps(const Tensor<S>& x_t, const std::vector<int>& t, const Tensor<S>& ctx) const;

  /// Mean squared noise error with t ~ U{1..T} and eps ~ N(0, I) per row.
  Tensor<S> denoise_loss(const Matrix<S>& x0, const Tensor<S>& ctx, Rng& rng) const;
  /// Same objective with caller-provided timesteps and noise.
  Tensor<S> denoise_loss(const Matrix<S>& x0, const Tensor<S>& ctx, const std::vector<int>& t,
                         const Matrix<S>& eps) const;

  /// One trajectory per context row; row i uses rngs[i].
  Matrix<S> sample(const Matrix<S>& ctx, std::vector<Rng>& rngs) const;
  /// K trajectories for one context, row k seeded with derive_seed(seed, {k}).
  std::vector<Matrix<S>> sample_trajectories(const RowVector<S>& ctx, Index count, std::uint64_t seed) const;

  std::uint64_t calls() const { return calls_; }
  void reset_calls() const { calls_ = 0; }

  ParamSet<S> params() const;

 private:
  DiffusionConfig cfg_;
  NoiseSchedule sched_;
  std::vector<Tensor<S>> weights_;
  std::vector<Tensor<S>> biases_;
  mutable std::uint64_t calls_ = 0;
};

extern template class DiffusionHead<float>;
extern template class DiffusionHead<double>;

}  // namespace lqb
