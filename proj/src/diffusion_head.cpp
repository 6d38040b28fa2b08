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

#include "liquidbench/diffusion_head.hpp"

#include "liquidbench/quad.hpp"

#include <string>

namespace lqb {

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw NumericError("make_schedule: steps must be at least 1, got " + std::to_string(steps));
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw NumericError("make_schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double beta = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
    s.betas.push_back(beta);
    s.alphas.push_back(1.0 - beta);
    prod *= 1.0 - beta;
    s.alpha_bars.push_back(prod);
  }
  return s;
}

template <typename S>
Matrix<S> timestep_embedding(const std::vector<int>& t, Index dim) {
  const Index half = dim / 2;
  Matrix<S> out = Matrix<S>::Zero(static_cast<Index>(t.size()), dim);
  for (Index i = 0; i < static_cast<Index>(t.size()); ++i) {
    for (Index j = 0; j < half; ++j) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
      const double arg = static_cast<double>(t[static_cast<std::size_t>(i)]) * freq;
      out(i, j) = static_cast<S>(std::sin(arg));
      out(i, half + j) = static_cast<S>(std::cos(arg));
    }
  }
  return out;
}

template Matrix<float> timestep_embedding<float>(const std::vector<int>&, Index);
template Matrix<double> timestep_embedding<double>(const std::vector<int>&, Index);

std::int64_t diffusion_param_count(const DiffusionConfig& cfg) {
  const std::int64_t w = cfg.width;
  std::int64_t n = cfg.input_width() * w + w;
  n += (cfg.depth - 1) * (w * w + w);
  n += w * cfg.window_width() + cfg.window_width();
  return n;
}

Index diffusion_width_for(DiffusionConfig cfg, std::int64_t target) {
  Index w = 1;
  for (;; ++w) {
    cfg.width = w;
    if (diffusion_param_count(cfg) >= target) break;
  }
  // Pick whichever neighbour lands closer.
  cfg.width = w - 1;
  const std::int64_t below = w > 1 ? target - diffusion_param_count(cfg) : target;
  cfg.width = w;
  const std::int64_t above = diffusion_param_count(cfg) - target;
  return (w > 1 && below < above) ? w - 1 : w;
}

template <typename S>
DiffusionHead<S>::DiffusionHead(const DiffusionConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.width < 1 || cfg.depth < 1) throw NumericError("DiffusionHead: width and depth must be positive");
  sched_ = make_schedule(cfg.steps, cfg.beta_start, cfg.beta_end);
  Index in = cfg.input_width();
  for (Index l = 0; l <= cfg.depth; ++l) {
    const Index out = l == cfg.depth ? cfg.window_width() : cfg.width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weights_.push_back(Tensor<S>::parameter(uniform_matrix<S>(out, in, rng, -bound, bound)));
    biases_.push_back(Tensor<S>::parameter(uniform_matrix<S>(1, out, rng, -bound, bound)));
    in = out;
  }
}

template <typename S>
Tensor<S> DiffusionHead<S>::predict_eps(const Tensor<S>& x_t, const std::vector<int>& t, const Tensor<S>& ctx) const {
  if (x_t.cols() != cfg_.window_width() || ctx.cols() != cfg_.d_model || ctx.rows() != x_t.rows() ||
      static_cast<Index>(t.size()) != x_t.rows()) {
    throw NumericError("predict_eps: x_t " + detail::shape_str(x_t.rows(), x_t.cols()) + ", ctx " +
                       detail::shape_str(ctx.rows(), ctx.cols()) + ", " + std::to_string(t.size()) + " timesteps");
  }
  ++calls_;
  Tensor<S> h = concat_cols<S>({x_t, Tensor<S>(timestep_embedding<S>(t, cfg_.time_embed)), ctx});
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l) h = silu(linear(h, weights_[l], biases_[l]));
  return linear(h, weights_.back(), biases_.back());
}

template <typename S>
Tensor<S> DiffusionHead<S>::denoise_loss(const Matrix<S>& x0, const Tensor<S>& ctx, Rng& rng) const {
  std::uniform_int_distribution<int> pick(1, sched_.steps);
  std::vector<int> t(static_cast<std::size_t>(x0.rows()));
  Matrix<S> eps(x0.rows(), x0.cols());
  for (Index i = 0; i < x0.rows(); ++i) {
    t[static_cast<std::size_t>(i)] = pick(rng);
    eps.row(i) = normal_matrix<S>(1, x0.cols(), rng);
  }
  return denoise_loss(x0, ctx, t, eps);
}

template <typename S>
Tensor<S> DiffusionHead<S>::denoise_loss(const Matrix<S>& x0, const Tensor<S>& ctx, const std::vector<int>& t,
                                         const Matrix<S>& eps) const {
  if (static_cast<Index>(t.size()) != x0.rows()) throw NumericError("denoise_loss: timestep count mismatch");
  Matrix<S> x_t(x0.rows(), x0.cols());
  for (Index i = 0; i < x0.rows(); ++i) {
    x_t.row(i) = q_sample<S>(x0.row(i), t[static_cast<std::size_t>(i)], eps.row(i), sched_);
  }
  Tensor<S> pred = predict_eps(Tensor<S>(x_t), t, ctx);
  return mean(square(pred - Tensor<S>(eps)));
}

template <typename S>
Matrix<S> DiffusionHead<S>::sample(const Matrix<S>& ctx, std::vector<Rng>& rngs) const {
  if (static_cast<Index>(rngs.size()) != ctx.rows()) throw NumericError("sample: one rng per context row required");
  NoGradGuard guard;
  const Tensor<S> c(ctx);
  DenoiserFn<S> fn = [&](const Matrix<S>& x, const std::vector<int>& t) {
    return predict_eps(Tensor<S>(x), t, c).value();
  };
  return ddpm_sample<S>(fn, sched_, cfg_.window_width(), rngs, true);
}

template <typename S>
std::vector<Matrix<S>> DiffusionHead<S>::sample_trajectories(const RowVector<S>& ctx, Index count,
                                                             std::uint64_t seed) const {
  if (count < 1) throw NumericError("sample_trajectories: count must be at least 1");
  std::vector<Rng> rngs;
  for (Index k = 0; k < count; ++k) rngs.emplace_back(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
  const Matrix<S> flat = sample(ctx.replicate(count, 1), rngs);
  std::vector<Matrix<S>> out;
  for (Index k = 0; k < count; ++k) {
    Matrix<S> traj(cfg_.horizon, cfg_.action_dim);
    for (Index s = 0; s < cfg_.horizon; ++s) traj.row(s) = flat.row(k).segment(s * cfg_.action_dim, cfg_.action_dim);
    out.push_back(std::move(traj));
  }
  return out;
}

template <typename S>
ParamSet<S> DiffusionHead<S>::params() const {
  ParamSet<S> ps;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    ps.push_back({"diffusion.l" + std::to_string(l) + ".weight", weights_[l]});
    ps.push_back({"diffusion.l" + std::to_string(l) + ".bias", biases_[l]});
  }
  return ps;
}

template class DiffusionHead<float>;
template class DiffusionHead<double>;

template Matrix<Quad> timestep_embedding<Quad>(const std::vector<int>&, Index);
template class DiffusionHead<Quad>;

}  // namespace lqb
