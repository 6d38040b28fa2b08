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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "liquidbench/backbone.hpp"
#include "liquidbench/diffusion_head.hpp"
#include "liquidbench/gradcheck.hpp"
#include "liquidbench/liquid_head.hpp"
#include "liquidbench/quad.hpp"

#include <cstring>

using namespace lqb;

namespace {

DiffusionConfig small_config() {
  DiffusionConfig c;
  c.d_model = 4;
  c.horizon = 3;
  c.width = 8;
  c.time_embed = 8;
  return c;
}

DenoiserFn<double> single_point_oracle(const RowVector<double>& x0, const NoiseSchedule& sched) {
  return [x0, &sched](const Matrix<double>& x, const std::vector<int>& t) {
    Matrix<double> out(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      const double ab = sched.alpha_bar(t[static_cast<std::size_t>(i)]);
      out.row(i) = (x.row(i) - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
    }
    return out;
  };
}

}  // namespace

TEST_CASE("noise schedule") {
  const auto one = make_schedule(1);
  CHECK(one.betas.size() == 1);
  CHECK(one.beta(1) == 1e-4);
  CHECK(one.alpha_bar(1) == doctest::Approx(1 - 1e-4).epsilon(1e-15));

  const auto s = make_schedule(50);
  CHECK(s.beta(1) == 1e-4);
  CHECK(s.beta(50) == doctest::Approx(2e-2).epsilon(1e-15));
  double prod = 1.0;
  for (int t = 1; t <= 50; ++t) {
    CHECK(s.beta(t) > 0.0);
    CHECK(s.beta(t) < 1.0);
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    prod *= 1.0 - (1e-4 + (2e-2 - 1e-4) * (t - 1) / 49.0);
  }
  CHECK(std::abs(s.alpha_bar(50) - prod) < 1e-12);
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.posterior_variance(1) == 0.0);
  CHECK_THROWS_AS(make_schedule(0), NumericError);
  CHECK_THROWS_AS(make_schedule(10, 0.5, 0.1), NumericError);
}

TEST_CASE("q_sample") {
  const auto s = make_schedule(50);
  Rng rng(1);
  const Matrix<double> x0 = uniform_matrix<double>(1, 32, rng, -1, 1);
  const Matrix<double> zero = Matrix<double>::Zero(1, 32);
  CHECK((q_sample<double>(x0, 20, zero, s) - std::sqrt(s.alpha_bar(20)) * x0).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(q_sample<double>(x0, 0, zero, s), NumericError);
  CHECK_THROWS_AS(q_sample<double>(x0, 51, zero, s), NumericError);
  CHECK_THROWS_AS(q_sample<double>(x0, 5, Matrix<double>::Zero(1, 31), s), NumericError);

  // Hypothetical alpha_bar = 1 leaves x0 untouched.
  NoiseSchedule flat;
  flat.steps = 1;
  flat.betas = {0.0};
  flat.alphas = {1.0};
  flat.alpha_bars = {1.0};
  CHECK(q_sample<double>(x0, 1, normal_matrix<double>(1, 32, rng), flat) == x0);

  for (int t : {1, 25, 50}) {
    const int n = 10000;
    double acc = 0.0, acc2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = q_sample<double>(x0, t, normal_matrix<double>(1, 32, rng), s).squaredNorm();
      acc += v;
      acc2 += v * v;
    }
    const double mean = acc / n;
    const double se = std::sqrt((acc2 / n - mean * mean) / n);
    const double expect = s.alpha_bar(t) * x0.squaredNorm() + (1.0 - s.alpha_bar(t)) * 32;
    CHECK(std::abs(mean - expect) < 3 * se);
  }
}

TEST_CASE("denoise loss limits") {
  const auto s = make_schedule(50);
  Rng rng(2);
  const Matrix<double> x0 = uniform_matrix<double>(64, 6, rng, -1, 1);
  std::vector<int> t(64);
  for (auto& v : t) v = std::uniform_int_distribution<int>(1, 50)(rng);
  const Matrix<double> eps = normal_matrix<double>(64, 6, rng);
  // Recover eps exactly from x_t through the known x0.
  DenoiserFn<double> oracle = [&](const Matrix<double>& x, const std::vector<int>& ts) {
    Matrix<double> out(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      const double ab = s.alpha_bar(ts[static_cast<std::size_t>(i)]);
      out.row(i) = (x.row(i) - std::sqrt(ab) * x0.row(i)) / std::sqrt(1.0 - ab);
    }
    return out;
  };
  CHECK(denoise_mse(oracle, x0, t, eps, s) < 1e-20);

  // A network with zero output layer predicts 0: loss is E[eps^2] = 1.
  Rng init(3);
  DiffusionHead<double> head(small_config(), init);
  auto ps = head.params();
  ps[ps.size() - 2].tensor.value().setZero();
  ps[ps.size() - 1].tensor.value().setZero();
  const int n = 10000;
  const Matrix<double> ctx = normal_matrix<double>(1, 4, rng);
  const Matrix<double> one = uniform_matrix<double>(1, 6, rng, -1, 1);
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = head.denoise_loss(one, Tensor<double>(ctx), rng).item();
    acc += v;
    acc2 += v * v;
  }
  const double mean = acc / n;
  const double se = std::sqrt((acc2 / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0) < 3 * se);
}

TEST_CASE("denoise loss grad check with fixed timesteps and noise") {
  Rng rng(4);
  Rng twin_rng(0);
  DiffusionHead<double> head(small_config(), rng);
  DiffusionHead<Quad> twin(small_config(), twin_rng);
  const Matrix<double> x0 = uniform_matrix<double>(3, 6, rng, -1, 1);
  const Matrix<double> ctx = normal_matrix<double>(3, 4, rng);
  const Matrix<double> eps = normal_matrix<double>(3, 6, rng);
  const std::vector<int> t{1, 17, 50};
  const Matrix<Quad> qx0 = x0.cast<Quad>();
  const Matrix<Quad> qctx = ctx.cast<Quad>();
  const Matrix<Quad> qeps = eps.cast<Quad>();
  auto ps = head.params();
  auto qs = twin.params();
  CHECK(grad_check<double>([&] { return head.denoise_loss(x0, Tensor<double>(ctx), t, eps); }, ps, 1e-5) < 1e-6);
  auto r = grad_check_mixed([&] { return head.denoise_loss(x0, Tensor<double>(ctx), t, eps); }, ps,
                            [&] { return twin.denoise_loss(qx0, Tensor<Quad>(qctx), t, qeps); }, qs, 1e-6);
  CHECK(r.max_relative_error < 1e-6);

  Rng frng(5);
  DiffusionHead<float> fhead(small_config(), frng);
  auto fs = fhead.params();
  const Matrix<float> fx0 = x0.cast<float>();
  const Matrix<float> fctx = ctx.cast<float>();
  const Matrix<float> feps = eps.cast<float>();
  auto r32 = grad_check_mixed([&] { return fhead.denoise_loss(fx0, Tensor<float>(fctx), t, feps); }, fs,
                              [&] { return head.denoise_loss(x0, Tensor<double>(ctx), t, eps); }, ps, 1e-6);
  CHECK(r32.max_relative_error < 1e-3);
}

TEST_CASE("sampling is seeded, clipped and makes exactly T calls") {
  Rng rng(6);
  DiffusionConfig cfg;
  cfg.width = 32;
  DiffusionHead<double> head(cfg, rng);
  const RowVector<double> ctx = normal_matrix<double>(1, 64, rng);
  head.reset_calls();
  const auto a = head.sample_trajectories(ctx, 1, 11);
  CHECK(head.calls() == 50);
  const auto b = head.sample_trajectories(ctx, 1, 11);
  CHECK(std::memcmp(a[0].data(), b[0].data(), sizeof(double) * 32) == 0);
  CHECK(a[0].rows() == 16);
  CHECK(a[0].cols() == 2);

  head.reset_calls();
  const auto many = head.sample_trajectories(ctx, 10, 11);
  CHECK(head.calls() == 50);
  CHECK(many[0] == a[0]);
  for (const auto& m : many) {
    CHECK(m.maxCoeff() <= 1.0);
    CHECK(m.minCoeff() >= -1.0);
  }
  CHECK_THROWS_AS(head.sample_trajectories(ctx, 0, 1), NumericError);
}

TEST_CASE("perfect denoiser on a single-window dataset recovers the window") {
  Rng rng(7);
  const RowVector<double> x0 = uniform_matrix<double>(1, 32, rng, -0.9, 0.9);
  for (const auto& s : {make_schedule(50), make_schedule(50, 1e-4, 0.4)}) {
    std::vector<Rng> rngs;
    for (int k = 0; k < 8; ++k) rngs.emplace_back(derive_seed(3, {static_cast<std::uint64_t>(k)}));
    int calls = 0;
    auto base = single_point_oracle(x0, s);
    DenoiserFn<double> fn = [&](const Matrix<double>& x, const std::vector<int>& t) {
      ++calls;
      return base(x, t);
    };
    const Matrix<double> out = ddpm_sample<double>(fn, s, 32, rngs, true);
    CHECK(calls == 50);
    for (Index i = 0; i < out.rows(); ++i) CHECK((out.row(i) - x0).cwiseAbs().maxCoeff() < 0.05);
  }
}

TEST_CASE("parameter count and width solver") {
  Rng rng(8);
  DiffusionHead<double> head(small_config(), rng);
  std::int64_t n = 0;
  for (const auto& p : head.params()) n += p.tensor.size();
  CHECK(n == diffusion_param_count(small_config()));

  DiffusionConfig cfg;
  const std::int64_t target = 500000;
  cfg.width = diffusion_width_for(cfg, target);
  const std::int64_t at = diffusion_param_count(cfg);
  DiffusionConfig lo = cfg, hi = cfg;
  lo.width -= 1;
  hi.width += 1;
  CHECK(std::abs(at - target) <= std::abs(diffusion_param_count(lo) - target));
  CHECK(std::abs(at - target) <= std::abs(diffusion_param_count(hi) - target));

  // Default sizes: liquid + backbone is about half of diffusion + backbone.
  const std::int64_t bb = backbone_param_count(BackboneConfig{});
  const std::int64_t liq = liquid_param_count(LiquidConfig{});
  DiffusionConfig d;
  d.width = diffusion_width_for(d, 2 * liq + bb);
  const double ratio = static_cast<double>(liq + bb) / static_cast<double>(diffusion_param_count(d) + bb);
  CHECK(ratio >= 0.45);
  CHECK(ratio <= 0.55);
}
