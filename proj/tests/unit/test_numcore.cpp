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

#include "liquidbench/gradcheck.hpp"
#include "liquidbench/ops.hpp"
#include "liquidbench/optim.hpp"
#include "liquidbench/rng.hpp"

using namespace lqb;

namespace {

template <typename S>
Tensor<S> param(Index r, Index c, Rng& rng, double sd = 0.5) {
  return Tensor<S>::parameter(normal_matrix<S>(r, c, rng, sd));
}

}  // namespace

TEST_CASE("linear map gradient is the input") {
  Rng rng(1);
  auto w = param<double>(1, 4, rng);
  Tensor<double> x(normal_matrix<double>(1, 4, rng));
  backward(sum(w * x));
  CHECK((w.grad() - x.value()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unused parameters end with zero grad") {
  Rng rng(2);
  auto a = param<double>(2, 2, rng);
  auto b = param<double>(2, 2, rng);
  ParamSet<double> ps{{"a", a}, {"b", b}};
  zero_grads(ps);
  backward(sum(square(a)));
  CHECK(b.grad().isZero(0.0));
}

TEST_CASE("backward rejects bad losses") {
  Rng rng(3);
  auto a = param<double>(2, 2, rng);
  CHECK_THROWS_AS(backward(a * 2.0), NumericError);
  Tensor<double> bad = log(Tensor<double>::parameter(Matrix<double>::Constant(1, 1, -1.0)));
  CHECK_THROWS_AS(backward(bad), NumericError);
}

TEST_CASE("quadratic grad check") {
  auto th = Tensor<double>::parameter(Matrix<double>::Constant(1, 1, 3.0));
  ParamSet<double> ps{{"theta", th}};
  auto r = grad_check_report<double>([&] { return square(th); }, ps, 1e-4);
  CHECK(r.max_relative_error < 1e-9);
  CHECK(r.worst_analytic == doctest::Approx(6.0));
}

TEST_CASE("grad check detects a non-deterministic forward") {
  auto th = Tensor<double>::parameter(Matrix<double>::Constant(1, 1, 1.0));
  ParamSet<double> ps{{"theta", th}};
  int calls = 0;
  auto f = [&] { return th * static_cast<double>(++calls); };
  CHECK_THROWS_AS(grad_check<double>(f, ps, 1e-4), NonDeterministicError);
  CHECK_THROWS_AS(grad_check<double>([&] { return th; }, ps, 0.5), NumericError);
}

TEST_CASE("two-layer network matches central differences") {
  Rng rng(4);
  auto w1 = param<double>(6, 4, rng), b1 = param<double>(1, 6, rng);
  auto w2 = param<double>(3, 6, rng), b2 = param<double>(1, 3, rng);
  Tensor<double> x(normal_matrix<double>(5, 4, rng));
  Matrix<double> y = normal_matrix<double>(5, 3, rng);
  ParamSet<double> ps{{"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}};
  auto f = [&] { return mean(square(linear(tanh(linear(x, w1, b1)), w2, b2) - Tensor<double>(y))); };
  CHECK(grad_check<double>(f, ps, 1e-5) < 1e-6);
}

TEST_CASE("every primitive passes grad check at 64-bit") {
  Rng rng(5);
  auto a = param<double>(3, 4, rng);
  auto b = param<double>(3, 4, rng);
  auto row = param<double>(1, 4, rng);
  auto pos = Tensor<double>::parameter(uniform_matrix<double>(3, 4, rng, 0.5, 2.0));
  auto g = Tensor<double>::parameter(uniform_matrix<double>(1, 4, rng, 0.5, 1.5));
  Matrix<double> wts = normal_matrix<double>(3, 4, rng);
  const Tensor<double> r(wts);
  const Tensor<double> r8(normal_matrix<double>(3, 8, rng));
  ParamSet<double> ps{{"a", a}, {"b", b}, {"row", row}, {"pos", pos}, {"g", g}};

  std::vector<std::pair<std::string, std::function<Tensor<double>()>>> cases = {
      {"add", [&] { return sum((a + row) * r); }},
      {"sub", [&] { return sum((a - b) * r); }},
      {"mul", [&] { return sum(a * b * r); }},
      {"div", [&] { return sum(a / pos * r); }},
      {"scalar", [&] { return sum((2.0 * a + 1.0 - b * 0.5) * r); }},
      {"matmul", [&] { return sum(matmul(a, Tensor<double>(wts.transpose())) * 0.3); }},
      {"sigmoid", [&] { return sum(sigmoid(a) * r); }},
      {"tanh", [&] { return sum(tanh(a) * r); }},
      {"exp", [&] { return sum(exp(a) * r); }},
      {"log", [&] { return sum(log(pos) * r); }},
      {"silu", [&] { return sum(silu(a) * r); }},
      {"concat", [&] { return sum(concat_cols<double>({a, b}) * r8); }},
      {"slice", [&] { return sum(slice_cols(a, 1, 2) * slice_cols(r, 0, 2)); }},
      {"slice_rows", [&] { return sum(slice_rows(a, 1, 2) * slice_rows(r, 0, 2)); }},
      {"broadcast", [&] { return sum(broadcast_rows(row, 3) * r); }},
      {"mean", [&] { return mean(square(a)); }},
      {"row_sum", [&] { return sum(square(row_sum(a * r))); }},
      {"softmax", [&] { return sum(softmax_rows(a) * r); }},
      {"layer_norm", [&] { return sum(layer_norm(a, g, row) * r); }},
  };
  for (auto& [name, f] : cases) {
    CAPTURE(name);
    CHECK(grad_check<double>(f, ps, 1e-5) < 1e-6);
  }
}

TEST_CASE("32-bit grads agree with a 64-bit twin") {
  Rng rng(6);
  auto mk = [&](auto tag) {
    using S = decltype(tag);
    Rng local(7);
    return ParamSet<S>{{"w1", param<S>(6, 4, local)}, {"b1", param<S>(1, 6, local)}, {"w2", param<S>(2, 6, local)}};
  };
  auto p32 = mk(float{});
  auto p64 = mk(double{});
  Matrix<double> x = normal_matrix<double>(3, 4, rng);
  auto f32 = [&] {
    return sum(tanh(linear(tanh(linear(Tensor<float>(x.cast<float>()), p32[0].tensor, p32[1].tensor)),
                           p32[2].tensor)));
  };
  auto f64 = [&] {
    return sum(tanh(linear(tanh(linear(Tensor<double>(x), p64[0].tensor, p64[1].tensor)), p64[2].tensor)));
  };
  CHECK(grad_check_mixed(f32, p32, f64, p64, 1e-6).max_relative_error < 1e-3);
}

TEST_CASE("no-grad guard records nothing") {
  Rng rng(8);
  auto a = param<double>(2, 2, rng);
  Tensor<double> y;
  {
    NoGradGuard guard;
    y = square(a);
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(grad_mode_enabled());
}

TEST_CASE("adamw with zero lr and zero decay leaves params alone") {
  Rng rng(9);
  auto w = param<double>(3, 3, rng);
  const Matrix<double> before = w.value();
  ParamSet<double> ps{{"w", w}};
  auto st = OptimizerState<double>::init(ps, {3e-4, 0.9, 0.999, 1e-8, 0.0});
  backward(sum(square(w)));
  adamw_step(ps, st, 0.0);
  CHECK(w.value() == before);
  CHECK(st.step == 1);
}

TEST_CASE("first adam step moves by about lr") {
  auto w = Tensor<double>::parameter(Matrix<double>::Constant(1, 1, 1.0));
  ParamSet<double> ps{{"w", w}};
  auto st = OptimizerState<double>::init(ps, {1e-2, 0.9, 0.999, 1e-8, 0.0});
  w.grad() = Matrix<double>::Ones(1, 1);
  adamw_step(ps, st, 1e-2);
  CHECK(w.item() == doctest::Approx(1.0 - 1e-2).epsilon(1e-6));
}

TEST_CASE("adamw converges on a quadratic") {
  auto th = Tensor<double>::parameter(Matrix<double>::Zero(1, 1));
  ParamSet<double> ps{{"theta", th}};
  auto st = OptimizerState<double>::init(ps, {0.1, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 100; ++i) {
    zero_grads(ps);
    backward(square(th - 2.0));
    adamw_step(ps, st, 0.1);
  }
  CHECK(std::abs(th.item() - 2.0) < 0.1);
  CHECK(st.step == 100);
}

TEST_CASE("adamw rejects mismatched state") {
  Rng rng(10);
  ParamSet<double> ps{{"w", param<double>(2, 2, rng)}};
  auto st = OptimizerState<double>::init(ps);
  ps.push_back({"v", param<double>(1, 1, rng)});
  CHECK_THROWS_AS(adamw_step(ps, st, 1e-3), NumericError);
}

TEST_CASE("global norm clipping") {
  auto w = Tensor<double>::parameter(Matrix<double>::Zero(1, 2));
  ParamSet<double> ps{{"w", w}};
  w.grad() = (Matrix<double>(1, 2) << 3.0, 4.0).finished();
  CHECK(clip_global_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(w.grad()(0, 0) == doctest::Approx(0.6));
  CHECK(w.grad()(0, 1) == doctest::Approx(0.8));

  w.grad() = (Matrix<double>(1, 2) << 0.3, 0.4).finished();
  clip_global_norm(ps, 1.0);
  CHECK(w.grad()(0, 1) == 0.4);

  w.grad().setZero();
  clip_global_norm(ps, 1.0);
  CHECK(w.grad().isZero(0.0));

  w.grad()(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(clip_global_norm(ps, 1.0), NumericError);
  CHECK_THROWS_AS(clip_global_norm(ps, 0.0), NumericError);
}

TEST_CASE("clipped norm never exceeds the cap") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    ParamSet<double> ps{{"a", param<double>(3, 5, rng)}, {"b", param<double>(1, 7, rng)}};
    for (auto& p : ps) p.tensor.grad() = normal_matrix<double>(p.tensor.rows(), p.tensor.cols(), rng, 10.0);
    clip_global_norm(ps, 1.0);
    CHECK(global_grad_norm(ps) <= 1.0 + 1e-6);
  }
}

TEST_CASE("learning-rate schedule") {
  LrSchedule s{1e-3, 3.0, 120.0, 3e-7};
  CHECK(s.lr_at(0.0) == 0.0);
  CHECK(s.lr_at(0.01) > 0.0);
  CHECK(s.lr_at(1.5) == doctest::Approx(0.5e-3));
  CHECK(s.lr_at(3.0) == doctest::Approx(1e-3));
  CHECK(s.lr_at(3.0 + 1e-9) == doctest::Approx(1e-3));
  CHECK(s.lr_at(120.0) == doctest::Approx(3e-7));
  double prev = 0.0;
  for (double p = 0.0; p <= 3.0; p += 0.05) {
    CHECK(s.lr_at(p) >= prev);
    prev = s.lr_at(p);
  }
  for (double p = 3.0; p <= 120.0; p += 0.5) {
    CHECK(s.lr_at(p) <= prev + 1e-18);
    prev = s.lr_at(p);
    CHECK(prev >= 3e-7 - 1e-18);
  }
  CHECK_THROWS_AS(s.lr_at(-0.1), NumericError);
  CHECK_THROWS_AS(s.lr_at(121.0), NumericError);
}

TEST_CASE("seeded forward and backward are bit-identical") {
  auto run = [] {
    Rng rng(12);
    auto w = param<float>(16, 8, rng);
    Tensor<float> x(normal_matrix<float>(32, 8, rng));
    Tensor<float> loss = mean(tanh(linear(x, w)));
    backward(loss);
    return std::make_pair(loss.item(), Matrix<float>(w.grad()));
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("derived seeds are stable and distinct") {
  CHECK(derive_seed(42, {1}) == derive_seed(42, {1}));
  CHECK(derive_seed(42, {1}) != derive_seed(42, {2}));
  CHECK(derive_seed(42, {1}) != derive_seed(43, {1}));
}
