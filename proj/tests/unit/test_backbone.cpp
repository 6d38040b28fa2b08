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
#include "liquidbench/gradcheck.hpp"
#include "liquidbench/quad.hpp"

#include <cstring>

using namespace lqb;

namespace {

BackboneConfig small(bool attention) {
  BackboneConfig c;
  c.obs_dim = 3;
  c.d_model = 6;
  c.attention = attention;
  return c;
}

}  // namespace

TEST_CASE("latent shape and layer-norm statistics") {
  for (bool attn : {false, true}) {
    Rng rng(1);
    BackboneConfig cfg;
    cfg.attention = attn;
    Backbone<double> bb(cfg, rng);
    const Matrix<double> w = uniform_matrix<double>(50, 12, rng, -1, 1);
    const Matrix<double> z = bb.encode(w);
    CHECK(z.rows() == 50);
    CHECK(z.cols() == 64);
    CHECK(z.allFinite());
    const auto stats = bb.layer_norm_inputs(w);
    CHECK(stats.size() == (attn ? 3u : 2u));
    for (const auto& m : stats) {
      for (Index i = 0; i < m.rows(); ++i) {
        const double mu = m.row(i).mean();
        const double var = (m.row(i).array() - mu).square().mean();
        CHECK(std::abs(mu) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-3);
      }
    }
  }
}

TEST_CASE("zero window with zero projection gives a zero latent") {
  Rng rng(2);
  Backbone<double> bb(BackboneConfig{}, rng);
  bb.projection_weight().value().setZero();
  bb.projection_bias().value().setZero();
  const auto z = bb.encode_window(Matrix<double>::Zero(2, 6), 9);
  CHECK(z.value.isZero(0.0));
  CHECK(z.provenance == 9);
}

TEST_CASE("identical rows give a valid latent and feature permutation is equivariant") {
  Rng rng(3);
  Backbone<double> bb(BackboneConfig{}, rng);
  RowVector<double> row = uniform_matrix<double>(1, 6, rng, -1, 1);
  Matrix<double> win(2, 6);
  win << row, row;
  const auto base = bb.encode_window(win, 0);
  CHECK(base.value.size() == 64);
  CHECK(base.value.allFinite());

  const std::vector<Index> perm{4, 0, 5, 2, 1, 3};
  Matrix<double> pwin(2, 6);
  for (Index j = 0; j < 6; ++j) pwin.col(j) = win.col(perm[static_cast<std::size_t>(j)]);
  const Matrix<double> w1 = bb.params()[0].tensor.value();
  Matrix<double> pw1(w1.rows(), w1.cols());
  for (Index h = 0; h < 2; ++h)
    for (Index j = 0; j < 6; ++j) pw1.col(h * 6 + j) = w1.col(h * 6 + perm[static_cast<std::size_t>(j)]);
  // Same seed, separate parameter storage.
  Rng rng2(3);
  Backbone<double> fresh(BackboneConfig{}, rng2);
  auto fs = fresh.params();
  fs[0].tensor.value() = pw1;
  const auto permuted = fresh.encode_window(pwin, 0);
  CHECK((permuted.value - base.value).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fixed seed and input give a bit-identical latent") {
  Rng a(4), b(4);
  Backbone<double> x(BackboneConfig{}, a);
  Backbone<double> y(BackboneConfig{}, b);
  Rng in(5);
  const Matrix<double> win = uniform_matrix<double>(2, 6, in, -1, 1);
  const auto za = x.encode_window(win, 1);
  const auto zb = y.encode_window(win, 1);
  CHECK(std::memcmp(za.value.data(), zb.value.data(), sizeof(double) * 64) == 0);
}

TEST_CASE("bad windows are rejected") {
  Rng rng(6);
  Backbone<double> bb(BackboneConfig{}, rng);
  CHECK_THROWS_AS(bb.encode_window(Matrix<double>::Zero(3, 6), 0), NumericError);
  CHECK_THROWS_AS(bb.encode_window(Matrix<double>::Zero(2, 5), 0), NumericError);
  Matrix<double> bad = Matrix<double>::Zero(2, 6);
  bad(1, 2) = std::nan("");
  CHECK_THROWS_AS(bb.encode_window(bad, 0), NumericError);
  CHECK_THROWS_AS(bb.encode(Matrix<double>::Zero(4, 11)), NumericError);
}

TEST_CASE("parameter count") {
  for (bool attn : {false, true}) {
    Rng rng(7);
    BackboneConfig cfg;
    cfg.attention = attn;
    Backbone<double> bb(cfg, rng);
    std::int64_t n = 0;
    for (const auto& p : bb.params()) n += p.tensor.size();
    CHECK(n == backbone_param_count(cfg));
  }
}

TEST_CASE("backbone grad check in both variants") {
  for (bool attn : {false, true}) {
    Rng rng(8);
    Rng twin_rng(0);
    Backbone<double> bb(small(attn), rng);
    Backbone<Quad> twin(small(attn), twin_rng);
    const Matrix<double> w = uniform_matrix<double>(3, 6, rng, -1, 1);
    const Matrix<double> probe = normal_matrix<double>(3, 6, rng);
    const Matrix<Quad> qw = w.cast<Quad>();
    const Matrix<Quad> qprobe = probe.cast<Quad>();
    auto ps = bb.params();
    auto qs = twin.params();
    auto r = grad_check_mixed([&] { return sum(bb.forward(Tensor<double>(w)) * Tensor<double>(probe)); }, ps,
                              [&] { return sum(twin.forward(Tensor<Quad>(qw)) * Tensor<Quad>(qprobe)); }, qs, 1e-6);
    INFO(attn, " ", r.worst_param);
    CHECK(r.max_relative_error < 1e-6);
  }
}
