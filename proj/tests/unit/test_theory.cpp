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

#include "liquidbench/rng.hpp"
#include "liquidbench/theory.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

using namespace lqb;

TEST_CASE("matrix exponential closed forms") {
  CHECK((matrix_exp(Matrix<double>::Zero(3, 3)) - Matrix<double>::Identity(3, 3)).norm() == 0.0);
  Matrix<double> d = Matrix<double>::Zero(2, 2);
  d(0, 0) = 1;
  d(1, 1) = -1;
  Matrix<double> ed = Matrix<double>::Zero(2, 2);
  ed(0, 0) = std::exp(1.0);
  ed(1, 1) = std::exp(-1.0);
  CHECK((matrix_exp(d) - ed).norm() < 1e-12);
  for (double theta : {1.0, 2.5, 10.0}) {
    Matrix<double> r(2, 2), er(2, 2);
    r << 0, theta, -theta, 0;
    er << std::cos(theta), std::sin(theta), -std::sin(theta), std::cos(theta);
    CHECK((matrix_exp(r) - er).norm() < 1e-12);
  }
  // Nilpotent: e^N = I + N exactly.
  Matrix<double> n = Matrix<double>::Zero(3, 3);
  n(0, 1) = 4;
  n(1, 2) = -2;
  Matrix<double> en = Matrix<double>::Identity(3, 3) + n + n * n / 2.0;
  CHECK((matrix_exp(n) - en).norm() < 1e-12);
  CHECK_THROWS_AS(matrix_exp(Matrix<double>::Zero(2, 3)), NumericError);
}

TEST_CASE("matrix exponential against Pade reference") {
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    Matrix<double> a = normal_matrix<double>(4, 4, rng);
    const double scale = 10.0 * uniform01(rng) / a.operatorNorm();
    a *= scale;
    const Matrix<double> ref = a.exp();
    CHECK((matrix_exp(a) - ref).norm() / std::max(1.0, ref.norm()) < 1e-12);
  }
}

TEST_CASE("matrix power") {
  Matrix<double> m(2, 2);
  m << 1, 1, 0, 1;
  Matrix<double> expect(2, 2);
  expect << 1, 37, 0, 1;
  CHECK(matrix_power(m, 37) == expect);
  CHECK(matrix_power(m, 0) == Matrix<double>::Identity(2, 2));
  CHECK_THROWS_AS(matrix_power(m, -1), NumericError);
}

TEST_CASE("discretization errors") {
  const Matrix<double> zero = Matrix<double>::Zero(2, 2);
  for (long long t : {1, 2, 7, 256}) {
    CHECK(euler_error(zero, t) == 0.0);
    CHECK(higher_order_error(zero, t, 4) == 0.0);
  }
  CHECK_THROWS_AS(higher_order_error(zero, 4, 3), NumericError);
  CHECK_THROWS_AS(euler_error(zero, 0), NumericError);

  Matrix<double> rot(2, 2);
  rot << 0, 1, -1, 0;
  for (long long t = 32; t <= 128; t *= 2) {
    CHECK(euler_error(rot, t) / euler_error(rot, 2 * t) == doctest::Approx(2.0).epsilon(0.1));
    CHECK(std::abs(higher_order_error(rot, t, 2) / higher_order_error(rot, 2 * t, 2) - 4.0) < 0.5);
  }
  for (long long t = 16; t <= 32; t *= 2) {
    CHECK(std::abs(higher_order_error(rot, t, 4) / higher_order_error(rot, 2 * t, 4) - 16.0) < 3.0);
  }
  for (long long t = 8; t <= 256; t *= 2) {
    CHECK(higher_order_error(rot, t, 2) < euler_error(rot, t));
    CHECK(higher_order_error(rot, t, 4) < higher_order_error(rot, t, 2));
  }
}

TEST_CASE("slope fit") {
  std::vector<std::pair<double, double>> inv, inv2;
  for (double t = 2; t <= 256; t *= 2) {
    inv.emplace_back(t, 3.0 / t);
    inv2.emplace_back(t, 0.5 / (t * t));
  }
  CHECK(slope_fit(inv).slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(slope_fit(inv2).slope == doctest::Approx(-2.0).epsilon(1e-12));
  inv.emplace_back(512, 0.0);
  inv.emplace_back(1024, -1.0);
  const SlopeFit f = slope_fit(inv);
  CHECK(f.excluded == 2);
  CHECK(f.used == 8);
  CHECK(f.slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_AS(slope_fit({{1, 1}, {2, 0.5}, {4, 0.25}}), NumericError);
}

TEST_CASE("standard systems and report") {
  const auto systems = standard_systems();
  REQUIRE(systems.size() == 3);
  const Matrix<double>& s = systems[2].a;
  CHECK((s - s.transpose()).norm() == 0.0);
  CHECK(s.operatorNorm() <= 2.0);

  const TheoryReport r = run_theory();
  CHECK(r.rows.size() == 3 * 3 * 8);
  for (const auto& sl : r.slopes) {
    if (sl.method == "euler") {
      CHECK(sl.fit.slope >= -1.1);
      CHECK(sl.fit.slope <= -0.9);
    } else if (sl.method == "order2") {
      CHECK(std::abs(sl.fit.slope + 2.0) <= 0.3);
    } else {
      CHECK(std::abs(sl.fit.slope + 4.0) <= 0.6);
    }
  }
  CHECK(theory_csv(r) == theory_csv(run_theory()));
  CHECK(theory_slopes_csv(r).find("random_symmetric,euler") != std::string::npos);
}
