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

#include <string>
#include <vector>

namespace lqb {

/// Linear field x' = A x integrated over unit time.
struct LinearSystem {
  std::string name;
  Matrix<double> a;
};

/// Rotation generator, a diagonal contraction and a seeded random symmetric
/// matrix scaled to operator norm 1.
std::vector<LinearSystem> standard_systems(std::uint64_t seed = 42);

/// Scaling and squaring with a degree-18 Taylor core.
Matrix<double> matrix_exp(const Matrix<double>& a);

/// Integer power by repeated squaring.
Matrix<double> matrix_power(const Matrix<double>& m, long long n);

/// Frobenius error of (I + A/T)^T against e^A.
double euler_error(const Matrix<double>& a, long long steps);

/// Same for the midpoint (order 2) or classical Runge-Kutta (order 4) map.
double higher_order_error(const Matrix<double>& a, long long steps, int order);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t used = 0;
  /// Points dropped for non-positive error or for lying under the floor.
  std::size_t excluded = 0;
};

/// Least-squares slope of log(err) against log(T) over points with err > floor.
SlopeFit slope_fit(const std::vector<std::pair<double, double>>& points, double floor = 0.0);

struct TheoryRow {
  std::string system;
  std::string method;  // euler, order2, order4
  long long steps = 0;
  double error = 0.0;
};

struct TheorySlope {
  std::string system;
  std::string method;
  SlopeFit fit;
};

struct TheoryReport {
  std::vector<TheoryRow> rows;
  std::vector<TheorySlope> slopes;
};

inline constexpr double kTheoryFloor = 1e-12;

/// Steps 2, 4, ..., 256 on every standard system for all three methods.
TheoryReport run_theory(const std::vector<long long>& steps = {2, 4, 8, 16, 32, 64, 128, 256},
                        std::uint64_t seed = 42);

std::string theory_csv(const TheoryReport& r);
std::string theory_slopes_csv(const TheoryReport& r);

}  // namespace lqb
