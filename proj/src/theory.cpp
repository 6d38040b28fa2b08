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

#include "liquidbench/theory.hpp"

#include "liquidbench/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <iomanip>
#include <sstream>

namespace lqb {

namespace {

void check_square(const Matrix<double>& a, const char* op) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw NumericError(std::string(op) + ": expected a non-empty square matrix, got " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()));
  }
  if (!a.allFinite()) throw NumericError(std::string(op) + ": non-finite entries");
}

}  // namespace

std::vector<LinearSystem> standard_systems(std::uint64_t seed) {
  std::vector<LinearSystem> out;
  Matrix<double> rot(2, 2);
  rot << 0, 1, -1, 0;
  out.push_back({"rotation", rot});
  Matrix<double> diag = Matrix<double>::Zero(2, 2);
  diag(0, 0) = -1.0;
  diag(1, 1) = -0.5;
  out.push_back({"contraction", diag});
  Rng rng(derive_seed(seed, {0x7e0u}));
  const Matrix<double> g = normal_matrix<double>(3, 3, rng);
  Matrix<double> sym = 0.5 * (g + g.transpose());
  const double norm = Eigen::SelfAdjointEigenSolver<Matrix<double>>(sym).eigenvalues().cwiseAbs().maxCoeff();
  sym *= 1.0 / norm;
  out.push_back({"random_symmetric", sym});
  return out;
}

Matrix<double> matrix_exp(const Matrix<double>& a) {
  check_square(a, "matrix_exp");
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();  // infinity norm
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Matrix<double> b = a / std::ldexp(1.0, squarings);
  const Index n = a.rows();
  Matrix<double> result = Matrix<double>::Identity(n, n);
  Matrix<double> term = Matrix<double>::Identity(n, n);
  for (int k = 1; k <= 18; ++k) {
    term = term * b / static_cast<double>(k);
    result += term;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

Matrix<double> matrix_power(const Matrix<double>& m, long long n) {
  check_square(m, "matrix_power");
  if (n < 0) throw NumericError("matrix_power: negative exponent");
  Matrix<double> result = Matrix<double>::Identity(m.rows(), m.cols());
  Matrix<double> base = m;
  while (n > 0) {
    if (n & 1) result = result * base;
    base = base * base;
    n >>= 1;
  }
  return result;
}

double euler_error(const Matrix<double>& a, long long steps) {
  check_square(a, "euler_error");
  if (steps < 1) throw NumericError("euler_error: steps must be >= 1");
  const Matrix<double> step = Matrix<double>::Identity(a.rows(), a.cols()) + a / static_cast<double>(steps);
  return (matrix_power(step, steps) - matrix_exp(a)).norm();
}

double higher_order_error(const Matrix<double>& a, long long steps, int order) {
  check_square(a, "higher_order_error");
  if (steps < 1) throw NumericError("higher_order_error: steps must be >= 1");
  if (order != 2 && order != 4) throw NumericError("higher_order_error: order must be 2 or 4");
  const Matrix<double> ha = a / static_cast<double>(steps);
  const Matrix<double> id = Matrix<double>::Identity(a.rows(), a.cols());
  // On a linear field the midpoint rule and RK4 reduce to truncated Taylor maps.
  const Matrix<double> ha2 = ha * ha;
  Matrix<double> step = id + ha + ha2 / 2.0;
  if (order == 4) {
    const Matrix<double> ha3 = ha2 * ha;
    step += ha3 / 6.0 + ha3 * ha / 24.0;
  }
  return (matrix_power(step, steps) - matrix_exp(a)).norm();
}

SlopeFit slope_fit(const std::vector<std::pair<double, double>>& points, double floor) {
  SlopeFit f;
  std::vector<std::pair<double, double>> logs;
  for (const auto& [t, e] : points) {
    if (!(t > 0.0) || !(e > 0.0) || !(e > floor) || !std::isfinite(e)) {
      ++f.excluded;
      continue;
    }
    logs.emplace_back(std::log(t), std::log(e));
  }
  f.used = logs.size();
  if (logs.size() < 4) {
    throw NumericError("slope_fit: " + std::to_string(logs.size()) + " usable points (" + std::to_string(f.excluded) +
                       " excluded), need at least 4");
  }
  double mx = 0, my = 0;
  for (const auto& [x, y] : logs) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(logs.size());
  my /= static_cast<double>(logs.size());
  double sxy = 0, sxx = 0;
  for (const auto& [x, y] : logs) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  if (sxx == 0.0) throw NumericError("slope_fit: all T values are equal");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

TheoryReport run_theory(const std::vector<long long>& steps, std::uint64_t seed) {
  TheoryReport r;
  for (const auto& sys : standard_systems(seed)) {
    for (const char* method : {"euler", "order2", "order4"}) {
      std::vector<std::pair<double, double>> pts;
      for (long long t : steps) {
        const std::string m = method;
        const double e = m == "euler"    ? euler_error(sys.a, t)
                         : m == "order2" ? higher_order_error(sys.a, t, 2)
                                         : higher_order_error(sys.a, t, 4);
        r.rows.push_back({sys.name, method, t, e});
        pts.emplace_back(static_cast<double>(t), e);
      }
      r.slopes.push_back({sys.name, method, slope_fit(pts, kTheoryFloor)});
    }
  }
  return r;
}

namespace {

std::string num(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

}  // namespace

std::string theory_csv(const TheoryReport& r) {
  std::string out = "system,method,T,error\n";
  for (const auto& row : r.rows) {
    out += row.system + "," + row.method + "," + std::to_string(row.steps) + "," + num(row.error) + "\n";
  }
  return out;
}

std::string theory_slopes_csv(const TheoryReport& r) {
  std::string out = "system,method,slope,points_used,points_excluded\n";
  for (const auto& s : r.slopes) {
    out += s.system + "," + s.method + "," + num(s.fit.slope) + "," + std::to_string(s.fit.used) + "," +
           std::to_string(s.fit.excluded) + "\n";
  }
  return out;
}

}  // namespace lqb
