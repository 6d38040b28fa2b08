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

#include "liquidbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace lqb {

namespace {

void check_samples(const std::vector<Matrix<double>>& samples, std::size_t min_count, const char* op) {
  if (samples.size() < min_count) {
    throw NumericError(std::string(op) + ": need at least " + std::to_string(min_count) + " samples, got " +
                       std::to_string(samples.size()));
  }
  for (const auto& s : samples) {
    if (s.rows() != samples[0].rows() || s.cols() != samples[0].cols()) {
      throw NumericError(std::string(op) + ": samples differ in shape");
    }
  }
}

void check_truth(const Matrix<double>& s, const Matrix<double>& truth, const char* op) {
  if (s.rows() != truth.rows() || s.cols() != truth.cols()) {
    throw NumericError(std::string(op) + ": truth is " + std::to_string(truth.rows()) + "x" +
                       std::to_string(truth.cols()) + ", samples are " + std::to_string(s.rows()) + "x" +
                       std::to_string(s.cols()));
  }
}

}  // namespace

double mse(const Matrix<double>& a, const Matrix<double>& b) {
  check_truth(a, b, "mse");
  if (a.size() == 0) throw NumericError("mse: empty trajectory");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double proxy_nll(const std::vector<Matrix<double>>& samples, const Matrix<double>& truth, double sigma_floor) {
  check_samples(samples, 2, "proxy_nll");
  check_truth(samples[0], truth, "proxy_nll");
  if (!(sigma_floor > 0.0)) throw NumericError("proxy_nll: sigma_floor must be positive");
  const double k = static_cast<double>(samples.size());
  Matrix<double> mean = Matrix<double>::Zero(truth.rows(), truth.cols());
  for (const auto& s : samples) mean += s;
  mean /= k;
  Matrix<double> var = Matrix<double>::Zero(truth.rows(), truth.cols());
  for (const auto& s : samples) var += (s - mean).cwiseAbs2();
  var /= k;
  var = var.cwiseMax(sigma_floor * sigma_floor);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Matrix<double> nll =
      (half_log_2pi + 0.5 * var.array().log() + (truth - mean).array().square() / (2.0 * var.array())).matrix();
  return nll.sum() / static_cast<double>(truth.rows());
}

double best_of_k(const std::vector<Matrix<double>>& samples, const Matrix<double>& truth, std::size_t k) {
  if (k == 0 || k > samples.size()) {
    throw NumericError("best_of_k: k=" + std::to_string(k) + " with " + std::to_string(samples.size()) + " samples");
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) best = std::min(best, mse(samples[i], truth));
  return best;
}

double sample_mean_mse(const std::vector<Matrix<double>>& samples, const Matrix<double>& truth) {
  check_samples(samples, 1, "sample_mean_mse");
  Matrix<double> mean = Matrix<double>::Zero(samples[0].rows(), samples[0].cols());
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  return mse(mean, truth);
}

double diversity(const std::vector<Matrix<double>>& samples) {
  check_samples(samples, 2, "diversity");
  const std::size_t k = samples.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) acc += (samples[i] - samples[j]).norm();
  }
  const double pairs = static_cast<double>(k * (k - 1) / 2);
  return acc / pairs / std::sqrt(static_cast<double>(samples[0].size()));
}

double jerk(const Matrix<double>& traj) {
  if (traj.rows() < 4) throw NumericError("jerk: horizon " + std::to_string(traj.rows()) + " < 4");
  const Index n = traj.rows() - 3;
  const Matrix<double> d3 = traj.bottomRows(n) - 3.0 * traj.middleRows(2, n) + 3.0 * traj.middleRows(1, n) -
                            traj.topRows(n);
  return d3.squaredNorm() / static_cast<double>(d3.size());
}

double mixture_nll_1d(const std::vector<double>& weights, const std::vector<double>& means,
                      const std::vector<double>& sds, double x) {
  if (weights.size() != means.size() || weights.size() != sds.size() || weights.empty()) {
    throw NumericError("mixture_nll_1d: component lists differ in length");
  }
  double p = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double z = (x - means[i]) / sds[i];
    p += weights[i] * std::exp(-0.5 * z * z) / (sds[i] * std::sqrt(2.0 * std::numbers::pi));
  }
  return -std::log(p);
}

namespace {

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

}  // namespace

double mixture_entropy_1d(const std::vector<double>& weights, const std::vector<double>& means,
                          const std::vector<double>& sds) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < means.size(); ++i) {
    lo = std::min(lo, means[i] - 12.0 * sds[i]);
    hi = std::max(hi, means[i] + 12.0 * sds[i]);
  }
  const auto f = [&](double x) {
    const double nll = mixture_nll_1d(weights, means, sds, x);
    return std::isfinite(nll) ? std::exp(-nll) * nll : 0.0;
  };
  // Split into panels so narrow components are not stepped over.
  const int panels = 2000;
  const double h = (hi - lo) / panels;
  double total = 0.0;
  for (int i = 0; i < panels; ++i) {
    const double a = lo + h * i;
    const double b = a + h;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    total += simpson(f, a, b, fa, fm, fb, h / 6.0 * (fa + 4.0 * fm + fb), 1e-14, 30);
  }
  return total;
}

}  // namespace lqb
