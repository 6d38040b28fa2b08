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

#include "liquidbench/optim.hpp"
#include "liquidbench/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lqb {

class NonDeterministicError : public NumericError {
 public:
  using NumericError::NumericError;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode grads of `forward` against central differences
/// (f(p+eps) - f(p-eps)) / (2 eps), entry by entry over `params`.
/// Relative error is |a - n| / max(|a|, |n|, 1e-12).
template <typename S, typename F>
GradCheckResult grad_check_report(F&& forward, ParamSet<S>& params, double eps) {
  if (!(eps > 0.0) || eps > 1e-2) throw NumericError("grad_check: eps must lie in (0, 1e-2]");

  auto eval = [&]() -> double {
    NoGradGuard guard;
    return static_cast<double>(forward().item());
  };
  const double base_a = eval();
  const double base_b = eval();
  if (base_a != base_b) {
    throw NonDeterministicError("grad_check: forward disagrees with itself (" + std::to_string(base_a) + " vs " +
                                std::to_string(base_b) + ")");
  }

  zero_grads(params);
  {
    Tensor<S> loss = forward();
    backward(loss);
  }

  GradCheckResult result;
  for (auto& p : params) {
    auto& w = p.tensor.value();
    const Matrix<S> analytic = p.tensor.grad();
    for (Index k = 0; k < w.size(); ++k) {
      const S saved = w.data()[k];
      w.data()[k] = static_cast<S>(static_cast<double>(saved) + eps);
      const S up = w.data()[k];
      const double f_plus = eval();
      w.data()[k] = static_cast<S>(static_cast<double>(saved) - eps);
      const S down = w.data()[k];
      const double f_minus = eval();
      w.data()[k] = saved;
      // Divide by the step actually taken after rounding to S.
      const double numeric = (f_plus - f_minus) / (static_cast<double>(up) - static_cast<double>(down));
      const double a = static_cast<double>(analytic.data()[k]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
      const double rel = std::abs(a - numeric) / denom;
      if (result.worst_index < 0 || rel > result.max_relative_error) {
        result = {rel, p.name, k, a, numeric};
      }
    }
  }
  return result;
}

template <typename S, typename F>
double grad_check(F&& forward, ParamSet<S>& params, double eps) {
  return grad_check_report<S>(std::forward<F>(forward), params, eps).max_relative_error;
}

/// Checks reverse-mode grads computed in scalar `Lo` against central
/// differences of a twin model in a wider scalar `Hi`. The twin's parameters
/// are overwritten with the `Lo` values first, so both sides describe the same
/// function; only the arithmetic differs. Used for 32-bit grads (64-bit twin)
/// and for 64-bit grads whose entries are too small for 64-bit differences to
/// resolve (quad twin).
template <typename Lo, typename Hi, typename FLo, typename FHi>
GradCheckResult grad_check_mixed(FLo&& forward_lo, ParamSet<Lo>& params_lo, FHi&& forward_hi,
                                 ParamSet<Hi>& params_hi, double eps) {
  if (!(eps > 0.0) || eps > 1e-2) throw NumericError("grad_check: eps must lie in (0, 1e-2]");
  if (params_lo.size() != params_hi.size()) throw NumericError("grad_check_mixed: parameter lists differ");
  for (std::size_t i = 0; i < params_lo.size(); ++i) {
    if (params_lo[i].tensor.rows() != params_hi[i].tensor.rows() ||
        params_lo[i].tensor.cols() != params_hi[i].tensor.cols()) {
      throw NumericError("grad_check_mixed: shape mismatch at " + params_lo[i].name);
    }
    params_hi[i].tensor.value() = params_lo[i].tensor.value().template cast<Hi>();
  }
  auto eval = [&]() -> Hi {
    NoGradGuard guard;
    return forward_hi().item();
  };
  if (eval() != eval()) throw NonDeterministicError("grad_check: forward disagrees with itself");

  zero_grads(params_lo);
  {
    Tensor<Lo> loss = forward_lo();
    backward(loss);
  }
  const Hi step = Hi(eps);
  GradCheckResult result;
  for (std::size_t i = 0; i < params_lo.size(); ++i) {
    auto& w = params_hi[i].tensor.value();
    const Matrix<Lo>& analytic = params_lo[i].tensor.grad();
    for (Index k = 0; k < w.size(); ++k) {
      const Hi saved = w.data()[k];
      w.data()[k] = saved + step;
      const Hi f_plus = eval();
      w.data()[k] = saved - step;
      const Hi f_minus = eval();
      w.data()[k] = saved;
      const double numeric = static_cast<double>((f_plus - f_minus) / (Hi(2) * step));
      const double a = static_cast<double>(analytic.data()[k]);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
      if (result.worst_index < 0 || rel > result.max_relative_error) result = {rel, params_lo[i].name, k, a, numeric};
    }
  }
  return result;
}

}  // namespace lqb
