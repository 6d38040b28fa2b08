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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace lqb {

template <typename S>
struct NamedParam {
  std::string name;
  Tensor<S> tensor;
};

/// Ordered, named parameter list. Order is part of the checkpoint contract.
template <typename S>
using ParamSet = std::vector<NamedParam<S>>;

template <typename S>
std::int64_t count_params(const ParamSet<S>& params) {
  std::int64_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

template <typename S>
void zero_grads(ParamSet<S>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

/// Gives every parameter a grad buffer, zero where nothing flowed.
template <typename S>
void ensure_grads(ParamSet<S>& params) {
  for (auto& p : params) {
    if (!p.tensor.has_grad()) p.tensor.zero_grad();
  }
}

struct AdamWConfig {
  double peak_lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

template <typename S>
struct OptimizerState {
  AdamWConfig hp;
  std::vector<Matrix<S>> first_moment;
  std::vector<Matrix<S>> second_moment;
  std::int64_t step = 0;

  static OptimizerState init(const ParamSet<S>& params, AdamWConfig hp = {}) {
    OptimizerState st;
    st.hp = hp;
    for (const auto& p : params) {
      st.first_moment.push_back(Matrix<S>::Zero(p.tensor.rows(), p.tensor.cols()));
      st.second_moment.push_back(Matrix<S>::Zero(p.tensor.rows(), p.tensor.cols()));
    }
    return st;
  }
};

/// One decoupled-weight-decay Adam update using each parameter's grad.
template <typename S>
void adamw_step(ParamSet<S>& params, OptimizerState<S>& state, double lr) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw NumericError("adamw_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                       " tensors, params has " + std::to_string(params.size()));
  }
  if (!(lr >= 0.0)) throw NumericError("adamw_step: negative learning rate");
  const auto& hp = state.hp;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  const S decay = static_cast<S>(1.0 - lr * hp.weight_decay);
  const S step_size = static_cast<S>(lr / bc1);
  const S inv_sqrt_bc2 = static_cast<S>(1.0 / std::sqrt(bc2));
  const S b1 = static_cast<S>(hp.beta1);
  const S b2 = static_cast<S>(hp.beta2);
  const S eps = static_cast<S>(hp.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].tensor.value();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.rows() != w.rows() || m.cols() != w.cols() || v.rows() != w.rows() || v.cols() != w.cols()) {
      throw NumericError("adamw_step: moment shape mismatch for " + params[i].name);
    }
    if (!params[i].tensor.has_grad()) params[i].tensor.zero_grad();
    const auto& g = params[i].tensor.grad();
    if (!g.allFinite()) throw NumericError("adamw_step: non-finite gradient in " + params[i].name);
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.cwiseProduct(g);
    if (lr == 0.0) continue;
    w *= decay;
    w.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
  }
}

/// Scales all grads so their joint l2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename S>
double clip_global_norm(ParamSet<S>& params, double max_norm = 1.0) {
  if (!(max_norm > 0.0)) throw NumericError("clip_global_norm: max_norm must be positive");
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    const auto& g = p.tensor.grad();
    if (!g.allFinite()) throw NumericError("clip_global_norm: non-finite gradient in " + p.name);
    sq += g.template cast<double>().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const S factor = static_cast<S>(max_norm / norm);
    for (auto& p : params) {
      if (p.tensor.has_grad()) p.tensor.grad() *= factor;
    }
  }
  return norm;
}

template <typename S>
double global_grad_norm(const ParamSet<S>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.tensor.has_grad()) sq += p.tensor.grad().template cast<double>().squaredNorm();
  }
  return std::sqrt(sq);
}

/// Linear warmup to peak, then cosine decay to a floor. Progress is in
/// (fractional) epochs.
struct LrSchedule {
  double peak_lr = 3e-4;
  double warmup_epochs = 3.0;
  double total_epochs = 120.0;
  double floor_lr = 3e-7;

  double lr_at(double epoch_progress) const {
    if (!(epoch_progress >= 0.0) || epoch_progress > total_epochs + 1e-9) {
      throw NumericError("lr_at: progress " + std::to_string(epoch_progress) + " outside [0, " +
                         std::to_string(total_epochs) + "]");
    }
    if (warmup_epochs > 0.0 && epoch_progress <= warmup_epochs) {
      return peak_lr * epoch_progress / warmup_epochs;
    }
    const double span = total_epochs - warmup_epochs;
    if (span <= 0.0) return peak_lr;
    const double frac = std::min(1.0, (epoch_progress - warmup_epochs) / span);
    constexpr double kPi = 3.14159265358979323846;
    return floor_lr + (peak_lr - floor_lr) * 0.5 * (1.0 + std::cos(kPi * frac));
  }
};

}  // namespace lqb
