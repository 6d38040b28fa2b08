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

#include <vector>

namespace lqb {

/// Trajectory-level metrics. Every trajectory is horizon x action_dim.

double mse(const Matrix<double>& a, const Matrix<double>& b);

/// Diagonal Gaussian fitted per (step, dim) to the samples (ML variance,
/// floored at sigma_floor^2). Returns the mean over steps of the negative
/// log-density of `truth`, summed over action dims.
double proxy_nll(const std::vector<Matrix<double>>& samples, const Matrix<double>& truth, double sigma_floor);

/// Minimum per-sample MSE among the first k samples.
double best_of_k(const std::vector<Matrix<double>>& samples, const Matrix<double>& truth, std::size_t k);

/// MSE of the average of all samples.
double sample_mean_mse(const std::vector<Matrix<double>>& samples, const Matrix<double>& truth);

/// Mean pairwise L2 distance divided by sqrt(horizon * action_dim).
double diversity(const std::vector<Matrix<double>>& samples);

/// Mean squared third difference over steps and dims.
double jerk(const Matrix<double>& traj);

/// Differential entropy of a 1D Gaussian mixture by adaptive Simpson
/// integration of -p log p.
double mixture_entropy_1d(const std::vector<double>& weights, const std::vector<double>& means,
                          const std::vector<double>& sds);

/// Negative log-density of x under a 1D Gaussian mixture.
double mixture_nll_1d(const std::vector<double>& weights, const std::vector<double>& means,
                      const std::vector<double>& sds, double x);

}  // namespace lqb
