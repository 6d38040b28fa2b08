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
#include "liquidbench/rng.hpp"
#include "liquidbench/tensor.hpp"

#include <cstdint>
#include <vector>

namespace lqb {

struct BackboneConfig {
  Index obs_dim = 6;
  Index history = 2;
  Index d_model = 64;
  /// Adds one single-head self-attention block over the history positions.
  bool attention = false;
};

/// Latent context for one window. `provenance` identifies the source sample.
template <typename S>
struct ContextLatent {
  RowVector<S> value;
  std::uint64_t provenance = 0;
};

/// Shared context encoder: flattened observation window -> d_model latent.
///
/// Default path: Linear -> LayerNorm -> tanh -> Linear -> LayerNorm -> tanh
/// -> Linear. With `attention`, each history row is embedded separately,
/// mixed by one self-attention block with a residual LayerNorm, and mean
/// pooled before the second hidden layer.
template <typename S>
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, Rng& rng);

  const BackboneConfig& config() const { return cfg_; }
  Index input_width() const { return cfg_.history * cfg_.obs_dim; }

  /// (B x history*obs_dim) -> (B x d_model).
  Tensor<S> forward(const Tensor<S>& windows) const;

  /// Batched evaluation without recording a graph.
  Matrix<S> encode(const Matrix<S>& windows) const;

  /// One window given as (history x obs_dim).
  ContextLatent<S> encode_window(const Matrix<S>& obs_window, std::uint64_t provenance) const;

  /// Standardized (pre-affine) activations of every LayerNorm on `windows`.
  std::vector<Matrix<S>> layer_norm_inputs(const Matrix<S>& windows) const;

  ParamSet<S> params() const;

  /// The last projection, exposed for tests.
  Tensor<S>& projection_weight() { return proj_w_; }
  Tensor<S>& projection_bias() { return proj_b_; }

 private:
  Tensor<S> first_stage(const Tensor<S>& windows, std::vector<Matrix<S>>* ln_inputs) const;
  Tensor<S> run(const Tensor<S>& windows, std::vector<Matrix<S>>* ln_inputs) const;

  BackboneConfig cfg_;
  Tensor<S> l1_w_, l1_b_, ln1_g_, ln1_b_;
  Tensor<S> l2_w_, l2_b_, ln2_g_, ln2_b_;
  Tensor<S> proj_w_, proj_b_;
  // Attention variant only.
  Tensor<S> pos_, wq_, wk_, wv_, lna_g_, lna_b_;
};

std::int64_t backbone_param_count(const BackboneConfig& cfg);

extern template class Backbone<float>;
extern template class Backbone<double>;

}  // namespace lqb
