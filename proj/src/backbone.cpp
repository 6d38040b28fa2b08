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

#include "liquidbench/backbone.hpp"

#include "liquidbench/quad.hpp"

#include "liquidbench/ops.hpp"

#include <cmath>
#include <string>

namespace lqb {

template <typename S>
Backbone<S>::Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
  const Index d = cfg.d_model;
  const Index in = cfg.attention ? cfg.obs_dim : input_width();
  auto bias = [&](Index out, Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor<S>::parameter(uniform_matrix<S>(1, out, rng, -bound, bound));
  };
  l1_w_ = Tensor<S>::parameter(kaiming_uniform<S>(d, in, rng));
  l1_b_ = bias(d, in);
  ln1_g_ = Tensor<S>::parameter(Matrix<S>::Ones(1, d));
  ln1_b_ = Tensor<S>::parameter(Matrix<S>::Zero(1, d));
  l2_w_ = Tensor<S>::parameter(kaiming_uniform<S>(d, d, rng));
  l2_b_ = bias(d, d);
  ln2_g_ = Tensor<S>::parameter(Matrix<S>::Ones(1, d));
  ln2_b_ = Tensor<S>::parameter(Matrix<S>::Zero(1, d));
  proj_w_ = Tensor<S>::parameter(kaiming_uniform<S>(d, d, rng));
  proj_b_ = bias(d, d);
  if (cfg.attention) {
    pos_ = Tensor<S>::parameter(normal_matrix<S>(cfg.history, d, rng, 0.02));
    wq_ = Tensor<S>::parameter(kaiming_uniform<S>(d, d, rng));
    wk_ = Tensor<S>::parameter(kaiming_uniform<S>(d, d, rng));
    wv_ = Tensor<S>::parameter(kaiming_uniform<S>(d, d, rng));
    lna_g_ = Tensor<S>::parameter(Matrix<S>::Ones(1, d));
    lna_b_ = Tensor<S>::parameter(Matrix<S>::Zero(1, d));
  }
}

template <typename S>
Tensor<S> Backbone<S>::first_stage(const Tensor<S>& windows, std::vector<Matrix<S>>* ln_inputs) const {
  if (!cfg_.attention) {
    Tensor<S> h = linear(windows, l1_w_, l1_b_);
    if (ln_inputs) ln_inputs->push_back(layer_norm_standardize<S>(h.value(), S(1e-5)));
    return tanh(layer_norm(h, ln1_g_, ln1_b_));
  }
  const Index d = cfg_.d_model;
  const S inv_sqrt_d = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<Tensor<S>> tokens, queries, keys, values;
  for (Index i = 0; i < cfg_.history; ++i) {
    Tensor<S> o = slice_cols(windows, i * cfg_.obs_dim, cfg_.obs_dim);
    Tensor<S> pos_i = slice_rows(pos_, i, 1);
    Tensor<S> tok = linear(o, l1_w_, l1_b_) + pos_i;
    tokens.push_back(tok);
    queries.push_back(linear(tok, wq_));
    keys.push_back(linear(tok, wk_));
    values.push_back(linear(tok, wv_));
  }
  Tensor<S> pooled;
  for (Index i = 0; i < cfg_.history; ++i) {
    std::vector<Tensor<S>> scores;
    for (Index j = 0; j < cfg_.history; ++j) scores.push_back(row_sum(queries[i] * keys[j]) * inv_sqrt_d);
    Tensor<S> attn = softmax_rows(concat_cols(scores));
    Tensor<S> mixed = slice_cols(attn, 0, 1) * values[0];
    for (Index j = 1; j < cfg_.history; ++j) mixed = mixed + slice_cols(attn, j, 1) * values[j];
    Tensor<S> res = tokens[i] + mixed;
    if (ln_inputs) ln_inputs->push_back(layer_norm_standardize<S>(res.value(), S(1e-5)));
    Tensor<S> y = layer_norm(res, lna_g_, lna_b_);
    pooled = (i == 0) ? y : pooled + y;
  }
  return tanh(pooled * static_cast<S>(1.0 / static_cast<double>(cfg_.history)));
}

template <typename S>
Tensor<S> Backbone<S>::run(const Tensor<S>& windows, std::vector<Matrix<S>>* ln_inputs) const {
  if (windows.cols() != input_width()) {
    throw NumericError("backbone: expected window width " + std::to_string(input_width()) + " (history " +
                       std::to_string(cfg_.history) + " x obs_dim " + std::to_string(cfg_.obs_dim) + "), got " +
                       std::to_string(windows.cols()));
  }
  if (!windows.value().allFinite()) throw NumericError("backbone: non-finite observation window");
  Tensor<S> h = first_stage(windows, ln_inputs);
  Tensor<S> h2 = linear(h, l2_w_, l2_b_);
  if (ln_inputs) ln_inputs->push_back(layer_norm_standardize<S>(h2.value(), S(1e-5)));
  h2 = tanh(layer_norm(h2, ln2_g_, ln2_b_));
  return linear(h2, proj_w_, proj_b_);
}

template <typename S>
Tensor<S> Backbone<S>::forward(const Tensor<S>& windows) const {
  return run(windows, nullptr);
}

template <typename S>
Matrix<S> Backbone<S>::encode(const Matrix<S>& windows) const {
  NoGradGuard guard;
  return run(Tensor<S>(windows), nullptr).value();
}

template <typename S>
ContextLatent<S> Backbone<S>::encode_window(const Matrix<S>& obs_window, std::uint64_t provenance) const {
  if (obs_window.rows() != cfg_.history || obs_window.cols() != cfg_.obs_dim) {
    throw NumericError("encode_window: expected " + std::to_string(cfg_.history) + "x" +
                       std::to_string(cfg_.obs_dim) + " window, got " + std::to_string(obs_window.rows()) + "x" +
                       std::to_string(obs_window.cols()));
  }
  Matrix<S> flat(1, input_width());
  for (Index i = 0; i < cfg_.history; ++i) flat.block(0, i * cfg_.obs_dim, 1, cfg_.obs_dim) = obs_window.row(i);
  ContextLatent<S> out;
  out.value = encode(flat).row(0);
  out.provenance = provenance;
  return out;
}

template <typename S>
std::vector<Matrix<S>> Backbone<S>::layer_norm_inputs(const Matrix<S>& windows) const {
  NoGradGuard guard;
  std::vector<Matrix<S>> out;
  run(Tensor<S>(windows), &out);
  return out;
}

template <typename S>
ParamSet<S> Backbone<S>::params() const {
  ParamSet<S> ps{{"backbone.l1.weight", l1_w_}, {"backbone.l1.bias", l1_b_},   {"backbone.ln1.gain", ln1_g_},
                 {"backbone.ln1.bias", ln1_b_}, {"backbone.l2.weight", l2_w_}, {"backbone.l2.bias", l2_b_},
                 {"backbone.ln2.gain", ln2_g_}, {"backbone.ln2.bias", ln2_b_}, {"backbone.proj.weight", proj_w_},
                 {"backbone.proj.bias", proj_b_}};
  if (cfg_.attention) {
    ps.push_back({"backbone.attn.pos", pos_});
    ps.push_back({"backbone.attn.wq", wq_});
    ps.push_back({"backbone.attn.wk", wk_});
    ps.push_back({"backbone.attn.wv", wv_});
    ps.push_back({"backbone.attn.ln.gain", lna_g_});
    ps.push_back({"backbone.attn.ln.bias", lna_b_});
  }
  return ps;
}

std::int64_t backbone_param_count(const BackboneConfig& cfg) {
  const std::int64_t d = cfg.d_model;
  const std::int64_t in = cfg.attention ? cfg.obs_dim : cfg.history * cfg.obs_dim;
  std::int64_t n = (in * d + d) + 2 * d + (d * d + d) + 2 * d + (d * d + d);
  if (cfg.attention) n += cfg.history * d + 3 * d * d + 2 * d;
  return n;
}

template class Backbone<float>;
template class Backbone<double>;

template class Backbone<Quad>;

}  // namespace lqb
