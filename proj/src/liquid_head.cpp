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

#include "liquidbench/liquid_head.hpp"

#include "liquidbench/quad.hpp"

#include <string>

namespace lqb {

namespace {

template <typename S>
Tensor<S> uniform_param(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor<S>::parameter(uniform_matrix<S>(rows, cols, rng, -bound, bound));
}

template <typename S>
Tensor<S> step_slice(const Matrix<S>& actions, Index k, Index d) {
  return Tensor<S>(actions.middleCols(k * d, d));
}

}  // namespace

template <typename S>
CfcCellParams<S> CfcCellParams<S>::init(Index hidden, Index input, Rng& rng, double eps_guard) {
  // Glorot weights, zero biases and tau = e^-2 (gate near 0.8) keep the signal
  // from shrinking geometrically through a deep stack started at h = 0.
  const double bound = std::sqrt(6.0 / static_cast<double>(2 * hidden + input));
  CfcCellParams p;
  p.w_f = Tensor<S>::parameter(uniform_matrix<S>(hidden, hidden + input, rng, -bound, bound));
  p.b_f = Tensor<S>::parameter(Matrix<S>::Zero(1, hidden));
  p.w_c = Tensor<S>::parameter(uniform_matrix<S>(hidden, hidden + input, rng, -bound, bound));
  p.b_c = Tensor<S>::parameter(Matrix<S>::Zero(1, hidden));
  p.theta = Tensor<S>::parameter(Matrix<S>::Constant(1, hidden, S(kCfcInitLogTau)));
  p.eps_guard = eps_guard;
  return p;
}

template <typename S>
CfcCellParams<S> CfcCellParams<S>::zeros(Index hidden, Index input, double eps_guard) {
  CfcCellParams p;
  p.w_f = Tensor<S>::parameter(Matrix<S>::Zero(hidden, hidden + input));
  p.b_f = Tensor<S>::parameter(Matrix<S>::Zero(1, hidden));
  p.w_c = Tensor<S>::parameter(Matrix<S>::Zero(hidden, hidden + input));
  p.b_c = Tensor<S>::parameter(Matrix<S>::Zero(1, hidden));
  p.theta = Tensor<S>::parameter(Matrix<S>::Zero(1, hidden));
  p.eps_guard = eps_guard;
  return p;
}

template <typename S>
GruParams<S> GruParams<S>::init(Index hidden, Index input, Rng& rng) {
  GruParams p;
  p.w_ih = uniform_param<S>(3 * hidden, input, hidden, rng);
  p.b_ih = uniform_param<S>(1, 3 * hidden, hidden, rng);
  p.w_hh = uniform_param<S>(3 * hidden, hidden, hidden, rng);
  p.b_hh = uniform_param<S>(1, 3 * hidden, hidden, rng);
  return p;
}

template <typename S>
LiquidHead<S>::LiquidHead(const LiquidConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.layers < 1 || cfg.components < 1 || cfg.horizon < 1 || cfg.encoder_steps < 1) {
    throw NumericError("LiquidHead: layers, components, horizon and encoder_steps must be positive");
  }
  const Index h = hidden();
  for (Index l = 0; l < cfg.layers; ++l) {
    cells_.push_back(CfcCellParams<S>::init(h, l == 0 ? cfg.d_model : h, rng, cfg.eps_guard));
  }
  init_w_ = uniform_param<S>(h, h, h, rng);
  init_b_ = uniform_param<S>(1, h, h, rng);
  start_ = Tensor<S>::parameter(Matrix<S>::Zero(1, cfg.action_dim));
  emb_w_ = uniform_param<S>(cfg.embed_dim, cfg.action_dim, cfg.action_dim, rng);
  emb_b_ = uniform_param<S>(1, cfg.embed_dim, cfg.action_dim, rng);
  gru_ = GruParams<S>::init(h, cfg.embed_dim, rng);
  const Index out = mixture_output_width(cfg.components, cfg.action_dim);
  out_w_ = uniform_param<S>(out, h, h, rng);
  out_b_ = uniform_param<S>(1, out, h, rng);
}

template <typename S>
Tensor<S> LiquidHead<S>::summary(const Tensor<S>& ctx) const {
  if (ctx.cols() != cfg_.d_model) {
    throw NumericError("LiquidHead: context width " + std::to_string(ctx.cols()) + ", expected " +
                       std::to_string(cfg_.d_model));
  }
  std::vector<Tensor<S>> seq(static_cast<std::size_t>(cfg_.encoder_steps), ctx);
  return cfc_encode(seq, cells_);
}

template <typename S>
DecoderState<S> LiquidHead<S>::init_state(const Tensor<S>& ctx) const {
  return {linear(summary(ctx), init_w_, init_b_), 0};
}

template <typename S>
DecoderState<S> LiquidHead<S>::step(const Tensor<S>& prev_action, const DecoderState<S>& state) const {
  if (state.k >= cfg_.horizon) {
    throw NumericError("decoder step " + std::to_string(state.k) + " beyond horizon " +
                       std::to_string(cfg_.horizon));
  }
  if (prev_action.cols() != cfg_.action_dim || prev_action.rows() != state.s.rows()) {
    throw NumericError("decoder step: action " + detail::shape_str(prev_action.rows(), prev_action.cols()) +
                       " for batch " + std::to_string(state.s.rows()));
  }
  Tensor<S> e = tanh(linear(prev_action, emb_w_, emb_b_));
  return {gru_cell(e, state.s, gru_), state.k + 1};
}

template <typename S>
Tensor<S> LiquidHead<S>::mdn_raw(const DecoderState<S>& state) const {
  Tensor<S> raw = linear(state.s, out_w_, out_b_);
  if (!raw.value().allFinite()) throw NumericError("mdn head: non-finite output");
  return raw;
}

template <typename S>
std::vector<MixtureParams<S>> LiquidHead<S>::mdn_params(const DecoderState<S>& state) const {
  NoGradGuard guard;
  const Matrix<S> raw = mdn_raw(state).value();
  std::vector<MixtureParams<S>> out;
  for (Index i = 0; i < raw.rows(); ++i) {
    out.push_back(mixture_from_raw<S>(raw.row(i), cfg_.components, cfg_.action_dim, cfg_.sigma_floor));
  }
  return out;
}

template <typename S>
Tensor<S> LiquidHead<S>::start_tokens(Index batch) const {
  return broadcast_rows(start_, batch);
}

template <typename S>
void LiquidHead<S>::check_actions(const Tensor<S>& ctx, const Matrix<S>& actions) const {
  if (actions.rows() != ctx.rows() || actions.cols() != window_width()) {
    throw NumericError("decode: actions " + detail::shape_str(actions.rows(), actions.cols()) + ", expected " +
                       detail::shape_str(ctx.rows(), window_width()) + " (horizon " +
                       std::to_string(cfg_.horizon) + ")");
  }
}

template <typename S>
Tensor<S> LiquidHead<S>::teacher_forced_nll(const Tensor<S>& ctx, const Matrix<S>& actions) const {
  check_actions(ctx, actions);
  const Index d = cfg_.action_dim;
  DecoderState<S> st = init_state(ctx);
  std::vector<Tensor<S>> nll;
  Tensor<S> prev = start_tokens(ctx.rows());
  for (Index k = 0; k < cfg_.horizon; ++k) {
    st = step(prev, st);
    const Matrix<S> target = actions.middleCols(k * d, d);
    nll.push_back(mdn_nll(mdn_raw(st), target, cfg_.components, cfg_.sigma_floor));
    prev = step_slice(actions, k, d);
  }
  return concat_cols(nll);
}

template <typename S>
Tensor<S> LiquidHead<S>::free_running_nll(const Tensor<S>& ctx, const Matrix<S>& actions) const {
  check_actions(ctx, actions);
  const Index d = cfg_.action_dim;
  DecoderState<S> st = init_state(ctx);
  std::vector<Tensor<S>> nll;
  Tensor<S> prev = start_tokens(ctx.rows());
  for (Index k = 0; k < cfg_.horizon; ++k) {
    st = step(prev, st);
    Tensor<S> raw = mdn_raw(st);
    const Matrix<S> target = actions.middleCols(k * d, d);
    nll.push_back(mdn_nll(raw, target, cfg_.components, cfg_.sigma_floor));
    prev = argmax_component_mean(raw, cfg_.components, d);
  }
  return concat_cols(nll);
}

template <typename S>
Matrix<S> LiquidHead<S>::decode_deterministic(const Matrix<S>& ctx) const {
  NoGradGuard guard;
  const Index d = cfg_.action_dim;
  Tensor<S> c(ctx);
  DecoderState<S> st = init_state(c);
  Matrix<S> out(ctx.rows(), window_width());
  Tensor<S> prev = start_tokens(ctx.rows());
  for (Index k = 0; k < cfg_.horizon; ++k) {
    st = step(prev, st);
    prev = argmax_component_mean(mdn_raw(st), cfg_.components, d);
    out.middleCols(k * d, d) = prev.value();
  }
  return out;
}

template <typename S>
FreeRunResult<S> LiquidHead<S>::decode_free_running(const RowVector<S>& ctx, DecodeMode mode,
                                                    std::uint64_t seed) const {
  NoGradGuard guard;
  Rng rng(seed);
  const Index d = cfg_.action_dim;
  const Index k_comp = cfg_.components;
  DecoderState<S> st = init_state(Tensor<S>(Matrix<S>(ctx)));
  FreeRunResult<S> res;
  res.trajectory.resize(cfg_.horizon, d);
  Tensor<S> prev = start_tokens(1);
  for (Index k = 0; k < cfg_.horizon; ++k) {
    st = step(prev, st);
    const Tensor<S> raw = mdn_raw(st);
    MixtureParams<S> mix = mixture_from_raw<S>(raw.value().row(0), k_comp, d, cfg_.sigma_floor);
    RowVector<S> a;
    if (mode == DecodeMode::kDeterministic) {
      a = argmax_component_mean(raw, k_comp, d).value().row(0);
    } else {
      a = sample_mixture(mix, rng);
    }
    res.trajectory.row(k) = a;
    res.mixtures.push_back(std::move(mix));
    prev = Tensor<S>(Matrix<S>(a));
  }
  return res;
}

template <typename S>
std::vector<Matrix<S>> LiquidHead<S>::sample_trajectories(const RowVector<S>& ctx, Index count,
                                                          std::uint64_t seed) const {
  if (count < 1) throw NumericError("sample_trajectories: count must be at least 1");
  std::vector<Matrix<S>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) {
    out.push_back(
        decode_free_running(ctx, DecodeMode::kStochastic, derive_seed(seed, {static_cast<std::uint64_t>(k)}))
            .trajectory);
  }
  return out;
}

template <typename S>
Matrix<S> LiquidHead<S>::sample_batch(const Matrix<S>& ctx, std::vector<Rng>& rngs) const {
  if (static_cast<Index>(rngs.size()) != ctx.rows()) {
    throw NumericError("sample_batch: " + std::to_string(rngs.size()) + " generators for " +
                       std::to_string(ctx.rows()) + " contexts");
  }
  NoGradGuard guard;
  const Index d = cfg_.action_dim;
  DecoderState<S> st = init_state(Tensor<S>(ctx));
  Matrix<S> out(ctx.rows(), window_width());
  Tensor<S> prev = start_tokens(ctx.rows());
  for (Index k = 0; k < cfg_.horizon; ++k) {
    st = step(prev, st);
    const Matrix<S> raw = mdn_raw(st).value();
    Matrix<S> a(ctx.rows(), d);
    for (Index i = 0; i < ctx.rows(); ++i) {
      const MixtureParams<S> mix = mixture_from_raw<S>(raw.row(i), cfg_.components, d, cfg_.sigma_floor);
      a.row(i) = sample_mixture(mix, rngs[static_cast<std::size_t>(i)]);
    }
    out.middleCols(k * d, d) = a;
    prev = Tensor<S>(a);
  }
  return out;
}

template <typename S>
ParamSet<S> LiquidHead<S>::params() const {
  ParamSet<S> ps;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    const std::string p = "liquid.cfc" + std::to_string(l) + ".";
    ps.push_back({p + "w_f", cells_[l].w_f});
    ps.push_back({p + "b_f", cells_[l].b_f});
    ps.push_back({p + "w_c", cells_[l].w_c});
    ps.push_back({p + "b_c", cells_[l].b_c});
    ps.push_back({p + "theta", cells_[l].theta});
  }
  ps.push_back({"liquid.init.weight", init_w_});
  ps.push_back({"liquid.init.bias", init_b_});
  ps.push_back({"liquid.start", start_});
  ps.push_back({"liquid.embed.weight", emb_w_});
  ps.push_back({"liquid.embed.bias", emb_b_});
  ps.push_back({"liquid.gru.w_ih", gru_.w_ih});
  ps.push_back({"liquid.gru.b_ih", gru_.b_ih});
  ps.push_back({"liquid.gru.w_hh", gru_.w_hh});
  ps.push_back({"liquid.gru.b_hh", gru_.b_hh});
  ps.push_back({"liquid.out.weight", out_w_});
  ps.push_back({"liquid.out.bias", out_b_});
  return ps;
}

std::int64_t liquid_param_count(const LiquidConfig& cfg) {
  const std::int64_t h = cfg.resolved_hidden();
  std::int64_t n = 0;
  for (Index l = 0; l < cfg.layers; ++l) {
    const std::int64_t in = l == 0 ? cfg.d_model : h;
    n += 2 * (h * (h + in) + h) + h;
  }
  n += h * h + h;
  n += cfg.action_dim;
  n += cfg.embed_dim * cfg.action_dim + cfg.embed_dim;
  n += 3 * h * cfg.embed_dim + 3 * h * h + 6 * h;
  const std::int64_t out = mixture_output_width(cfg.components, cfg.action_dim);
  n += out * h + out;
  return n;
}

template struct CfcCellParams<float>;
template struct CfcCellParams<double>;
template struct GruParams<float>;
template struct GruParams<double>;
template class LiquidHead<float>;
template class LiquidHead<double>;

template struct CfcCellParams<Quad>;
template struct GruParams<Quad>;
template class LiquidHead<Quad>;

}  // namespace lqb
