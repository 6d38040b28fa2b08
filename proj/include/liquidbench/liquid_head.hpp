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

#include "liquidbench/mdn.hpp"
#include "liquidbench/ops.hpp"
#include "liquidbench/optim.hpp"
#include "liquidbench/rng.hpp"
#include "liquidbench/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace lqb {

inline constexpr double kCfcInitLogTau = -2.0;

/// Closed-form continuous-time cell. Weights act on z = [h ; u].
template <typename S>
struct CfcCellParams {
  Tensor<S> w_f, b_f;  // gate
  Tensor<S> w_c, b_c;  // candidate
  Tensor<S> theta;     // log time constants, 1 x H
  double eps_guard = 1e-6;

  Index hidden() const { return w_f.rows(); }
  Index input_dim() const { return w_f.cols() - w_f.rows(); }

  static CfcCellParams init(Index hidden, Index input, Rng& rng, double eps_guard = 1e-6);
  static CfcCellParams zeros(Index hidden, Index input, double eps_guard = 1e-6);
};

/// Intermediate quantities of one cell step, mostly for property tests.
template <typename S>
struct CfcStepDetail {
  Tensor<S> h;
  Matrix<S> gate;
  Matrix<S> candidate;
};

namespace detail {

/// h = h_prev + g (c - h_prev) with g = f / (tau + f + eps), f = sigmoid(pre_f),
/// c = tanh(pre_c), tau = exp(theta). Fused to keep the graph small.
template <typename S>
Tensor<S> cfc_blend(const Tensor<S>& pre_f, const Tensor<S>& pre_c, const Tensor<S>& theta, const Tensor<S>& h_prev,
                    double eps_guard, Matrix<S>* gate_out = nullptr, Matrix<S>* cand_out = nullptr) {
  const Index b = pre_f.rows();
  const Index h = pre_f.cols();
  if (pre_c.rows() != b || pre_c.cols() != h || h_prev.rows() != b || h_prev.cols() != h || theta.rows() != 1 ||
      theta.cols() != h) {
    throw NumericError("cfc_blend: shape mismatch");
  }
  const S eps = static_cast<S>(eps_guard);
  const auto tau = theta.value().array().exp().eval();
  const Matrix<S> f = (S(1) / (S(1) + (-pre_f.value().array()).exp())).matrix();
  const Matrix<S> c = pre_c.value().array().tanh().matrix();
  Matrix<S> denom = f;
  denom.array().rowwise() += tau.row(0) + eps;
  const Matrix<S> g = (f.array() / denom.array()).matrix();
  Matrix<S> out = h_prev.value() + (g.array() * (c - h_prev.value()).array()).matrix();
  if (!out.allFinite()) throw NumericError("cfc_cell_step: non-finite hidden state");
  if (gate_out) *gate_out = g;
  if (cand_out) *cand_out = c;
  return Tensor<S>::make(
      std::move(out), {pre_f, pre_c, theta, h_prev},
      [f, c, g, denom, tau, eps](detail::Node<S>& self) {
        auto& p_f = self.parents[0];
        auto& p_c = self.parents[1];
        auto& p_t = self.parents[2];
        auto& p_h = self.parents[3];
        const auto G = self.grad.array();
        const auto delta = (c - p_h->value).array();
        const auto d2 = denom.array().square();
        if (p_f->requires_grad) {
          Matrix<S> gf = (G * delta * f.array() * (S(1) - f.array()) / d2).matrix();
          gf.array().rowwise() *= tau.row(0) + eps;
          p_f->accumulate(gf);
        }
        if (p_c->requires_grad) {
          p_c->accumulate((G * g.array() * (S(1) - c.array().square())).matrix());
        }
        if (p_t->requires_grad) {
          Matrix<S> gt = (-G * delta * f.array() / d2).matrix().colwise().sum();
          gt.array() *= tau.row(0);
          p_t->accumulate(gt);
        }
        if (p_h->requires_grad) p_h->accumulate((G * (S(1) - g.array())).matrix());
      });
}

/// Standard GRU update from the input and hidden projections (gate order r, z, n).
template <typename S>
Tensor<S> gru_blend(const Tensor<S>& gi, const Tensor<S>& gh, const Tensor<S>& h_prev) {
  const Index b = h_prev.rows();
  const Index h = h_prev.cols();
  if (gi.rows() != b || gh.rows() != b || gi.cols() != 3 * h || gh.cols() != 3 * h) {
    throw NumericError("gru_blend: shape mismatch");
  }
  auto sig = [](const auto& x) { return (S(1) / (S(1) + (-x).exp())).matrix().eval(); };
  const Matrix<S> r = sig(gi.value().leftCols(h).array() + gh.value().leftCols(h).array());
  const Matrix<S> z = sig(gi.value().middleCols(h, h).array() + gh.value().middleCols(h, h).array());
  const Matrix<S> hn = gh.value().rightCols(h);
  const Matrix<S> n = (gi.value().rightCols(h).array() + r.array() * hn.array()).tanh().matrix();
  Matrix<S> out = ((S(1) - z.array()) * n.array() + z.array() * h_prev.value().array()).matrix();
  if (!out.allFinite()) throw NumericError("gru_step: non-finite hidden state");
  return Tensor<S>::make(std::move(out), {gi, gh, h_prev}, [r, z, hn, n, h](detail::Node<S>& self) {
    auto& p_i = self.parents[0];
    auto& p_g = self.parents[1];
    auto& p_h = self.parents[2];
    const auto G = self.grad.array();
    const Matrix<S> d_an = (G * (S(1) - z.array()) * (S(1) - n.array().square())).matrix();
    const Matrix<S> d_ar = (d_an.array() * hn.array() * r.array() * (S(1) - r.array())).matrix();
    const Matrix<S> d_az = (G * (p_h->value.array() - n.array()) * z.array() * (S(1) - z.array())).matrix();
    Matrix<S> g(d_an.rows(), 3 * h);
    g << d_ar, d_az, d_an;
    if (p_i->requires_grad) p_i->accumulate(g);
    if (p_g->requires_grad) {
      g.rightCols(h).array() *= r.array();
      p_g->accumulate(g);
    }
    if (p_h->requires_grad) p_h->accumulate((G * z.array()).matrix());
  });
}

}  // namespace detail

/// One CfC update on a batch: h_prev (B x H), u (B x in) -> (B x H).
template <typename S>
CfcStepDetail<S> cfc_cell_step_detail(const Tensor<S>& h_prev, const Tensor<S>& u, const CfcCellParams<S>& p) {
  if (h_prev.cols() != p.hidden() || u.cols() != p.input_dim() || h_prev.rows() != u.rows()) {
    throw NumericError("cfc_cell_step: h " + detail::shape_str(h_prev.rows(), h_prev.cols()) + ", u " +
                       detail::shape_str(u.rows(), u.cols()) + " for a cell with H=" + std::to_string(p.hidden()) +
                       ", input=" + std::to_string(p.input_dim()));
  }
  if (!h_prev.value().allFinite() || !u.value().allFinite()) throw NumericError("cfc_cell_step: non-finite input");
  Tensor<S> z = concat_cols<S>({h_prev, u});
  CfcStepDetail<S> out;
  out.h = detail::cfc_blend(linear(z, p.w_f, p.b_f), linear(z, p.w_c, p.b_c), p.theta, h_prev, p.eps_guard,
                            &out.gate, &out.candidate);
  return out;
}

template <typename S>
Tensor<S> cfc_cell_step(const Tensor<S>& h_prev, const Tensor<S>& u, const CfcCellParams<S>& p) {
  return cfc_cell_step_detail(h_prev, u, p).h;
}

/// Runs a stack of cells over a sequence from zero hidden state and returns
/// the top layer's final hidden state. Layer l reads layer l-1's outputs.
template <typename S>
Tensor<S> cfc_encode(const std::vector<Tensor<S>>& seq, const std::vector<CfcCellParams<S>>& stack) {
  if (seq.empty()) throw NumericError("cfc_encode: empty input sequence");
  if (stack.empty()) throw NumericError("cfc_encode: empty layer stack");
  std::vector<Tensor<S>> inputs = seq;
  for (const auto& layer : stack) {
    Tensor<S> h(Matrix<S>::Zero(seq.front().rows(), layer.hidden()));
    for (auto& u : inputs) {
      h = cfc_cell_step(h, u, layer);
      u = h;
    }
  }
  return inputs.back();
}

struct GruShape {
  Index input = 16;
  Index hidden = 120;
};

template <typename S>
struct GruParams {
  Tensor<S> w_ih, b_ih;  // 3H x in, 1 x 3H
  Tensor<S> w_hh, b_hh;  // 3H x H, 1 x 3H

  Index hidden() const { return w_hh.cols(); }
  static GruParams init(Index hidden, Index input, Rng& rng);
};

template <typename S>
Tensor<S> gru_cell(const Tensor<S>& x, const Tensor<S>& h, const GruParams<S>& p) {
  return detail::gru_blend(linear(x, p.w_ih, p.b_ih), linear(h, p.w_hh, p.b_hh), h);
}

template <typename S>
struct DecoderState {
  Tensor<S> s;
  Index k = 0;
};

struct LiquidConfig {
  Index d_model = 64;
  Index action_dim = 2;
  Index horizon = 16;
  /// 0 picks round(1.875 * d_model).
  Index hidden = 0;
  Index layers = 5;
  Index components = 5;
  Index embed_dim = 16;
  /// Length of the encoder input sequence (the context latent repeated).
  Index encoder_steps = 2;
  double sigma_floor = kDefaultSigmaFloor;
  double eps_guard = 1e-6;

  Index resolved_hidden() const {
    return hidden > 0 ? hidden : static_cast<Index>(std::lround(1.875 * static_cast<double>(d_model)));
  }
};

enum class DecodeMode { kDeterministic, kStochastic };

template <typename S>
struct FreeRunResult {
  Matrix<S> trajectory;  // horizon x action_dim
  std::vector<MixtureParams<S>> mixtures;
};

/// CfC encoder + GRU decoder + mixture output. Actions are passed as
/// (B x horizon*action_dim) rows, step-major.
template <typename S>
class LiquidHead {
 public:
  LiquidHead() = default;
  LiquidHead(const LiquidConfig& cfg, Rng& rng);

  const LiquidConfig& config() const { return cfg_; }
  Index hidden() const { return cfg_.resolved_hidden(); }
  Index window_width() const { return cfg_.horizon * cfg_.action_dim; }

  /// Top-layer CfC state after reading the context.
  Tensor<S> summary(const Tensor<S>& ctx) const;
  DecoderState<S> init_state(const Tensor<S>& ctx) const;
  /// Feeds the previous action, advances k. Throws once k reaches the horizon.
  DecoderState<S> step(const Tensor<S>& prev_action, const DecoderState<S>& state) const;
  Tensor<S> mdn_raw(const DecoderState<S>& state) const;
  std::vector<MixtureParams<S>> mdn_params(const DecoderState<S>& state) const;
  Tensor<S> start_tokens(Index batch) const;

  /// Per-step NLL (B x horizon) with ground truth as the previous action.
  Tensor<S> teacher_forced_nll(const Tensor<S>& ctx, const Matrix<S>& actions) const;
  /// Per-step NLL (B x horizon) of ground truth under self-fed mixtures.
  Tensor<S> free_running_nll(const Tensor<S>& ctx, const Matrix<S>& actions) const;

  /// Argmax-component decode for a batch of contexts, (B x horizon*action_dim).
  Matrix<S> decode_deterministic(const Matrix<S>& ctx) const;
  FreeRunResult<S> decode_free_running(const RowVector<S>& ctx, DecodeMode mode, std::uint64_t seed) const;
  /// K stochastic decodes with sub-seeds derive_seed(seed, {k}).
  std::vector<Matrix<S>> sample_trajectories(const RowVector<S>& ctx, Index count, std::uint64_t seed) const;
  /// One stochastic decode per context row, row i drawing from rngs[i].
  /// Returns (B x horizon*action_dim).
  Matrix<S> sample_batch(const Matrix<S>& ctx, std::vector<Rng>& rngs) const;

  const std::vector<CfcCellParams<S>>& cells() const { return cells_; }
  const GruParams<S>& gru() const { return gru_; }
  ParamSet<S> params() const;

  /// Output layer, exposed for tests.
  Tensor<S>& out_weight() { return out_w_; }
  Tensor<S>& out_bias() { return out_b_; }

 private:
  void check_actions(const Tensor<S>& ctx, const Matrix<S>& actions) const;

  LiquidConfig cfg_;
  std::vector<CfcCellParams<S>> cells_;
  Tensor<S> init_w_, init_b_;
  Tensor<S> start_;
  Tensor<S> emb_w_, emb_b_;
  GruParams<S> gru_;
  Tensor<S> out_w_, out_b_;
};

std::int64_t liquid_param_count(const LiquidConfig& cfg);

extern template class LiquidHead<float>;
extern template class LiquidHead<double>;

}  // namespace lqb
