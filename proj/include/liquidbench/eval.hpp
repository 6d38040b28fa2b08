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

#include "liquidbench/backbone.hpp"
#include "liquidbench/data.hpp"
#include "liquidbench/diffusion_head.hpp"
#include "liquidbench/liquid_head.hpp"
#include "liquidbench/metrics.hpp"

#include "json.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace lqb {

inline constexpr std::array<std::size_t, 4> kBestOfK = {1, 2, 5, 10};

struct EvalConfig {
  /// Stochastic samples per test window; best-of-K uses the first K of these.
  Index samples = 10;
  std::uint64_t seed = 42;
  /// 0 evaluates every test window.
  Index max_windows = 0;
  int latency_warmup = 3;
  int latency_repeats = 20;
  Index latency_batch = 1;
};

/// Test windows turned into per-sample latents. Both heads read these exact
/// objects; the provenance is the window index.
struct EvalInputs {
  std::vector<ContextLatent<float>> latents;
  std::vector<Matrix<double>> truth;  // horizon x action_dim, normalized
  Matrix<float> obs;                  // flattened history rows, for latency runs
};

EvalInputs make_eval_inputs(const Backbone<float>& backbone, const WindowSet& test, Index horizon, Index action_dim,
                            Index max_windows = 0);

/// FNV-1a over the raw bytes of a latent row.
std::uint64_t latent_digest(const RowVector<float>& v);

/// Decodes for every test window.
struct SampleBank {
  std::vector<Matrix<double>> deterministic;
  std::vector<std::vector<Matrix<double>>> samples;
  /// Digest of the latent bytes the head actually consumed, per window.
  std::vector<std::uint64_t> consumed;
  /// True when the deterministic decode is a fixed-seed sample.
  bool deterministic_is_sample = false;
};

SampleBank liquid_bank(const LiquidHead<float>& head, const EvalInputs& in, const EvalConfig& cfg);
SampleBank diffusion_bank(const DiffusionHead<float>& head, const EvalInputs& in, const EvalConfig& cfg);

/// Throws unless both banks consumed byte-identical latents for every window.
void assert_shared_latents(const EvalInputs& in, const SampleBank& a, const SampleBank& b);

/// Mean teacher-forced NLL per action step (nats).
template <typename S>
double exact_nll(const LiquidHead<S>& head, const Matrix<S>& ctx, const Matrix<S>& actions) {
  NoGradGuard guard;
  if (ctx.rows() == 0) throw NumericError("exact_nll: empty test set");
  double total = 0.0;
  constexpr Index kChunk = 256;
  for (Index s = 0; s < ctx.rows(); s += kChunk) {
    const Index n = std::min(kChunk, ctx.rows() - s);
    const Matrix<S> c = ctx.middleRows(s, n);
    const Matrix<S> a = actions.middleRows(s, n);
    total += static_cast<double>(head.teacher_forced_nll(Tensor<S>(c), a).value().template cast<double>().sum());
  }
  return total / static_cast<double>(ctx.rows() * head.config().horizon);
}

double exact_nll(const LiquidHead<float>& head, const EvalInputs& in);

/// Mean proxy NLL over the bank's stochastic samples.
double proxy_nll(const SampleBank& bank, const EvalInputs& in, double sigma_floor = kDefaultSigmaFloor);

struct MseMetrics {
  double deterministic = 0.0;
  double sample_mean = 0.0;
  std::array<double, 4> best_of_k{};
  /// Per-window best-of-K errors, same K order.
  std::vector<std::array<double, 4>> per_window;
  double diversity = 0.0;
  double jerk = 0.0;
};

MseMetrics mse_metrics(const SampleBank& bank, const EvalInputs& in);

struct LatencyResult {
  double median_ms = 0.0;  // per trajectory
  double min_ms = 0.0;
  double max_ms = 0.0;
  int repeats = 0;
  /// Generations per timed repeat (raised when the clock cannot resolve one).
  int inner = 1;
  Index batch = 1;
  std::uint64_t denoiser_calls_per_generation = 0;
};

/// Times `generate` (which produces `batch` trajectories) after warmups.
LatencyResult latency_bench(const std::function<void()>& generate, Index batch, int warmup, int repeats);

/// Backbone plus head, from raw observation windows to trajectories.
LatencyResult liquid_latency(const Backbone<float>& backbone, const LiquidHead<float>& head, const Matrix<float>& obs,
                             const EvalConfig& cfg);
LatencyResult diffusion_latency(const Backbone<float>& backbone, const DiffusionHead<float>& head,
                                const Matrix<float>& obs, const EvalConfig& cfg);

/// One row of the results table.
struct MetricsReport {
  std::string model;
  std::string dataset;
  double fraction = 1.0;
  std::uint64_t seed = 42;
  std::int64_t params = 0;
  double nll = 0.0;
  bool proxy = false;
  double det_mse = 0.0;
  bool det_is_sample = false;
  double sample_mean_mse = 0.0;
  std::array<double, 4> best_of_k{};
  double diversity = 0.0;
  double jerk = 0.0;
  double latency_ms = 0.0;
  std::string timestamp;
  std::string tag;
  std::string config_hash;
  std::string status = "ok";
};

/// Columns of metrics.csv: everything except latency and timestamp, so the
/// file is reproducible bit for bit.
std::string metrics_csv(const std::vector<MetricsReport>& rows);
std::string timing_csv(const std::vector<MetricsReport>& rows);
nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

/// Per-window best-of-10 errors: <prefix>.json manifest plus <prefix>.bin (f64).
void write_sidecar(const std::string& prefix, const MetricsReport& r, const std::vector<double>& errors);
std::vector<double> read_sidecar(const std::string& prefix);

std::string utc_timestamp();

}  // namespace lqb
