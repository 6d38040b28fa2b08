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

#include "liquidbench/eval.hpp"

#include "liquidbench/io.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <sstream>

namespace lqb {

using nlohmann::json;

namespace {

using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix<double> unflatten(const RowVector<float>& row, Index horizon, Index d) {
  return Eigen::Map<const RowMajorF>(row.data(), horizon, d).cast<double>();
}

Matrix<float> context_matrix(const EvalInputs& in) {
  if (in.latents.empty()) throw NumericError("evaluation: no test windows");
  Matrix<float> ctx(static_cast<Index>(in.latents.size()), in.latents[0].value.cols());
  for (std::size_t i = 0; i < in.latents.size(); ++i) ctx.row(static_cast<Index>(i)) = in.latents[i].value;
  return ctx;
}

std::vector<std::uint64_t> digests(const Matrix<float>& ctx) {
  std::vector<std::uint64_t> out;
  for (Index i = 0; i < ctx.rows(); ++i) out.push_back(latent_digest(ctx.row(i)));
  return out;
}

constexpr Index kWindowChunk = 64;

}  // namespace

EvalInputs make_eval_inputs(const Backbone<float>& backbone, const WindowSet& test, Index horizon, Index action_dim,
                            Index max_windows) {
  const auto& bc = backbone.config();
  const Index n = max_windows > 0 ? std::min(max_windows, test.size()) : test.size();
  if (n == 0) throw NumericError("make_eval_inputs: empty test set");
  if (test.obs.cols() != bc.history * bc.obs_dim || test.act.cols() != horizon * action_dim) {
    throw NumericError("make_eval_inputs: window widths do not match the model");
  }
  EvalInputs in;
  in.obs = test.obs.topRows(n).cast<float>();
  for (Index i = 0; i < n; ++i) {
    const RowVector<float> row = in.obs.row(i);
    const Matrix<float> win = Eigen::Map<const RowMajorF>(row.data(), bc.history, bc.obs_dim);
    in.latents.push_back(backbone.encode_window(win, static_cast<std::uint64_t>(i)));
    in.truth.push_back(unflatten(test.act.row(i).cast<float>(), horizon, action_dim));
  }
  return in;
}

std::uint64_t latent_digest(const RowVector<float>& v) {
  std::string bytes(static_cast<std::size_t>(v.size()) * sizeof(float), '\0');
  std::memcpy(bytes.data(), v.data(), bytes.size());
  return fnv1a(bytes);
}

SampleBank liquid_bank(const LiquidHead<float>& head, const EvalInputs& in, const EvalConfig& cfg) {
  const Matrix<float> ctx = context_matrix(in);
  const Index h = head.config().horizon;
  const Index d = head.config().action_dim;
  const Index k = cfg.samples;
  SampleBank bank;
  bank.consumed = digests(ctx);
  for (Index s = 0; s < ctx.rows(); s += kWindowChunk) {
    const Index n = std::min(kWindowChunk, ctx.rows() - s);
    const Matrix<float> det = head.decode_deterministic(ctx.middleRows(s, n));
    Matrix<float> rep(n * k, ctx.cols());
    std::vector<Rng> rngs;
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < k; ++j) {
        rep.row(i * k + j) = ctx.row(s + i);
        rngs.emplace_back(derive_seed(cfg.seed, {static_cast<std::uint64_t>(s + i), static_cast<std::uint64_t>(j)}));
      }
    }
    const Matrix<float> draws = head.sample_batch(rep, rngs);
    for (Index i = 0; i < n; ++i) {
      bank.deterministic.push_back(unflatten(det.row(i), h, d));
      std::vector<Matrix<double>> ss;
      for (Index j = 0; j < k; ++j) ss.push_back(unflatten(draws.row(i * k + j), h, d));
      bank.samples.push_back(std::move(ss));
    }
  }
  return bank;
}

SampleBank diffusion_bank(const DiffusionHead<float>& head, const EvalInputs& in, const EvalConfig& cfg) {
  const Matrix<float> ctx = context_matrix(in);
  const Index h = head.config().horizon;
  const Index d = head.config().action_dim;
  const Index k = cfg.samples;
  SampleBank bank;
  bank.deterministic_is_sample = true;
  bank.consumed = digests(ctx);
  for (Index s = 0; s < ctx.rows(); s += kWindowChunk) {
    const Index n = std::min(kWindowChunk, ctx.rows() - s);
    // Row layout: n fixed-seed "deterministic" draws, then n*k samples.
    Matrix<float> rep(n * (k + 1), ctx.cols());
    std::vector<Rng> rngs;
    for (Index i = 0; i < n; ++i) {
      rep.row(i) = ctx.row(s + i);
      rngs.emplace_back(derive_seed(cfg.seed, {0xde7u, static_cast<std::uint64_t>(s + i)}));
    }
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < k; ++j) {
        rep.row(n + i * k + j) = ctx.row(s + i);
        rngs.emplace_back(derive_seed(cfg.seed, {static_cast<std::uint64_t>(s + i), static_cast<std::uint64_t>(j)}));
      }
    }
    const Matrix<float> draws = head.sample(rep, rngs);
    for (Index i = 0; i < n; ++i) {
      bank.deterministic.push_back(unflatten(draws.row(i), h, d));
      std::vector<Matrix<double>> ss;
      for (Index j = 0; j < k; ++j) ss.push_back(unflatten(draws.row(n + i * k + j), h, d));
      bank.samples.push_back(std::move(ss));
    }
  }
  return bank;
}

void assert_shared_latents(const EvalInputs& in, const SampleBank& a, const SampleBank& b) {
  if (a.consumed.size() != in.latents.size() || b.consumed.size() != in.latents.size()) {
    throw NumericError("latent sharing: heads scored different numbers of samples");
  }
  for (std::size_t i = 0; i < in.latents.size(); ++i) {
    const std::uint64_t ref = latent_digest(in.latents[i].value);
    if (in.latents[i].provenance != i || a.consumed[i] != ref || b.consumed[i] != ref) {
      throw NumericError("latent sharing: sample " + std::to_string(i) + " reached the heads with different bytes");
    }
  }
}

double exact_nll(const LiquidHead<float>& head, const EvalInputs& in) {
  const Matrix<float> ctx = context_matrix(in);
  const Index h = head.config().horizon;
  const Index d = head.config().action_dim;
  Matrix<float> act(ctx.rows(), h * d);
  for (Index i = 0; i < ctx.rows(); ++i) {
    const RowMajorD t = in.truth[static_cast<std::size_t>(i)];
    act.row(i) = Eigen::Map<const RowVector<double>>(t.data(), h * d).cast<float>();
  }
  return exact_nll<float>(head, ctx, act);
}

double proxy_nll(const SampleBank& bank, const EvalInputs& in, double sigma_floor) {
  if (bank.samples.size() != in.truth.size()) throw NumericError("proxy_nll: bank does not match inputs");
  double total = 0.0;
  for (std::size_t i = 0; i < in.truth.size(); ++i) total += proxy_nll(bank.samples[i], in.truth[i], sigma_floor);
  return total / static_cast<double>(in.truth.size());
}

MseMetrics mse_metrics(const SampleBank& bank, const EvalInputs& in) {
  const std::size_t n = in.truth.size();
  if (bank.samples.size() != n || bank.deterministic.size() != n) {
    throw NumericError("mse_metrics: bank does not match inputs");
  }
  MseMetrics m;
  std::size_t jerk_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ss = bank.samples[i];
    if (ss.size() < kBestOfK.back()) {
      throw NumericError("mse_metrics: need " + std::to_string(kBestOfK.back()) + " samples per window");
    }
    m.deterministic += mse(bank.deterministic[i], in.truth[i]);
    m.sample_mean += sample_mean_mse(ss, in.truth[i]);
    std::array<double, 4> row{};
    for (std::size_t k = 0; k < kBestOfK.size(); ++k) {
      row[k] = best_of_k(ss, in.truth[i], kBestOfK[k]);
      m.best_of_k[k] += row[k];
    }
    m.per_window.push_back(row);
    m.diversity += diversity(ss);
    for (const auto& s : ss) {
      m.jerk += jerk(s);
      ++jerk_count;
    }
  }
  const double dn = static_cast<double>(n);
  m.deterministic /= dn;
  m.sample_mean /= dn;
  for (double& v : m.best_of_k) v /= dn;
  m.diversity /= dn;
  m.jerk /= static_cast<double>(jerk_count);
  return m;
}

LatencyResult latency_bench(const std::function<void()>& generate, Index batch, int warmup, int repeats) {
  if (repeats < 1 || batch < 1) throw NumericError("latency_bench: repeats and batch must be positive");
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup; ++i) generate();
  LatencyResult r;
  r.batch = batch;
  r.repeats = repeats;
  // Grow the inner loop until one timed block is well above clock resolution.
  for (;;) {
    const auto t0 = clock::now();
    for (int i = 0; i < r.inner; ++i) generate();
    const double s = std::chrono::duration<double>(clock::now() - t0).count();
    if (s >= 1e-4 || r.inner >= (1 << 20)) break;
    r.inner *= 2;
  }
  std::vector<double> ms;
  for (int rep = 0; rep < repeats; ++rep) {
    const auto t0 = clock::now();
    for (int i = 0; i < r.inner; ++i) generate();
    const double s = std::chrono::duration<double>(clock::now() - t0).count();
    ms.push_back(s * 1e3 / static_cast<double>(r.inner) / static_cast<double>(batch));
  }
  std::sort(ms.begin(), ms.end());
  r.min_ms = ms.front();
  r.max_ms = ms.back();
  const std::size_t mid = ms.size() / 2;
  r.median_ms = ms.size() % 2 == 1 ? ms[mid] : 0.5 * (ms[mid - 1] + ms[mid]);
  if (!(r.median_ms > 0.0)) throw NumericError("latency_bench: clock could not resolve the generation time");
  return r;
}

namespace {

Matrix<float> latency_obs(const Matrix<float>& obs, Index batch) {
  if (obs.rows() == 0) throw NumericError("latency: no observation windows");
  Matrix<float> out(batch, obs.cols());
  for (Index i = 0; i < batch; ++i) out.row(i) = obs.row(i % obs.rows());
  return out;
}

}  // namespace

LatencyResult liquid_latency(const Backbone<float>& backbone, const LiquidHead<float>& head, const Matrix<float>& obs,
                             const EvalConfig& cfg) {
  const Matrix<float> windows = latency_obs(obs, cfg.latency_batch);
  std::uint64_t call = 0;
  const auto generate = [&] {
    const Matrix<float> ctx = backbone.encode(windows);
    std::vector<Rng> rngs;
    for (Index i = 0; i < ctx.rows(); ++i) rngs.emplace_back(derive_seed(cfg.seed, {call, static_cast<std::uint64_t>(i)}));
    ++call;
    const Matrix<float> out = head.sample_batch(ctx, rngs);
    if (!out.allFinite()) throw NumericError("liquid_latency: non-finite trajectory");
  };
  return latency_bench(generate, cfg.latency_batch, cfg.latency_warmup, cfg.latency_repeats);
}

LatencyResult diffusion_latency(const Backbone<float>& backbone, const DiffusionHead<float>& head,
                                const Matrix<float>& obs, const EvalConfig& cfg) {
  const Matrix<float> windows = latency_obs(obs, cfg.latency_batch);
  std::uint64_t call = 0;
  const auto generate = [&] {
    const Matrix<float> ctx = backbone.encode(windows);
    std::vector<Rng> rngs;
    for (Index i = 0; i < ctx.rows(); ++i) rngs.emplace_back(derive_seed(cfg.seed, {call, static_cast<std::uint64_t>(i)}));
    ++call;
    const Matrix<float> out = head.sample(ctx, rngs);
    if (!out.allFinite()) throw NumericError("diffusion_latency: non-finite trajectory");
  };
  head.reset_calls();
  generate();
  const std::uint64_t calls = head.calls();
  LatencyResult r = latency_bench(generate, cfg.latency_batch, cfg.latency_warmup, cfg.latency_repeats);
  r.denoiser_calls_per_generation = calls;
  return r;
}

namespace {

std::string num(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsReport>& rows) {
  std::string out =
      "model,dataset,fraction,seed,params,nll,proxy,det_mse,det_is_sample,sample_mean_mse,best_of_1,best_of_2,"
      "best_of_5,best_of_10,diversity,jerk,tag,config_hash,status\n";
  for (const auto& r : rows) {
    out += r.model + "," + r.dataset + "," + num(r.fraction) + "," + std::to_string(r.seed) + "," +
           std::to_string(r.params) + "," + num(r.nll) + "," + (r.proxy ? "true" : "false") + "," + num(r.det_mse) +
           "," + (r.det_is_sample ? "true" : "false") + "," + num(r.sample_mean_mse);
    for (double b : r.best_of_k) out += "," + num(b);
    out += "," + num(r.diversity) + "," + num(r.jerk) + "," + r.tag + "," + r.config_hash + "," + r.status + "\n";
  }
  return out;
}

std::string timing_csv(const std::vector<MetricsReport>& rows) {
  std::string out = "model,dataset,fraction,seed,latency_ms,timestamp\n";
  for (const auto& r : rows) {
    out += r.model + "," + r.dataset + "," + num(r.fraction) + "," + std::to_string(r.seed) + "," + num(r.latency_ms) +
           "," + r.timestamp + "\n";
  }
  return out;
}

json to_json(const MetricsReport& r) {
  return {{"model", r.model},
          {"dataset", r.dataset},
          {"fraction", r.fraction},
          {"seed", r.seed},
          {"params", r.params},
          {"nll", r.nll},
          {"proxy", r.proxy},
          {"det_mse", r.det_mse},
          {"det_is_sample", r.det_is_sample},
          {"sample_mean_mse", r.sample_mean_mse},
          {"best_of_k", r.best_of_k},
          {"diversity", r.diversity},
          {"jerk", r.jerk},
          {"latency_ms", r.latency_ms},
          {"timestamp", r.timestamp},
          {"tag", r.tag},
          {"config_hash", r.config_hash},
          {"status", r.status}};
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.model = j.at("model").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.fraction = j.at("fraction").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.params = j.at("params").get<std::int64_t>();
  r.nll = j.at("nll").get<double>();
  r.proxy = j.at("proxy").get<bool>();
  r.det_mse = j.at("det_mse").get<double>();
  r.det_is_sample = j.at("det_is_sample").get<bool>();
  r.sample_mean_mse = j.at("sample_mean_mse").get<double>();
  r.best_of_k = j.at("best_of_k").get<std::array<double, 4>>();
  r.diversity = j.at("diversity").get<double>();
  r.jerk = j.at("jerk").get<double>();
  r.latency_ms = j.at("latency_ms").get<double>();
  r.timestamp = j.at("timestamp").get<std::string>();
  r.tag = j.value("tag", "");
  r.config_hash = j.at("config_hash").get<std::string>();
  r.status = j.value("status", "ok");
  return r;
}

void write_sidecar(const std::string& prefix, const MetricsReport& r, const std::vector<double>& errors) {
  std::string blob(errors.size() * sizeof(double), '\0');
  std::memcpy(blob.data(), errors.data(), blob.size());
  const std::string bin = prefix + ".bin";
  write_file_atomic(bin, blob);
  const json m = {{"model", r.model},   {"dataset", r.dataset},
                  {"fraction", r.fraction}, {"seed", r.seed},
                  {"metric", "best_of_10_mse"}, {"dtype", "f64"},
                  {"count", errors.size()}, {"file", std::filesystem::path(bin).filename().string()}};
  write_file_atomic(prefix + ".json", m.dump(2) + "\n");
}

std::vector<double> read_sidecar(const std::string& prefix) {
  const json m = json::parse(read_file(prefix + ".json"));
  const std::string blob = read_file(prefix + ".bin");
  const auto count = m.at("count").get<std::size_t>();
  if (blob.size() != count * sizeof(double)) throw IoError(prefix + ".bin: length does not match manifest");
  std::vector<double> out(count);
  std::memcpy(out.data(), blob.data(), blob.size());
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace lqb
