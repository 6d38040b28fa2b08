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

#include "liquidbench/train.hpp"

#include "liquidbench/io.hpp"
#include "liquidbench/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

namespace lqb {

using nlohmann::json;

double TrainConfig::w_fr(int epoch) const {
  if (epochs < 1) throw NumericError("TrainConfig: epochs must be >= 1");
  if (epochs == 1) return w_fr_start;
  const double frac = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return w_fr_start + (w_fr_end - w_fr_start) * frac;
}

LrSchedule TrainConfig::schedule() const {
  LrSchedule s;
  s.peak_lr = adam.peak_lr;
  s.warmup_epochs = warmup_epochs;
  s.total_epochs = static_cast<double>(epochs);
  s.floor_lr = floor_lr;
  return s;
}

bool EpochRecord::same_values(const EpochRecord& o) const {
  return epoch == o.epoch && train_loss == o.train_loss && val_tf_nll == o.val_tf_nll && val_fr_nll == o.val_fr_nll &&
         val_denoise == o.val_denoise && val_proxy_nll == o.val_proxy_nll && lr == o.lr && w_fr == o.w_fr &&
         steps == o.steps;
}

json to_json(const EpochRecord& r, bool with_time) {
  json j = {{"epoch", r.epoch},           {"train_loss", r.train_loss}, {"val_tf_nll", r.val_tf_nll},
            {"val_fr_nll", r.val_fr_nll}, {"val_denoise", r.val_denoise}, {"val_proxy_nll", r.val_proxy_nll},
            {"lr", r.lr},                 {"w_fr", r.w_fr},             {"steps", r.steps}};
  if (with_time) j["seconds"] = r.seconds;
  return j;
}

EpochRecord record_from_json(const json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.train_loss = j.at("train_loss").get<double>();
  r.val_tf_nll = j.at("val_tf_nll").get<double>();
  r.val_fr_nll = j.at("val_fr_nll").get<double>();
  r.val_denoise = j.at("val_denoise").get<double>();
  r.val_proxy_nll = j.at("val_proxy_nll").get<double>();
  r.lr = j.at("lr").get<double>();
  r.w_fr = j.at("w_fr").get<double>();
  r.steps = j.at("steps").get<std::int64_t>();
  r.seconds = j.value("seconds", 0.0);
  return r;
}

const char* head_name(HeadKind k) { return k == HeadKind::kLiquid ? "liquid" : "diffusion"; }

HeadKind parse_head(const std::string& name) {
  if (name == "liquid") return HeadKind::kLiquid;
  if (name == "diffusion") return HeadKind::kDiffusion;
  throw std::invalid_argument("unknown model '" + name + "' (expected liquid or diffusion)");
}

LatentWindows encode_windows(const Backbone<float>& backbone, const WindowSet& windows) {
  LatentWindows out;
  out.ctx = backbone.encode(windows.obs.cast<float>());
  out.act = windows.act.cast<float>();
  return out;
}

double selection_metric(const EpochRecord& r, HeadKind kind) {
  return kind == HeadKind::kLiquid ? r.val_fr_nll : r.val_proxy_nll;
}

std::size_t select_checkpoint(const std::vector<double>& metric) {
  if (metric.empty()) throw NumericError("select_checkpoint: no records");
  std::size_t best = 0;
  for (std::size_t i = 1; i < metric.size(); ++i) {
    if (metric[i] < metric[best]) best = i;
  }
  return best;
}

std::size_t select_checkpoint(const std::vector<EpochRecord>& records, HeadKind kind) {
  std::vector<double> m;
  m.reserve(records.size());
  for (const auto& r : records) m.push_back(selection_metric(r, kind));
  return select_checkpoint(m);
}

LatentWindows cap_rows(const LatentWindows& data, Index cap) {
  if (cap <= 0 || data.size() <= cap) return data;
  LatentWindows out;
  out.ctx.resize(cap, data.ctx.cols());
  out.act.resize(cap, data.act.cols());
  for (Index i = 0; i < cap; ++i) {
    const Index r = i * data.size() / cap;
    out.ctx.row(i) = data.ctx.row(r);
    out.act.row(i) = data.act.row(r);
  }
  return out;
}

namespace {

constexpr Index kEvalChunk = 256;

template <typename F>
double chunked_mean(const LatentWindows& data, F&& per_chunk_sum, Index per_row) {
  if (data.size() == 0) throw NumericError("validation set is empty");
  double total = 0.0;
  for (Index start = 0; start < data.size(); start += kEvalChunk) {
    const Index n = std::min(kEvalChunk, data.size() - start);
    total += per_chunk_sum(data.ctx.middleRows(start, n), data.act.middleRows(start, n));
  }
  return total / static_cast<double>(data.size() * per_row);
}

}  // namespace

double mean_tf_nll(const LiquidHead<float>& head, const LatentWindows& data) {
  NoGradGuard guard;
  return chunked_mean(
      data,
      [&](const Matrix<float>& ctx, const Matrix<float>& act) {
        return head.teacher_forced_nll(Tensor<float>(ctx), act).value().cast<double>().sum();
      },
      head.config().horizon);
}

double mean_fr_nll(const LiquidHead<float>& head, const LatentWindows& data) {
  NoGradGuard guard;
  return chunked_mean(
      data,
      [&](const Matrix<float>& ctx, const Matrix<float>& act) {
        return head.free_running_nll(Tensor<float>(ctx), act).value().cast<double>().sum();
      },
      head.config().horizon);
}

double mean_denoise_loss(const DiffusionHead<float>& head, const LatentWindows& data, std::uint64_t seed) {
  NoGradGuard guard;
  Rng rng(seed);
  return chunked_mean(
      data,
      [&](const Matrix<float>& ctx, const Matrix<float>& act) {
        const double l = head.denoise_loss(act, Tensor<float>(ctx), rng).item();
        return l * static_cast<double>(ctx.rows());
      },
      1);
}

double mean_proxy_nll_diffusion(const DiffusionHead<float>& head, const LatentWindows& data, Index windows,
                                Index samples, std::uint64_t seed) {
  NoGradGuard guard;
  const Index n = std::min(windows, data.size());
  if (n <= 0) throw NumericError("mean_proxy_nll_diffusion: no windows");
  const auto& cfg = head.config();
  Matrix<float> ctx(n * samples, data.ctx.cols());
  std::vector<Rng> rngs;
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < samples; ++k) {
      ctx.row(i * samples + k) = data.ctx.row(i);
      rngs.emplace_back(derive_seed(seed, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(k)}));
    }
  }
  const Matrix<float> draws = head.sample(ctx, rngs);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    std::vector<Matrix<double>> s;
    for (Index k = 0; k < samples; ++k) {
      const RowVector<float> row = draws.row(i * samples + k);
      s.push_back(Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                      row.data(), cfg.horizon, cfg.action_dim)
                      .cast<double>());
    }
    const RowVector<float> truth_row = data.act.row(i);
    const Matrix<double> truth =
        Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            truth_row.data(), cfg.horizon, cfg.action_dim)
            .cast<double>();
    total += proxy_nll(s, truth, kDefaultSigmaFloor);
  }
  return total / static_cast<double>(n);
}

namespace {

struct Paths {
  std::string last, best, log;
};

Paths paths_for(const std::string& dir) {
  namespace fs = std::filesystem;
  return {(fs::path(dir) / "last.ckpt").string(), (fs::path(dir) / "best.ckpt").string(),
          (fs::path(dir) / "train_log.jsonl").string()};
}

Checkpoint make_checkpoint(HeadKind kind, const TrainConfig& cfg, const std::vector<EpochRecord>& records,
                           const ParamSet<float>& params, const OptimizerState<float>* opt) {
  Checkpoint c;
  c.meta["model"] = head_name(kind);
  c.meta["config_hash"] = cfg.config_hash;
  c.meta["seed"] = cfg.seed;
  c.meta["epochs"] = cfg.epochs;
  c.meta["epoch"] = records.empty() ? -1 : records.back().epoch;
  json rs = json::array();
  for (const auto& r : records) rs.push_back(to_json(r, false));
  c.meta["records"] = rs;
  for (const auto& [k, v] : cfg.meta_extra.items()) c.meta[k] = v;
  put_params(c, params, opt);
  return c;
}

void write_log(const std::string& path, const std::vector<EpochRecord>& records) {
  std::string text;
  for (const auto& r : records) text += to_json(r, true).dump() + "\n";
  write_file_atomic(path, text);
}

/// Per-head pieces plugged into the shared loop.
struct HeadOps {
  HeadKind kind;
  ParamSet<float> params;
  std::function<Tensor<float>(const Matrix<float>& ctx, const Matrix<float>& act, int epoch, Index batch)> loss;
  std::function<void(EpochRecord& r)> validate;
};

TrainResult run_loop(HeadOps& ops, const LatentWindows& train, const TrainConfig& cfg, const StepObserver& observer) {
  if (cfg.epochs < 1) throw NumericError("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw NumericError("train: batch_size must be >= 1");
  if (train.size() == 0) throw NumericError("train: empty training set");
  if (train.ctx.rows() != train.act.rows()) throw NumericError("train: context and action rows differ");

  auto& params = ops.params;
  OptimizerState<float> opt = OptimizerState<float>::init(params, cfg.adam);
  const LrSchedule sched = cfg.schedule();
  TrainResult result;
  std::vector<EpochRecord>& records = result.records;

  const bool persist = !cfg.out_dir.empty();
  Paths paths;
  if (persist) {
    ensure_dir(cfg.out_dir);
    paths = paths_for(cfg.out_dir);
    if (cfg.resume && std::filesystem::exists(paths.last)) {
      const Checkpoint c = load_checkpoint(paths.last);
      if (c.meta.at("model").get<std::string>() != head_name(ops.kind)) {
        throw CheckpointError(paths.last + ": holds a " + c.meta.at("model").get<std::string>() + " model");
      }
      if (c.meta.at("config_hash").get<std::string>() != cfg.config_hash) {
        throw CheckpointError(paths.last + ": config hash differs from the current run");
      }
      get_params(c, params, &opt);
      for (const auto& j : c.meta.at("records")) records.push_back(record_from_json(j));
      // Keep the wall-clock column from the previous log where available.
      if (std::filesystem::exists(paths.log)) {
        std::istringstream in(read_file(paths.log));
        std::string line;
        for (std::size_t i = 0; i < records.size() && std::getline(in, line); ++i) {
          try {
            records[i].seconds = json::parse(line).value("seconds", 0.0);
          } catch (const json::exception&) {
            break;
          }
        }
      }
    }
  }

  const Index n = train.size();
  const Index nb = (n + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (int epoch = static_cast<int>(records.size()); epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), Index{0});
    Rng shuffle_rng(derive_seed(cfg.seed, {0x5bu, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    double lr = 0.0;
    for (Index b = 0; b < nb; ++b) {
      const Index start = b * cfg.batch_size;
      const Index rows = std::min(cfg.batch_size, n - start);
      Matrix<float> ctx(rows, train.ctx.cols());
      Matrix<float> act(rows, train.act.cols());
      for (Index i = 0; i < rows; ++i) {
        const Index r = order[static_cast<std::size_t>(start + i)];
        ctx.row(i) = train.ctx.row(r);
        act.row(i) = train.act.row(r);
      }
      const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(b);
      zero_grads(params);
      double value = 0.0;
      try {
        const Tensor<float> loss = ops.loss(ctx, act, epoch, b);
        value = static_cast<double>(loss.item());
        if (!std::isfinite(value)) throw NumericError("train: non-finite loss at " + where);
        backward(loss);
        ensure_grads(params);
        clip_global_norm(params, cfg.clip_norm);
      } catch (const NumericError& e) {
        if (std::string(e.what()).find(where) != std::string::npos) throw;
        throw NumericError(std::string(e.what()) + " (" + where + ")");
      }
      lr = sched.lr_at(static_cast<double>(epoch) + static_cast<double>(b) / static_cast<double>(nb));
      adamw_step(params, opt, lr);
      ++result.optimizer_steps;
      if (observer) observer(epoch, b, global_grad_norm(params));
      loss_sum += value * static_cast<double>(rows);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.lr = lr;
    rec.w_fr = cfg.w_fr(epoch);
    rec.steps = opt.step;
    ops.validate(rec);
    for (double v : {rec.train_loss, rec.val_tf_nll, rec.val_fr_nll, rec.val_denoise, rec.val_proxy_nll}) {
      if (!std::isfinite(v)) throw NumericError("train: non-finite epoch metric at epoch " + std::to_string(epoch));
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    records.push_back(rec);
    ++result.epochs_run;

    if (persist) {
      if (select_checkpoint(records, ops.kind) == records.size() - 1) {
        save_checkpoint(make_checkpoint(ops.kind, cfg, records, params, nullptr), paths.best);
      }
      save_checkpoint(make_checkpoint(ops.kind, cfg, records, params, &opt), paths.last);
      write_log(paths.log, records);
    }
  }
  result.best_index = select_checkpoint(records, ops.kind);
  return result;
}

}  // namespace

TrainResult train_liquid(LiquidHead<float>& head, const LatentWindows& train, const LatentWindows& val,
                         const TrainConfig& cfg, const StepObserver& observer) {
  const LatentWindows vcap = cap_rows(val, cfg.val_cap);
  HeadOps ops;
  ops.kind = HeadKind::kLiquid;
  ops.params = head.params();
  ops.loss = [&](const Matrix<float>& ctx, const Matrix<float>& act, int epoch, Index) {
    const float w_fr = static_cast<float>(cfg.w_fr(epoch));
    const float w_tf = static_cast<float>(cfg.w_tf(epoch));
    const Tensor<float> c(ctx);
    Tensor<float> loss;
    if (w_tf != 0.0f) loss = scale(mean(head.teacher_forced_nll(c, act)), w_tf);
    if (w_fr != 0.0f) {
      const Tensor<float> fr = scale(mean(head.free_running_nll(c, act)), w_fr);
      loss = loss.defined() ? add(loss, fr) : fr;
    }
    return loss;
  };
  ops.validate = [&](EpochRecord& r) {
    r.val_tf_nll = mean_tf_nll(head, vcap);
    r.val_fr_nll = mean_fr_nll(head, vcap);
  };
  return run_loop(ops, train, cfg, observer);
}

TrainResult train_diffusion(DiffusionHead<float>& head, const LatentWindows& train, const LatentWindows& val,
                            const TrainConfig& cfg, const StepObserver& observer) {
  const LatentWindows vcap = cap_rows(val, cfg.val_cap);
  const LatentWindows vproxy = cap_rows(val, cfg.proxy_windows);
  HeadOps ops;
  ops.kind = HeadKind::kDiffusion;
  ops.params = head.params();
  ops.loss = [&](const Matrix<float>& ctx, const Matrix<float>& act, int epoch, Index batch) {
    Rng rng(derive_seed(cfg.seed, {0xdfu, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(batch)}));
    return head.denoise_loss(act, Tensor<float>(ctx), rng);
  };
  ops.validate = [&](EpochRecord& r) {
    r.val_denoise = mean_denoise_loss(head, vcap, derive_seed(cfg.seed, {0xde1u}));
    r.val_proxy_nll = mean_proxy_nll_diffusion(head, vproxy, vproxy.size(), cfg.proxy_samples,
                                               derive_seed(cfg.seed, {0x9e0u}));
  };
  return run_loop(ops, train, cfg, observer);
}

}  // namespace lqb
