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
#include "liquidbench/checkpoint.hpp"
#include "liquidbench/data.hpp"
#include "liquidbench/diffusion_head.hpp"
#include "liquidbench/liquid_head.hpp"

#include <functional>
#include <string>
#include <vector>

namespace lqb {

struct TrainConfig {
  int epochs = 120;
  Index batch_size = 64;
  std::uint64_t seed = 42;
  double w_fr_start = 0.0;
  double w_fr_end = 0.5;
  AdamWConfig adam;
  double warmup_epochs = 3.0;
  double floor_lr = 3e-7;
  double clip_norm = 1.0;
  /// Validation windows used per epoch (evenly spaced subsample).
  Index val_cap = 512;
  /// Diffusion proxy-NLL validation: windows and samples per window.
  Index proxy_windows = 32;
  Index proxy_samples = 10;
  /// When set, last.ckpt / best.ckpt / train_log.jsonl are written here.
  std::string out_dir;
  /// Continue from out_dir/last.ckpt if present.
  bool resume = false;
  /// Stored in checkpoints; a resume with a different hash is refused.
  std::string config_hash;
  /// Extra keys copied into every checkpoint manifest.
  nlohmann::json meta_extra = nlohmann::json::object();

  double w_fr(int epoch) const;
  double w_tf(int epoch) const { return 1.0 - w_fr(epoch); }
  LrSchedule schedule() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_tf_nll = 0.0;
  double val_fr_nll = 0.0;
  double val_denoise = 0.0;
  double val_proxy_nll = 0.0;
  double lr = 0.0;
  double w_fr = 0.0;
  std::int64_t steps = 0;
  /// Wall clock; excluded from checkpoints and equality.
  double seconds = 0.0;

  bool same_values(const EpochRecord& o) const;
};

nlohmann::json to_json(const EpochRecord& r, bool with_time);
EpochRecord record_from_json(const nlohmann::json& j);

enum class HeadKind { kLiquid, kDiffusion };
const char* head_name(HeadKind k);
HeadKind parse_head(const std::string& name);

/// Context latents from the frozen backbone paired with action windows.
struct LatentWindows {
  Matrix<float> ctx;
  Matrix<float> act;
  Index size() const { return ctx.rows(); }
};

LatentWindows encode_windows(const Backbone<float>& backbone, const WindowSet& windows);

/// Selection metric: free-running NLL for liquid, proxy NLL for diffusion.
double selection_metric(const EpochRecord& r, HeadKind kind);
/// argmin of the metric; earliest epoch on ties.
std::size_t select_checkpoint(const std::vector<double>& metric);
std::size_t select_checkpoint(const std::vector<EpochRecord>& records, HeadKind kind);

struct TrainResult {
  std::vector<EpochRecord> records;
  std::size_t best_index = 0;
  std::int64_t optimizer_steps = 0;
  /// Epochs run by this call (less than records.size() after a resume).
  int epochs_run = 0;
};

/// Optional observer called after every optimizer step with the post-clip norm.
using StepObserver = std::function<void(int epoch, Index batch, double clipped_norm)>;

TrainResult train_liquid(LiquidHead<float>& head, const LatentWindows& train, const LatentWindows& val,
                         const TrainConfig& cfg, const StepObserver& observer = {});
TrainResult train_diffusion(DiffusionHead<float>& head, const LatentWindows& train, const LatentWindows& val,
                            const TrainConfig& cfg, const StepObserver& observer = {});

/// Validation metrics computed per epoch, exposed for eval and tests.
double mean_tf_nll(const LiquidHead<float>& head, const LatentWindows& data);
double mean_fr_nll(const LiquidHead<float>& head, const LatentWindows& data);
double mean_denoise_loss(const DiffusionHead<float>& head, const LatentWindows& data, std::uint64_t seed);
/// Proxy NLL over the first `windows` rows with `samples` draws each.
double mean_proxy_nll_diffusion(const DiffusionHead<float>& head, const LatentWindows& data, Index windows,
                                Index samples, std::uint64_t seed);

/// Evenly spaced subsample of at most `cap` rows.
LatentWindows cap_rows(const LatentWindows& data, Index cap);

}  // namespace lqb
