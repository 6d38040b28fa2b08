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

#include "liquidbench/data.hpp"
#include "liquidbench/eval.hpp"
#include "liquidbench/models.hpp"
#include "liquidbench/sim.hpp"
#include "liquidbench/train.hpp"

#include "json.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lqb {

inline constexpr const char* kDefaultTag = "fair_halfparam_deterministic_clip_120epochs";
inline constexpr int kFastEpochs = 30;

/// Failure with a machine-readable kind: config, missing_input, exists,
/// hash_mismatch, invariant.
class ExperimentError : public std::runtime_error {
 public:
  ExperimentError(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

/// Flat run configuration. Every field maps to one JSON key of the same name.
struct RunConfig {
  std::string tag = kDefaultTag;
  // data
  std::string task = "bimaze";  // bimaze | bimodal1d
  int n_traj = 300;
  std::uint64_t seed = 42;
  Index history = 2;
  Index horizon = 16;
  bool zscore = false;
  // models
  Index d_model = 64;
  bool attention = false;
  Index liquid_hidden = 0;
  Index liquid_layers = 5;
  Index components = 5;
  Index embed_dim = 16;
  Index diffusion_width = 0;
  Index diffusion_depth = 3;
  int diffusion_steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.4;
  // training
  int epochs = 120;
  bool fast = false;
  Index batch_size = 64;
  double lr = 3e-4;
  double weight_decay = 1e-2;
  double warmup_epochs = 3.0;
  double floor_lr = 3e-7;
  double clip_norm = 1.0;
  double w_fr_start = 0.0;
  double w_fr_end = 0.5;
  Index val_cap = 512;
  Index proxy_windows = 32;
  Index proxy_samples = 10;
  // evaluation
  Index eval_samples = 10;
  Index eval_max_windows = 0;
  int latency_warmup = 3;
  int latency_repeats = 20;
  Index latency_batch = 1;
  // closed loop
  int episodes = 20;
  Index exec_horizon = 8;
  std::string liquid_decode = "argmax";  // argmax | sample
  // sweep
  std::vector<std::uint64_t> sweep_seeds{42, 43};

  int effective_epochs() const { return fast ? kFastEpochs : epochs; }
  /// Throws ExperimentError("config", ...) on out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
/// Canonical text: sorted keys, two-space indent, trailing newline.
std::string config_text(const RunConfig& c);
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& c, const std::string& path);

/// FNV-1a of the canonical compact JSON.
std::string config_hash(const RunConfig& c);
/// Hash of the keys that shape the dataset cache.
std::string data_hash(const RunConfig& c);
/// Hash of everything a trained head depends on.
std::string train_hash(const RunConfig& c, HeadKind kind, std::uint64_t seed, double fraction);

PreparedData generate_dataset(const RunConfig& c);
ModelConfig model_config(const RunConfig& c, const PreparedData& d);
TrainConfig train_config(const RunConfig& c, HeadKind kind, std::uint64_t seed, double fraction,
                         const std::string& out_dir);
EvalConfig eval_config(const RunConfig& c, std::uint64_t seed);
RolloutConfig rollout_config(const RunConfig& c);

/// Output directory layout under --out.
struct Layout {
  std::string root;
  std::string dataset() const;
  std::string train_dir(HeadKind k) const;
  std::string eval_dir() const;
  std::string sweep_dir() const;
  std::string rollout_dir() const;
  std::string theory_dir() const;
};

/// Loads the cache under `out` and checks it was generated from `c`.
PreparedData load_checked_dataset(const RunConfig& c, const std::string& out);

/// Loads <dir>/best.ckpt into a fresh head after checking its hash.
LiquidHead<float> load_liquid(const RunConfig& c, const ModelConfig& mc, std::uint64_t seed, double fraction,
                              const std::string& dir);
DiffusionHead<float> load_diffusion(const RunConfig& c, const ModelConfig& mc, std::uint64_t seed, double fraction,
                                    const std::string& dir);

/// Evaluates whichever heads are given on the shared test latents.
struct EvalOutcome {
  std::vector<MetricsReport> reports;
  /// Per-window best-of-10 MSE, aligned with `reports`.
  std::vector<std::vector<double>> errors;
};
EvalOutcome evaluate_heads(const RunConfig& c, const PreparedData& d, const Backbone<float>& backbone,
                           const ModelConfig& mc, const LiquidHead<float>* liquid,
                           const DiffusionHead<float>* diffusion, std::uint64_t seed, double fraction,
                           bool with_latency);

/// Subcommands. Each returns the JSON summary printed by the CLI.
nlohmann::json cmd_gen(const RunConfig& c, const std::string& out, bool force);
nlohmann::json cmd_train(const RunConfig& c, HeadKind kind, const std::string& out, bool force);
nlohmann::json cmd_eval(const RunConfig& c, const std::string& out, std::optional<HeadKind> only = std::nullopt);
/// `threads` cells run concurrently; results do not depend on it.
nlohmann::json cmd_sweep(const RunConfig& c, const std::string& out, bool force, int threads = 1);
/// policy: expert | random | liquid | diffusion.
nlohmann::json cmd_rollout(const RunConfig& c, const std::string& policy, const std::string& out);
nlohmann::json cmd_theory(const RunConfig& c, const std::string& out);
nlohmann::json cmd_report(const RunConfig& c, const std::string& out);

/// Appends ",tag,config_hash" columns to every CSV line.
std::string stamp_csv(const std::string& csv, const std::string& tag, const std::string& hash);

}  // namespace lqb
