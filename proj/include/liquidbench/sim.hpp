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
#include "liquidbench/world.hpp"

#include "json.hpp"

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace lqb {

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  /// Called with the start state; `seed` drives any policy randomness.
  virtual void reset(const EnvState& s, std::uint64_t seed) = 0;
  virtual Vec2 act(const EnvState& s) = 0;
};

/// Scripted expert; the branch is drawn per episode from the seed.
class ExpertRollout : public Policy {
 public:
  explicit ExpertRollout(const WorldConfig& w, const ExpertConfig& cfg = {}) : world_(w), cfg_(cfg) {}
  std::string name() const override { return "expert"; }
  void reset(const EnvState& s, std::uint64_t seed) override;
  Vec2 act(const EnvState& s) override;

 private:
  WorldConfig world_;
  ExpertConfig cfg_;
  std::unique_ptr<ExpertPolicy> expert_;
  Rng rng_;
};

/// Uniform actions in [-1, 1]^2.
class RandomPolicy : public Policy {
 public:
  std::string name() const override { return "random"; }
  void reset(const EnvState&, std::uint64_t seed) override { rng_.seed(seed); }
  Vec2 act(const EnvState&) override;

 private:
  Rng rng_;
};

/// Maps a normalized context latent to a flattened normalized action window.
using WindowDecoder = std::function<RowVector<float>(const RowVector<float>& ctx, std::uint64_t seed)>;

/// Receding-horizon wrapper around a trained head: observe, normalize,
/// encode, decode, denormalize, execute the first `exec_horizon` actions,
/// re-plan. The first context repeats the start observation.
class HeadPolicy : public Policy {
 public:
  HeadPolicy(std::string name, const Backbone<float>& backbone, WindowDecoder decode, const NormStats& obs_stats,
             const NormStats& act_stats, Index history, Index horizon, Index exec_horizon);
  std::string name() const override { return name_; }
  void reset(const EnvState& s, std::uint64_t seed) override;
  Vec2 act(const EnvState& s) override;
  int plans() const { return plans_; }

 private:
  std::string name_;
  const Backbone<float>* backbone_;
  WindowDecoder decode_;
  NormStats obs_stats_, act_stats_;
  Index history_, horizon_, exec_;
  std::deque<Matrix<double>> obs_;
  std::deque<Vec2> queue_;
  std::uint64_t seed_ = 0;
  int plans_ = 0;
};

enum class LiquidDecode { kArgmax, kSample };

std::unique_ptr<HeadPolicy> make_liquid_policy(const Backbone<float>& backbone, const LiquidHead<float>& head,
                                               const PreparedData& data, Index exec_horizon,
                                               LiquidDecode mode = LiquidDecode::kArgmax);
std::unique_ptr<HeadPolicy> make_diffusion_policy(const Backbone<float>& backbone, const DiffusionHead<float>& head,
                                                  const PreparedData& data, Index exec_horizon);

struct RolloutConfig {
  int episodes = 20;
  std::uint64_t seed = 42;
  Index exec_horizon = 8;
  bool record_actions = false;
  WorldConfig world;
};

struct RolloutResult {
  int episode = 0;
  std::uint64_t seed = 0;
  bool success = false;
  bool distance_success = false;
  double min_distance = 0.0;
  double reward = 0.0;
  int length = 0;
  bool failed = false;
  std::string error;
  std::vector<Vec2> actions;
};

struct RolloutAggregate {
  std::string policy;
  int episodes = 0;
  double success_pct = 0.0;
  double distance_success_pct = 0.0;
  double mean_reward = 0.0;
  double mean_min_distance = 0.0;
  int failed = 0;
  /// distance_success implies success on every episode.
  bool containment = true;
};

std::vector<RolloutResult> rollout(Policy& policy, const RolloutConfig& cfg);
RolloutAggregate aggregate(const std::string& policy, const std::vector<RolloutResult>& results);

nlohmann::json to_json(const RolloutResult& r);
nlohmann::json to_json(const RolloutAggregate& a);
std::string rollout_jsonl(const std::vector<RolloutResult>& results);

}  // namespace lqb
