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

#include "liquidbench/sim.hpp"

#include <cmath>

namespace lqb {

using nlohmann::json;

void ExpertRollout::reset(const EnvState&, std::uint64_t seed) {
  rng_.seed(seed);
  const int mode = uniform01(rng_) < 0.5 ? 0 : 1;
  const double speed = cfg_.speed_lo + (cfg_.speed_hi - cfg_.speed_lo) * uniform01(rng_);
  expert_ = std::make_unique<ExpertPolicy>(world_, cfg_, mode, speed);
}

Vec2 ExpertRollout::act(const EnvState& s) {
  if (!expert_) throw std::logic_error("ExpertRollout: act before reset");
  return expert_->act(s, rng_);
}

Vec2 RandomPolicy::act(const EnvState&) {
  return Vec2(2.0 * uniform01(rng_) - 1.0, 2.0 * uniform01(rng_) - 1.0);
}

HeadPolicy::HeadPolicy(std::string name, const Backbone<float>& backbone, WindowDecoder decode,
                       const NormStats& obs_stats, const NormStats& act_stats, Index history, Index horizon,
                       Index exec_horizon)
    : name_(std::move(name)),
      backbone_(&backbone),
      decode_(std::move(decode)),
      obs_stats_(obs_stats),
      act_stats_(act_stats),
      history_(history),
      horizon_(horizon),
      exec_(exec_horizon) {
  if (exec_ < 1 || exec_ > horizon_) {
    throw NumericError("HeadPolicy: execution horizon " + std::to_string(exec_) + " outside [1, " +
                       std::to_string(horizon_) + "]");
  }
}

void HeadPolicy::reset(const EnvState& s, std::uint64_t seed) {
  seed_ = seed;
  plans_ = 0;
  queue_.clear();
  obs_.clear();
  const Matrix<double> o = observe(s);
  for (Index i = 0; i < history_; ++i) obs_.push_back(o);
}

Vec2 HeadPolicy::act(const EnvState& s) {
  if (plans_ > 0 || !queue_.empty()) {
    obs_.push_back(observe(s));
    while (static_cast<Index>(obs_.size()) > history_) obs_.pop_front();
  }
  if (queue_.empty()) {
    Matrix<double> window(history_, obs_.front().cols());
    for (Index i = 0; i < history_; ++i) window.row(i) = obs_[static_cast<std::size_t>(i)];
    const Matrix<float> norm = normalize(window, obs_stats_).cast<float>();
    const ContextLatent<float> ctx = backbone_->encode_window(norm, static_cast<std::uint64_t>(plans_));
    const RowVector<float> flat = decode_(ctx.value, derive_seed(seed_, {static_cast<std::uint64_t>(plans_)}));
    ++plans_;
    const Index d = act_stats_.lo.size();
    Matrix<double> acts(horizon_, d);
    for (Index k = 0; k < horizon_; ++k) {
      for (Index j = 0; j < d; ++j) acts(k, j) = static_cast<double>(flat(k * d + j));
    }
    const Matrix<double> raw = denormalize(acts, act_stats_);
    for (Index k = 0; k < exec_; ++k) queue_.emplace_back(raw(k, 0), raw(k, 1));
  }
  const Vec2 a = queue_.front();
  queue_.pop_front();
  return a;
}

std::unique_ptr<HeadPolicy> make_liquid_policy(const Backbone<float>& backbone, const LiquidHead<float>& head,
                                               const PreparedData& data, Index exec_horizon, LiquidDecode mode) {
  WindowDecoder dec = [&head, mode](const RowVector<float>& ctx, std::uint64_t seed) -> RowVector<float> {
    if (mode == LiquidDecode::kArgmax) return head.decode_deterministic(Matrix<float>(ctx)).row(0);
    std::vector<Rng> rngs{Rng(seed)};
    return head.sample_batch(Matrix<float>(ctx), rngs).row(0);
  };
  return std::make_unique<HeadPolicy>("liquid", backbone, dec, data.obs_stats, data.act_stats, data.history,
                                      data.horizon, exec_horizon);
}

std::unique_ptr<HeadPolicy> make_diffusion_policy(const Backbone<float>& backbone, const DiffusionHead<float>& head,
                                                  const PreparedData& data, Index exec_horizon) {
  WindowDecoder dec = [&head](const RowVector<float>& ctx, std::uint64_t seed) -> RowVector<float> {
    std::vector<Rng> rngs{Rng(seed)};
    return head.sample(Matrix<float>(ctx), rngs).row(0);
  };
  return std::make_unique<HeadPolicy>("diffusion", backbone, dec, data.obs_stats, data.act_stats, data.history,
                                      data.horizon, exec_horizon);
}

std::vector<RolloutResult> rollout(Policy& policy, const RolloutConfig& cfg) {
  if (cfg.episodes < 1) throw NumericError("rollout: episodes must be >= 1");
  const WorldConfig& w = cfg.world;
  std::vector<RolloutResult> out;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    RolloutResult r;
    r.episode = ep;
    r.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(ep)});
    EnvState s = env_reset(w, r.seed);
    r.min_distance = goal_distance(s);
    bool inside = r.min_distance <= w.success_radius;
    try {
      policy.reset(s, derive_seed(r.seed, {1}));
      while (!s.done) {
        Vec2 a = policy.act(s);
        if (!a.allFinite()) throw NumericError("policy produced a non-finite action at step " + std::to_string(s.steps));
        a = a.cwiseMax(-1.0).cwiseMin(1.0);
        if (cfg.record_actions) r.actions.push_back(a);
        const StepResult st = env_step(w, s, a);
        s = st.state;
        r.reward += st.reward;
        const double dist = goal_distance(s);
        r.min_distance = std::min(r.min_distance, dist);
        inside = inside || dist <= w.success_radius;
      }
    } catch (const NumericError& e) {
      r.failed = true;
      r.error = e.what();
    }
    r.length = s.steps;
    r.success = !r.failed && inside;
    r.distance_success = !r.failed && r.min_distance <= w.distance_success;
    out.push_back(std::move(r));
  }
  return out;
}

RolloutAggregate aggregate(const std::string& policy, const std::vector<RolloutResult>& results) {
  if (results.empty()) throw NumericError("aggregate: no episodes");
  RolloutAggregate a;
  a.policy = policy;
  a.episodes = static_cast<int>(results.size());
  for (const auto& r : results) {
    a.success_pct += r.success ? 1.0 : 0.0;
    a.distance_success_pct += r.distance_success ? 1.0 : 0.0;
    a.mean_reward += r.reward;
    a.mean_min_distance += r.min_distance;
    a.failed += r.failed ? 1 : 0;
    if (r.distance_success && !r.success) a.containment = false;
  }
  const double n = static_cast<double>(results.size());
  a.success_pct *= 100.0 / n;
  a.distance_success_pct *= 100.0 / n;
  a.mean_reward /= n;
  a.mean_min_distance /= n;
  return a;
}

json to_json(const RolloutResult& r) {
  json j = {{"episode", r.episode},         {"seed", r.seed},     {"success", r.success},
            {"distance_success", r.distance_success}, {"min_distance", r.min_distance}, {"reward", r.reward},
            {"length", r.length},           {"failed", r.failed}};
  if (!r.error.empty()) j["error"] = r.error;
  if (!r.actions.empty()) {
    json acts = json::array();
    for (const auto& a : r.actions) acts.push_back({a.x(), a.y()});
    j["actions"] = acts;
  }
  return j;
}

json to_json(const RolloutAggregate& a) {
  return {{"policy", a.policy},
          {"episodes", a.episodes},
          {"success_pct", a.success_pct},
          {"distance_success_pct", a.distance_success_pct},
          {"mean_reward", a.mean_reward},
          {"mean_min_distance", a.mean_min_distance},
          {"failed", a.failed},
          {"containment", a.containment},
          {"reward_units", "steps inside the success radius (synthetic maze)"}};
}

std::string rollout_jsonl(const std::vector<RolloutResult>& results) {
  std::string out;
  for (const auto& r : results) out += to_json(r).dump() + "\n";
  return out;
}

}  // namespace lqb
