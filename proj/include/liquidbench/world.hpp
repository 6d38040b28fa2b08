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

#include "liquidbench/rng.hpp"

#include <Eigen/Core>

#include <cstdint>

namespace lqb {

using Vec2 = Eigen::Vector2d;

/// Geometry and kinematics of the 2-D point-mass maze. The obstacle interior
/// is the open box (obstacle_lo, obstacle_hi); its boundary is free space.
struct WorldConfig {
  double arena_half = 1.2;
  Vec2 obstacle_lo{-0.4, -0.2};
  Vec2 obstacle_hi{0.4, 0.2};
  Vec2 goal{0.0, 1.0};
  double start_half_width = 0.25;
  double start_y = -1.0;
  double start_y_jitter = 0.05;
  double dt = 0.1;
  double v_max = 1.0;
  double success_radius = 0.45;
  double distance_success = 0.2;
  int max_steps = 300;
  /// Ending the episode on entering the success radius would stop it at
  /// distance >= 0.35 and make the 0.2 criterion unreachable; off by default.
  bool terminate_on_success = false;
};

struct EnvState {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Vec2 goal = Vec2::Zero();
  int steps = 0;
  bool done = false;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool done = false;
};

bool in_obstacle(const WorldConfig& w, const Vec2& p);
double goal_distance(const EnvState& s);

/// Start state: x uniform in +-start_half_width, y near start_y, zero velocity.
EnvState env_reset(const WorldConfig& w, std::uint64_t seed);
EnvState env_reset(const WorldConfig& w, Rng& rng);

/// Clips the action to [-1, 1], scales by v_max and moves one dt with
/// axis-by-axis collision against walls and obstacle (blocked axes stop at
/// the face). Velocity is the displacement actually achieved over dt.
/// Throws NumericError on a non-finite action.
StepResult env_step(const WorldConfig& w, const EnvState& s, const Vec2& action);

/// Observation vector: position, velocity, goal.
Eigen::Matrix<double, 1, 6> observe(const EnvState& s);

/// Scripted expert going left (mode 0) or right (mode 1) of the obstacle.
struct ExpertConfig {
  double speed_lo = 0.85;
  double speed_hi = 1.0;
  double waypoint_x = 0.65;
  double waypoint_y = 0.35;
  double switch_radius = 0.15;
  double action_noise = 0.02;
};

class ExpertPolicy {
 public:
  ExpertPolicy(const WorldConfig& w, const ExpertConfig& cfg, int mode, double speed);
  Vec2 act(const EnvState& s, Rng& rng);
  int mode() const { return mode_; }

 private:
  WorldConfig world_;
  ExpertConfig cfg_;
  int mode_;
  double speed_;
  int waypoint_ = 0;
};

}  // namespace lqb
