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

#include "liquidbench/world.hpp"

#include <algorithm>
#include <cmath>

namespace lqb {

bool in_obstacle(const WorldConfig& w, const Vec2& p) {
  return p.x() > w.obstacle_lo.x() && p.x() < w.obstacle_hi.x() && p.y() > w.obstacle_lo.y() &&
         p.y() < w.obstacle_hi.y();
}

double goal_distance(const EnvState& s) { return (s.position - s.goal).norm(); }

EnvState env_reset(const WorldConfig& w, Rng& rng) {
  EnvState s;
  s.position.x() = -w.start_half_width + 2.0 * w.start_half_width * uniform01(rng);
  s.position.y() = w.start_y - w.start_y_jitter + 2.0 * w.start_y_jitter * uniform01(rng);
  s.goal = w.goal;
  return s;
}

EnvState env_reset(const WorldConfig& w, std::uint64_t seed) {
  Rng rng(seed);
  return env_reset(w, rng);
}

namespace {

// Moves coordinate `axis` from p by delta, stopping at the arena edge or at
// the obstacle face when the other coordinate lies strictly inside the
// obstacle's extent on that axis.
double move_axis(const WorldConfig& w, const Vec2& p, int axis, double delta) {
  const int other = 1 - axis;
  double target = std::clamp(p[axis] + delta, -w.arena_half, w.arena_half);
  const bool overlaps = p[other] > w.obstacle_lo[other] && p[other] < w.obstacle_hi[other];
  if (overlaps) {
    const double lo = w.obstacle_lo[axis];
    const double hi = w.obstacle_hi[axis];
    if (p[axis] <= lo && target > lo) target = lo;
    if (p[axis] >= hi && target < hi) target = hi;
  }
  return target;
}

}  // namespace

StepResult env_step(const WorldConfig& w, const EnvState& s, const Vec2& action) {
  if (!action.allFinite()) throw NumericError("env_step: non-finite action");
  const Vec2 a = action.cwiseMax(-1.0).cwiseMin(1.0);
  const Vec2 delta = a * w.v_max * w.dt;
  StepResult r;
  r.state = s;
  Vec2 p = s.position;
  p.x() = move_axis(w, p, 0, delta.x());
  p.y() = move_axis(w, p, 1, delta.y());
  r.state.velocity = (p - s.position) / w.dt;
  r.state.position = p;
  r.state.steps = s.steps + 1;
  const bool success = goal_distance(r.state) <= w.success_radius;
  r.reward = success ? 1.0 : 0.0;
  r.done = r.state.steps >= w.max_steps || (w.terminate_on_success && success);
  r.state.done = r.done;
  return r;
}

Eigen::Matrix<double, 1, 6> observe(const EnvState& s) {
  Eigen::Matrix<double, 1, 6> o;
  o << s.position.x(), s.position.y(), s.velocity.x(), s.velocity.y(), s.goal.x(), s.goal.y();
  return o;
}

ExpertPolicy::ExpertPolicy(const WorldConfig& w, const ExpertConfig& cfg, int mode, double speed)
    : world_(w), cfg_(cfg), mode_(mode), speed_(speed) {}

Vec2 ExpertPolicy::act(const EnvState& s, Rng& rng) {
  const double side = mode_ == 0 ? -1.0 : 1.0;
  const Vec2 waypoints[2] = {{side * cfg_.waypoint_x, -cfg_.waypoint_y}, {side * cfg_.waypoint_x, cfg_.waypoint_y}};
  while (waypoint_ < 2 && (s.position - waypoints[waypoint_]).norm() < cfg_.switch_radius) ++waypoint_;
  Vec2 cmd;
  if (waypoint_ < 2) {
    const Vec2 dir = (waypoints[waypoint_] - s.position).normalized();
    cmd = speed_ * dir;
  } else {
    // Arrive at the goal: command the exact remaining displacement, capped at speed.
    const Vec2 to_goal = s.goal - s.position;
    cmd = to_goal / (world_.v_max * world_.dt);
    if (cmd.norm() > speed_) cmd *= speed_ / cmd.norm();
  }
  cmd.x() += cfg_.action_noise * standard_normal(rng);
  cmd.y() += cfg_.action_noise * standard_normal(rng);
  return cmd.cwiseMax(-1.0).cwiseMin(1.0);
}

}  // namespace lqb
