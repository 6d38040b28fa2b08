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

#include "liquidbench/models.hpp"

namespace lqb {

ModelConfig resolve_models(ModelConfig cfg, Index obs_dim, Index action_dim, Index history, Index horizon) {
  cfg.backbone.obs_dim = obs_dim;
  cfg.backbone.history = history;
  cfg.backbone.d_model = cfg.d_model;
  cfg.liquid.d_model = cfg.d_model;
  cfg.liquid.action_dim = action_dim;
  cfg.liquid.horizon = horizon;
  cfg.liquid.hidden = cfg.liquid.resolved_hidden();
  cfg.diffusion.d_model = cfg.d_model;
  cfg.diffusion.action_dim = action_dim;
  cfg.diffusion.horizon = horizon;
  if (cfg.diffusion.width == 0) {
    const std::int64_t target = 2 * liquid_param_count(cfg.liquid) + backbone_param_count(cfg.backbone);
    cfg.diffusion.width = diffusion_width_for(cfg.diffusion, target);
  }
  return cfg;
}

ParamCounts param_counts(const ModelConfig& resolved) {
  ParamCounts c;
  c.backbone = backbone_param_count(resolved.backbone);
  c.liquid = liquid_param_count(resolved.liquid);
  c.diffusion = diffusion_param_count(resolved.diffusion);
  return c;
}

std::uint64_t backbone_seed(std::uint64_t run_seed) { return derive_seed(run_seed, {0xbb}); }
std::uint64_t liquid_seed(std::uint64_t run_seed) { return derive_seed(run_seed, {0x11}); }
std::uint64_t diffusion_seed(std::uint64_t run_seed) { return derive_seed(run_seed, {0xdd}); }

}  // namespace lqb
