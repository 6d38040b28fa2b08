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
#include "liquidbench/diffusion_head.hpp"
#include "liquidbench/liquid_head.hpp"

#include <cstdint>

namespace lqb {

/// Architecture of the shared backbone and both heads.
struct ModelConfig {
  Index d_model = 64;
  BackboneConfig backbone;
  LiquidConfig liquid;
  DiffusionConfig diffusion;
};

/// Copies data dimensions and d_model into every part. A zero diffusion width
/// is solved so that (liquid + backbone) is half of (diffusion + backbone).
ModelConfig resolve_models(ModelConfig cfg, Index obs_dim, Index action_dim, Index history, Index horizon);

struct ParamCounts {
  std::int64_t backbone = 0;
  std::int64_t liquid = 0;
  std::int64_t diffusion = 0;
  double ratio() const {
    return static_cast<double>(liquid + backbone) / static_cast<double>(diffusion + backbone);
  }
};

ParamCounts param_counts(const ModelConfig& resolved);

/// Seeds for the shared backbone and each head, all derived from the run seed.
std::uint64_t backbone_seed(std::uint64_t run_seed);
std::uint64_t liquid_seed(std::uint64_t run_seed);
std::uint64_t diffusion_seed(std::uint64_t run_seed);

template <typename S>
Backbone<S> make_backbone(const ModelConfig& resolved, std::uint64_t run_seed) {
  Rng rng(backbone_seed(run_seed));
  return Backbone<S>(resolved.backbone, rng);
}

template <typename S>
LiquidHead<S> make_liquid(const ModelConfig& resolved, std::uint64_t run_seed) {
  Rng rng(liquid_seed(run_seed));
  return LiquidHead<S>(resolved.liquid, rng);
}

template <typename S>
DiffusionHead<S> make_diffusion(const ModelConfig& resolved, std::uint64_t run_seed) {
  Rng rng(diffusion_seed(run_seed));
  return DiffusionHead<S>(resolved.diffusion, rng);
}

}  // namespace lqb
