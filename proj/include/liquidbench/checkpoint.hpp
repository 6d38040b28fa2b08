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

#include "liquidbench/optim.hpp"

#include "json.hpp"

#include <map>
#include <string>

namespace lqb {

/// One file: a JSON manifest line followed by a little-endian float32 blob.
/// Manifest entries give name, shape, offset and length (in floats). Optimizer
/// moments are stored as entries "adam.m/<param>" and "adam.v/<param>".
struct Checkpoint {
  nlohmann::json meta;  // model, config_hash, epoch, adam_step, records, ...
  std::map<std::string, Matrix<float>> tensors;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Adds parameter values (and optimizer moments when given) to `c`.
void put_params(Checkpoint& c, const ParamSet<float>& params, const OptimizerState<float>* opt = nullptr);
/// Copies stored values into `params` (and `opt`), checking names and shapes.
void get_params(const Checkpoint& c, ParamSet<float>& params, OptimizerState<float>* opt = nullptr);

}  // namespace lqb
