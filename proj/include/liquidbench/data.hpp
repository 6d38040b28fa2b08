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
#include "liquidbench/world.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lqb {

/// One demonstration. observations(t) is the state after actions(t) was applied.
struct Trajectory {
  Matrix<double> observations;  // L x d_obs
  Matrix<double> actions;       // L x d_action
  int id = 0;
  std::string task;
  /// Branch taken by the expert: 0 left / negative, 1 right / positive.
  int mode = 0;
  Index length() const { return observations.rows(); }
};

struct BimazeConfig {
  WorldConfig world;
  ExpertConfig expert;
  int min_length = 40;
  int max_length = 80;
};

std::vector<Trajectory> gen_bimaze(int n_traj, std::uint64_t seed, const BimazeConfig& cfg = {});

struct Bimodal1dConfig {
  int length = 24;
  double mode_value = 0.5;
  double noise = 0.05;
};

/// Constant observation (d_obs 1); each trajectory holds a(t) = +-mode_value
/// plus iid N(0, noise^2) per step, modes equally likely.
std::vector<Trajectory> gen_bimodal1d(int n_traj, std::uint64_t seed, const Bimodal1dConfig& cfg = {});

struct WindowedSample {
  Matrix<double> obs;      // H_o x d_obs
  Matrix<double> actions;  // H_p x d_action
  int traj = 0;
  /// 1-based index of the last observation in the window.
  int t = 0;
};

/// O_t = (o_{t-H_o+1}..o_t), A_t = (a_{t+1}..a_{t+H_p}), one per valid t.
/// Returns an empty list when L < H_o + H_p.
std::vector<WindowedSample> window(const Trajectory& traj, Index history = 2, Index horizon = 16);

inline Index window_count(Index length, Index history = 2, Index horizon = 16) {
  return length < history + horizon ? 0 : length - horizon - history + 1;
}

/// Windows flattened row-wise: obs is N x (H_o*d_obs), act is N x (H_p*d_action),
/// each row laid out step by step.
struct WindowSet {
  Matrix<double> obs;
  Matrix<double> act;
  std::vector<int> traj;
  std::vector<int> t;
  Index size() const { return obs.rows(); }
  WindowSet select(const std::vector<Index>& rows) const;
};

WindowSet flatten(const std::vector<WindowedSample>& windows, Index obs_dim, Index action_dim);

class DegenerateDimensionError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Per-dimension scaling. Min-max maps [lo, hi] to [-1, 1]; z-score maps to
/// zero mean, unit variance. Dimensions flagged degenerate map to 0.
struct NormStats {
  bool zscore = false;
  RowVector<double> lo, hi;      // min-max bounds
  RowVector<double> mean, std;   // z-score moments
  std::vector<bool> degenerate;
  Index dims() const { return lo.size(); }
};

/// Statistics over the rows of x. Constant columns are flagged degenerate.
NormStats compute_norm_stats(const Matrix<double>& x, bool zscore = false);

/// Throws DegenerateDimensionError if a dimension has hi == lo (or zero std)
/// without being flagged degenerate.
Matrix<double> normalize(const Matrix<double>& x, const NormStats& s);
Matrix<double> denormalize(const Matrix<double>& x, const NormStats& s);

template <typename S>
Matrix<S> normalize_as(const Matrix<S>& x, const NormStats& s) {
  return normalize(x.template cast<double>(), s).template cast<S>();
}

struct SplitIndices {
  std::vector<int> train, val, test;
};

/// Trajectory-level split. Counts are round(0.70 n), round(0.15 n) and the rest.
SplitIndices split(int n_traj, std::uint64_t seed = 42, double train_ratio = 0.70, double val_ratio = 0.15,
                   double test_ratio = 0.15);

/// The fixed sample-efficiency fractions.
const std::vector<double>& fraction_list();

/// First max(1, round_half_up(f * n)) entries of a seeded permutation of the
/// given trajectory ids; nested across fractions under one seed.
std::vector<int> subsample_fraction(const std::vector<int>& train_ids, double f, std::uint64_t seed);

/// Normalized windows for the three splits plus everything needed to map back.
struct PreparedData {
  std::string task;
  std::uint64_t seed = 0;
  Index obs_dim = 0;
  Index action_dim = 0;
  Index history = 2;
  Index horizon = 16;
  NormStats obs_stats;
  NormStats act_stats;
  SplitIndices splits;
  WindowSet train, val, test;
  /// Mode label per trajectory id.
  std::vector<int> modes;
  /// Free-form provenance written into the cache manifest (config hash, tag).
  nlohmann::json stamp = nlohmann::json::object();

  /// Train windows restricted to the given trajectory ids.
  WindowSet train_subset(const std::vector<int>& traj_ids) const;
};

struct PrepareConfig {
  Index history = 2;
  Index horizon = 16;
  bool zscore = false;
  std::uint64_t split_seed = 42;
};

/// Splits by trajectory, fits stats on the train split only, normalizes and windows.
PreparedData prepare(const std::vector<Trajectory>& trajs, const PrepareConfig& cfg = {});

/// On-disk cache: one JSON manifest line, then little-endian float32 windows,
/// row-major [obs | act] for train, val and test in order.
void save_dataset(const PreparedData& d, const std::string& path);
PreparedData load_dataset(const std::string& path);

}  // namespace lqb
