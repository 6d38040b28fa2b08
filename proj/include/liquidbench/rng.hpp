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

#include "liquidbench/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace lqb {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic sub-seed for (base, key...). Adding keys never changes the
/// seeds of earlier-indexed siblings, so sample streams are prefix-stable.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(base);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

template <typename S>
Matrix<S> normal_matrix(Index rows, Index cols, Rng& rng, double stddev = 1.0) {
  Matrix<S> m(rows, cols);
  std::normal_distribution<double> dist(0.0, stddev);
  // Row-major fill so a row's draws do not depend on the row count.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(dist(rng));
  return m;
}

template <typename S>
Matrix<S> uniform_matrix(Index rows, Index cols, Rng& rng, double lo, double hi) {
  Matrix<S> m(rows, cols);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(dist(rng));
  return m;
}

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for dense layers.
template <typename S>
Matrix<S> kaiming_uniform(Index rows, Index cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  return uniform_matrix<S>(rows, cols, rng, -bound, bound);
}

}  // namespace lqb
