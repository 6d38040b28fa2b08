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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "liquidbench/data.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

using namespace lqb;

TEST_CASE("bimaze generation") {
  const auto a = gen_bimaze(40, 3);
  const auto b = gen_bimaze(40, 3);
  REQUIRE(a.size() == 40);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].observations == b[i].observations);
    CHECK(a[i].actions == b[i].actions);
    CHECK(a[i].mode == b[i].mode);
  }
  CHECK(gen_bimaze(3, 4)[0].observations.row(0) != a[0].observations.row(0));
  CHECK_THROWS_AS(gen_bimaze(0, 1), NumericError);

  const WorldConfig w;
  const auto many = gen_bimaze(1000, 11);
  int left = 0;
  for (const auto& t : many) {
    left += t.mode == 0;
    CHECK(t.length() >= 40);
    CHECK(t.length() <= 80);
    CHECK(t.observations.cols() == 6);
    CHECK(t.actions.cols() == 2);
    CHECK(t.actions.cwiseAbs().maxCoeff() <= 1.0);
    const Vec2 last = t.observations.row(t.length() - 1).head<2>().transpose();
    CHECK((last - w.goal).norm() < 0.20);
    for (Index r = 0; r < t.length(); ++r) {
      CHECK_FALSE(in_obstacle(w, t.observations.row(r).head<2>().transpose()));
    }
    // The branch taken matches the label.
    const double side = t.observations.col(0).segment(0, t.length() / 2).mean();
    CHECK((t.mode == 0 ? side < 0 : side > 0));
  }
  const double frac = left / 1000.0;
  CHECK(frac >= 0.45);
  CHECK(frac <= 0.55);
}

TEST_CASE("bimodal1d generation") {
  Bimodal1dConfig clean;
  clean.noise = 0.0;
  std::set<double> values;
  for (const auto& t : gen_bimodal1d(50, 2, clean)) {
    for (Index r = 0; r < t.length(); ++r) values.insert(t.actions(r, 0));
  }
  CHECK(values == std::set<double>{-0.5, 0.5});

  const auto trajs = gen_bimodal1d(2000, 5);
  double acc = 0, acc2 = 0;
  int n = 0;
  double dev[2] = {0, 0};
  int count[2] = {0, 0};
  for (const auto& t : trajs) {
    CHECK(t.observations.isZero(0.0));
    const double m = t.actions.col(0).mean();
    acc += m;
    acc2 += m * m;
    ++n;
    const double centre = t.mode == 0 ? -0.5 : 0.5;
    for (Index r = 0; r < t.length() && count[t.mode] < 10000; ++r) {
      dev[t.mode] += (t.actions(r, 0) - centre) * (t.actions(r, 0) - centre);
      ++count[t.mode];
    }
  }
  const double mean = acc / n;
  const double se = std::sqrt((acc2 / n - mean * mean) / n);
  CHECK(std::abs(mean) < 3 * se);
  for (int m = 0; m < 2; ++m) {
    REQUIRE(count[m] == 10000);
    CHECK(std::abs(std::sqrt(dev[m] / count[m]) - 0.05) < 0.005);
  }
}

TEST_CASE("windowing") {
  auto make = [](Index length) {
    Trajectory t;
    t.observations.resize(length, 1);
    t.actions.resize(length, 1);
    for (Index r = 0; r < length; ++r) {
      t.observations(r, 0) = static_cast<double>(r + 1);
      t.actions(r, 0) = static_cast<double>(r + 1);
    }
    return t;
  };
  CHECK(window(make(18)).size() == 1);
  CHECK(window(make(100)).size() == 83);
  CHECK(window(make(17)).empty());
  CHECK(window(make(0)).empty());
  for (Index l = 18; l <= 200; ++l) CHECK(static_cast<Index>(window(make(l)).size()) == l - 16 - 2 + 1);

  const auto w = window(make(30));
  // O ends at o_2, A starts at a_3.
  CHECK(w[0].obs(0, 0) == 1.0);
  CHECK(w[0].obs(1, 0) == 2.0);
  CHECK(w[0].actions(0, 0) == 3.0);
  CHECK(w[0].actions(15, 0) == 18.0);
  CHECK(w[0].t == 2);
  CHECK(w.back().actions(15, 0) == 30.0);

  const WindowSet ws = flatten(w, 1, 1);
  CHECK(ws.size() == 13);
  CHECK(ws.act.cols() == 16);
  CHECK(ws.act(1, 0) == 4.0);
}

TEST_CASE("min-max normalization") {
  Matrix<double> x(3, 2);
  x << 1.0, -2.0, 3.0, 0.0, 2.0, 4.0;
  const NormStats s = compute_norm_stats(x);
  const Matrix<double> n = normalize(x, s);
  CHECK(n(0, 0) == -1.0);
  CHECK(n(1, 0) == 1.0);
  CHECK(n(2, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(n(0, 1) == -1.0);
  CHECK(n(2, 1) == 1.0);
  CHECK((denormalize(n, s) - x).cwiseAbs().maxCoeff() < 1e-12);

  Rng rng(1);
  Matrix<double> big = uniform_matrix<double>(500, 4, rng, -3, 7);
  const NormStats bs = compute_norm_stats(big);
  const Matrix<float> nf = normalize_as<float>(big.cast<float>(), bs);
  const Matrix<double> back = denormalize(nf.cast<double>(), bs);
  const Matrix<double> ref = big.cast<float>().cast<double>();
  CHECK(((back - ref).array() / ref.array().abs().max(1.0)).abs().maxCoeff() < 1e-6);
  CHECK(normalize(big, bs).cwiseAbs().maxCoeff() <= 1.0 + 1e-12);

  // Values outside the fitted range are not clipped here.
  Matrix<double> out(1, 2);
  out << 5.0, 10.0;
  CHECK(normalize(out, s)(0, 0) > 1.0);
}

TEST_CASE("degenerate dimensions") {
  Matrix<double> x(4, 2);
  x << 1, 7, 2, 7, 3, 7, 4, 7;
  NormStats s = compute_norm_stats(x);
  CHECK_FALSE(s.degenerate[0]);
  CHECK(s.degenerate[1]);
  CHECK(normalize(x, s).col(1).isZero(0.0));
  CHECK(denormalize(normalize(x, s), s).col(1) == x.col(1));
  s.degenerate[1] = false;
  CHECK_THROWS_AS(normalize(x, s), DegenerateDimensionError);

  const NormStats z = compute_norm_stats(x, true);
  const Matrix<double> zn = normalize(x, z);
  CHECK(std::abs(zn.col(0).mean()) < 1e-12);
  CHECK(std::abs(zn.col(0).squaredNorm() / 4 - 1.0) < 1e-12);
  CHECK(zn.col(1).isZero(0.0));
}

TEST_CASE("trajectory-level split") {
  const auto s = split(100);
  CHECK(s.train.size() == 70);
  CHECK(s.val.size() == 15);
  CHECK(s.test.size() == 15);
  std::set<int> all;
  for (auto* v : {&s.train, &s.val, &s.test}) all.insert(v->begin(), v->end());
  CHECK(all.size() == 100);
  const auto again = split(100);
  CHECK(again.train == s.train);
  CHECK(split(100, 7).train != s.train);
  CHECK_THROWS_AS(split(2), NumericError);
  CHECK_THROWS_AS(split(100, 42, 0.5, 0.2, 0.2), NumericError);
}

TEST_CASE("fraction subsampling") {
  std::vector<int> ids(100);
  for (int i = 0; i < 100; ++i) ids[static_cast<std::size_t>(i)] = i * 3;
  CHECK(subsample_fraction(ids, 1.0, 1) == ids);
  CHECK(subsample_fraction(ids, 0.01, 1).size() == 1);
  CHECK(subsample_fraction(ids, 0.0215, 1).size() == 2);
  CHECK(subsample_fraction(ids, 0.0464, 1).size() == 5);
  std::vector<int> prev;
  for (double f : fraction_list()) {
    const auto cur = subsample_fraction(ids, f, 9);
    CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    prev = cur;
  }
  CHECK(subsample_fraction(std::vector<int>{5, 8}, 0.01, 1).size() == 1);
  CHECK_THROWS_AS(subsample_fraction(ids, 0.3, 1), NumericError);
  CHECK_THROWS_AS(subsample_fraction({}, 0.1, 1), NumericError);
}

TEST_CASE("prepare and cache round trip") {
  const auto trajs = gen_bimaze(30, 5);
  const PreparedData d = prepare(trajs);
  CHECK(d.obs_dim == 6);
  CHECK(d.action_dim == 2);
  CHECK(d.obs_stats.degenerate == std::vector<bool>{false, false, false, false, true, true});
  CHECK(d.train.obs.cols() == 12);
  CHECK(d.train.act.cols() == 32);
  CHECK(d.train.obs.cwiseAbs().maxCoeff() <= 1.0 + 1e-6);
  CHECK(d.train.act.cwiseAbs().maxCoeff() <= 1.0 + 1e-6);
  Index expected = 0;
  for (int id : d.splits.train) expected += window_count(trajs[static_cast<std::size_t>(id)].length());
  CHECK(d.train.size() == expected);
  for (int id : d.val.traj) CHECK(std::binary_search(d.splits.val.begin(), d.splits.val.end(), id));

  const auto sub = subsample_fraction(d.splits.train, 0.1, 42);
  const WindowSet ws = d.train_subset(sub);
  for (int id : ws.traj) CHECK(std::binary_search(sub.begin(), sub.end(), id));

  const std::string path = (std::filesystem::temp_directory_path() / "lqb_test_cache.bin").string();
  save_dataset(d, path);
  const PreparedData l = load_dataset(path);
  CHECK(l.task == "bimaze");
  CHECK(l.train.obs == d.train.obs);
  CHECK(l.train.act == d.train.act);
  CHECK(l.test.act == d.test.act);
  CHECK(l.val.traj == d.val.traj);
  CHECK(l.obs_stats.lo == d.obs_stats.lo);
  CHECK(l.act_stats.hi == d.act_stats.hi);
  CHECK(l.obs_stats.degenerate == d.obs_stats.degenerate);
  CHECK(l.modes == d.modes);
  std::filesystem::remove(path);
}
