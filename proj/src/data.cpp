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

#include "liquidbench/data.hpp"

#include "liquidbench/io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace lqb {

std::vector<Trajectory> gen_bimaze(int n_traj, std::uint64_t seed, const BimazeConfig& cfg) {
  if (n_traj < 1) throw NumericError("gen_bimaze: n_traj must be at least 1");
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n_traj));
  for (int i = 0; i < n_traj; ++i) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    Trajectory tr;
    tr.id = i;
    tr.task = "bimaze";
    tr.mode = uniform01(rng) < 0.5 ? 0 : 1;
    const double speed = cfg.expert.speed_lo + (cfg.expert.speed_hi - cfg.expert.speed_lo) * uniform01(rng);
    const int length = std::uniform_int_distribution<int>(cfg.min_length, cfg.max_length)(rng);
    ExpertPolicy expert(cfg.world, cfg.expert, tr.mode, speed);
    EnvState s = env_reset(cfg.world, rng);
    tr.observations.resize(length, 6);
    tr.actions.resize(length, 2);
    for (int t = 0; t < length; ++t) {
      const Vec2 a = expert.act(s, rng);
      s = env_step(cfg.world, s, a).state;
      tr.actions.row(t) = a.transpose();
      tr.observations.row(t) = observe(s);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<Trajectory> gen_bimodal1d(int n_traj, std::uint64_t seed, const Bimodal1dConfig& cfg) {
  if (n_traj < 1) throw NumericError("gen_bimodal1d: n_traj must be at least 1");
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n_traj));
  for (int i = 0; i < n_traj; ++i) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    Trajectory tr;
    tr.id = i;
    tr.task = "bimodal1d";
    tr.mode = uniform01(rng) < 0.5 ? 0 : 1;
    const double centre = tr.mode == 0 ? -cfg.mode_value : cfg.mode_value;
    tr.observations = Matrix<double>::Zero(cfg.length, 1);
    tr.actions.resize(cfg.length, 1);
    for (int t = 0; t < cfg.length; ++t) tr.actions(t, 0) = centre + cfg.noise * standard_normal(rng);
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<WindowedSample> window(const Trajectory& traj, Index history, Index horizon) {
  std::vector<WindowedSample> out;
  const Index n = window_count(traj.length(), history, horizon);
  out.reserve(static_cast<std::size_t>(n));
  // 0-based row r holds o_{r+1}; the window ending at o_t uses rows t-H_o..t-1
  // and actions a_{t+1}..a_{t+H_p}, rows t..t+H_p-1.
  for (Index t = history; t < history + n; ++t) {
    WindowedSample w;
    w.obs = traj.observations.middleRows(t - history, history);
    w.actions = traj.actions.middleRows(t, horizon);
    w.traj = traj.id;
    w.t = static_cast<int>(t);
    out.push_back(std::move(w));
  }
  return out;
}

WindowSet flatten(const std::vector<WindowedSample>& windows, Index obs_dim, Index action_dim) {
  WindowSet ws;
  if (windows.empty()) {
    ws.obs.resize(0, 0);
    ws.act.resize(0, 0);
    return ws;
  }
  const Index h_o = windows[0].obs.rows();
  const Index h_p = windows[0].actions.rows();
  const Index n = static_cast<Index>(windows.size());
  ws.obs.resize(n, h_o * obs_dim);
  ws.act.resize(n, h_p * action_dim);
  for (Index i = 0; i < n; ++i) {
    const auto& w = windows[static_cast<std::size_t>(i)];
    for (Index k = 0; k < h_o; ++k) ws.obs.block(i, k * obs_dim, 1, obs_dim) = w.obs.row(k);
    for (Index k = 0; k < h_p; ++k) ws.act.block(i, k * action_dim, 1, action_dim) = w.actions.row(k);
    ws.traj.push_back(w.traj);
    ws.t.push_back(w.t);
  }
  return ws;
}

WindowSet WindowSet::select(const std::vector<Index>& rows) const {
  WindowSet out;
  out.obs.resize(static_cast<Index>(rows.size()), obs.cols());
  out.act.resize(static_cast<Index>(rows.size()), act.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.obs.row(static_cast<Index>(i)) = obs.row(rows[i]);
    out.act.row(static_cast<Index>(i)) = act.row(rows[i]);
    out.traj.push_back(traj[static_cast<std::size_t>(rows[i])]);
    out.t.push_back(t[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

NormStats compute_norm_stats(const Matrix<double>& x, bool zscore) {
  if (x.rows() == 0) throw NumericError("compute_norm_stats: no rows");
  NormStats s;
  s.zscore = zscore;
  s.lo = x.colwise().minCoeff();
  s.hi = x.colwise().maxCoeff();
  s.mean = x.colwise().mean();
  s.std = ((x.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt().matrix();
  s.degenerate.resize(static_cast<std::size_t>(x.cols()));
  for (Index j = 0; j < x.cols(); ++j) {
    s.degenerate[static_cast<std::size_t>(j)] = zscore ? !(s.std(j) > 0.0) : !(s.hi(j) > s.lo(j));
  }
  return s;
}

namespace {

void check_stats(const Matrix<double>& x, const NormStats& s) {
  if (x.cols() != s.dims()) {
    throw NumericError("normalize: " + std::to_string(x.cols()) + " columns vs " + std::to_string(s.dims()) +
                       " stats dims");
  }
  for (Index j = 0; j < s.dims(); ++j) {
    const bool flat = s.zscore ? !(s.std(j) > 0.0) : !(s.hi(j) > s.lo(j));
    if (flat && !s.degenerate[static_cast<std::size_t>(j)]) {
      throw DegenerateDimensionError("normalize: dimension " + std::to_string(j) + " has zero range");
    }
  }
}

}  // namespace

Matrix<double> normalize(const Matrix<double>& x, const NormStats& s) {
  check_stats(x, s);
  Matrix<double> out(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    if (s.degenerate[static_cast<std::size_t>(j)]) {
      out.col(j).setZero();
    } else if (s.zscore) {
      out.col(j) = (x.col(j).array() - s.mean(j)) / s.std(j);
    } else {
      out.col(j) = 2.0 * (x.col(j).array() - s.lo(j)) / (s.hi(j) - s.lo(j)) - 1.0;
    }
  }
  return out;
}

Matrix<double> denormalize(const Matrix<double>& x, const NormStats& s) {
  check_stats(x, s);
  Matrix<double> out(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    if (s.degenerate[static_cast<std::size_t>(j)]) {
      out.col(j).setConstant(s.zscore ? s.mean(j) : s.lo(j));
    } else if (s.zscore) {
      out.col(j) = x.col(j).array() * s.std(j) + s.mean(j);
    } else {
      out.col(j) = (x.col(j).array() + 1.0) * 0.5 * (s.hi(j) - s.lo(j)) + s.lo(j);
    }
  }
  return out;
}

SplitIndices split(int n_traj, std::uint64_t seed, double train_ratio, double val_ratio, double test_ratio) {
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) throw NumericError("split: ratios must sum to 1");
  const int n_train = static_cast<int>(std::lround(train_ratio * n_traj));
  const int n_val = static_cast<int>(std::lround(val_ratio * n_traj));
  const int n_test = n_traj - n_train - n_val;
  if (n_train < 1 || n_val < 1 || n_test < 1) {
    throw NumericError("split: " + std::to_string(n_traj) + " trajectories cannot fill three non-empty splits");
  }
  std::vector<int> perm(static_cast<std::size_t>(n_traj));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, {0x5911}));
  std::shuffle(perm.begin(), perm.end(), rng);
  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  s.test.assign(perm.begin() + n_train + n_val, perm.end());
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

const std::vector<double>& fraction_list() {
  static const std::vector<double> f{0.01, 0.0215, 0.0464, 0.10, 0.2154, 0.4642, 1.0};
  return f;
}

std::vector<int> subsample_fraction(const std::vector<int>& train_ids, double f, std::uint64_t seed) {
  const auto& allowed = fraction_list();
  if (std::none_of(allowed.begin(), allowed.end(), [&](double a) { return std::abs(a - f) < 1e-9; })) {
    throw NumericError("subsample_fraction: " + std::to_string(f) + " is not one of the fixed fractions");
  }
  if (train_ids.empty()) throw NumericError("subsample_fraction: empty training set yields zero trajectories");
  const std::size_t n = train_ids.size();
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 0.5)));
  std::vector<int> sorted = train_ids;
  std::sort(sorted.begin(), sorted.end());
  Rng rng(derive_seed(seed, {0xf5ac}));
  std::shuffle(sorted.begin(), sorted.end(), rng);
  std::vector<int> out(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(std::min(k, n)));
  std::sort(out.begin(), out.end());
  return out;
}

WindowSet PreparedData::train_subset(const std::vector<int>& traj_ids) const {
  std::vector<Index> rows;
  for (Index i = 0; i < train.size(); ++i) {
    if (std::binary_search(traj_ids.begin(), traj_ids.end(), train.traj[static_cast<std::size_t>(i)])) {
      rows.push_back(i);
    }
  }
  return train.select(rows);
}

namespace {

WindowSet windows_for(const std::vector<Trajectory>& trajs, const std::vector<int>& ids, const NormStats& os,
                      const NormStats& as, const PrepareConfig& cfg) {
  std::vector<WindowedSample> all;
  for (int id : ids) {
    Trajectory t = trajs[static_cast<std::size_t>(id)];
    t.observations = normalize(t.observations, os);
    t.actions = normalize(t.actions, as);
    for (auto& w : window(t, cfg.history, cfg.horizon)) all.push_back(std::move(w));
  }
  const Index od = trajs.front().observations.cols();
  const Index ad = trajs.front().actions.cols();
  WindowSet ws = flatten(all, od, ad);
  if (all.empty()) {
    ws.obs.resize(0, cfg.history * od);
    ws.act.resize(0, cfg.horizon * ad);
  }
  // Round to the cache precision so a loaded cache equals the in-memory data.
  ws.obs = ws.obs.cast<float>().cast<double>();
  ws.act = ws.act.cast<float>().cast<double>();
  return ws;
}

}  // namespace

PreparedData prepare(const std::vector<Trajectory>& trajs, const PrepareConfig& cfg) {
  if (trajs.empty()) throw NumericError("prepare: no trajectories");
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (trajs[i].id != static_cast<int>(i)) throw NumericError("prepare: trajectory ids must be 0..n-1 in order");
  }
  PreparedData d;
  d.task = trajs.front().task;
  d.seed = cfg.split_seed;
  d.obs_dim = trajs.front().observations.cols();
  d.action_dim = trajs.front().actions.cols();
  d.history = cfg.history;
  d.horizon = cfg.horizon;
  d.splits = split(static_cast<int>(trajs.size()), cfg.split_seed);
  for (const auto& t : trajs) d.modes.push_back(t.mode);

  Index rows = 0;
  for (int id : d.splits.train) rows += trajs[static_cast<std::size_t>(id)].length();
  Matrix<double> obs(rows, d.obs_dim), act(rows, d.action_dim);
  Index r = 0;
  for (int id : d.splits.train) {
    const auto& t = trajs[static_cast<std::size_t>(id)];
    obs.middleRows(r, t.length()) = t.observations;
    act.middleRows(r, t.length()) = t.actions;
    r += t.length();
  }
  d.obs_stats = compute_norm_stats(obs, cfg.zscore);
  d.act_stats = compute_norm_stats(act, cfg.zscore);
  d.train = windows_for(trajs, d.splits.train, d.obs_stats, d.act_stats, cfg);
  d.val = windows_for(trajs, d.splits.val, d.obs_stats, d.act_stats, cfg);
  d.test = windows_for(trajs, d.splits.test, d.obs_stats, d.act_stats, cfg);
  return d;
}

namespace {

using nlohmann::json;

json stats_json(const NormStats& s) {
  auto vec = [](const RowVector<double>& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return json{{"zscore", s.zscore},
              {"lo", vec(s.lo)},
              {"hi", vec(s.hi)},
              {"mean", vec(s.mean)},
              {"std", vec(s.std)},
              {"degenerate", s.degenerate}};
}

NormStats stats_from(const json& j) {
  auto vec = [](const json& a) {
    const auto v = a.get<std::vector<double>>();
    RowVector<double> r(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) r(static_cast<Index>(i)) = v[i];
    return r;
  };
  NormStats s;
  s.zscore = j.at("zscore").get<bool>();
  s.lo = vec(j.at("lo"));
  s.hi = vec(j.at("hi"));
  s.mean = vec(j.at("mean"));
  s.std = vec(j.at("std"));
  s.degenerate = j.at("degenerate").get<std::vector<bool>>();
  return s;
}

void append_windows(std::string& blob, const WindowSet& w) {
  std::vector<float> row(static_cast<std::size_t>(w.obs.cols() + w.act.cols()));
  for (Index i = 0; i < w.size(); ++i) {
    for (Index j = 0; j < w.obs.cols(); ++j) row[static_cast<std::size_t>(j)] = static_cast<float>(w.obs(i, j));
    for (Index j = 0; j < w.act.cols(); ++j) {
      row[static_cast<std::size_t>(w.obs.cols() + j)] = static_cast<float>(w.act(i, j));
    }
    append_floats(blob, row.data(), row.size());
  }
}

WindowSet read_windows(const char*& p, const char* end, Index n, Index ow, Index aw, const json& traj,
                       const json& t) {
  WindowSet w;
  w.obs.resize(n, ow);
  w.act.resize(n, aw);
  const std::size_t bytes = static_cast<std::size_t>(n * (ow + aw)) * sizeof(float);
  if (static_cast<std::size_t>(end - p) < bytes) throw IoError("dataset cache: truncated window blob");
  std::vector<float> buf(static_cast<std::size_t>(ow + aw));
  for (Index i = 0; i < n; ++i) {
    std::memcpy(buf.data(), p, buf.size() * sizeof(float));
    p += buf.size() * sizeof(float);
    for (Index j = 0; j < ow; ++j) w.obs(i, j) = buf[static_cast<std::size_t>(j)];
    for (Index j = 0; j < aw; ++j) w.act(i, j) = buf[static_cast<std::size_t>(ow + j)];
  }
  w.traj = traj.get<std::vector<int>>();
  w.t = t.get<std::vector<int>>();
  if (static_cast<Index>(w.traj.size()) != n || static_cast<Index>(w.t.size()) != n) {
    throw IoError("dataset cache: window index arrays do not match counts");
  }
  return w;
}

}  // namespace

void save_dataset(const PreparedData& d, const std::string& path) {
  json m;
  m["format"] = "liquidbench-dataset-v1";
  m["task"] = d.task;
  m["seed"] = d.seed;
  m["obs_dim"] = d.obs_dim;
  m["action_dim"] = d.action_dim;
  m["history"] = d.history;
  m["horizon"] = d.horizon;
  m["obs_stats"] = stats_json(d.obs_stats);
  m["act_stats"] = stats_json(d.act_stats);
  m["splits"] = {{"train", d.splits.train}, {"val", d.splits.val}, {"test", d.splits.test}};
  m["modes"] = d.modes;
  m["stamp"] = d.stamp;
  m["counts"] = {{"train", d.train.size()}, {"val", d.val.size()}, {"test", d.test.size()}};
  for (const auto& [name, w] : {std::pair{"train", &d.train}, std::pair{"val", &d.val}, std::pair{"test", &d.test}}) {
    m["windows"][name] = {{"traj", w->traj}, {"t", w->t}};
  }
  std::string bytes = m.dump() + "\n";
  append_windows(bytes, d.train);
  append_windows(bytes, d.val);
  append_windows(bytes, d.test);
  write_file_atomic(path, bytes);
}

PreparedData load_dataset(const std::string& path) {
  const std::string bytes = read_file(path);
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw IoError("dataset cache " + path + ": missing manifest line");
  const json m = json::parse(bytes.substr(0, nl));
  if (m.value("format", "") != "liquidbench-dataset-v1") throw IoError("dataset cache " + path + ": unknown format");
  PreparedData d;
  d.task = m.at("task").get<std::string>();
  d.seed = m.at("seed").get<std::uint64_t>();
  d.obs_dim = m.at("obs_dim").get<Index>();
  d.action_dim = m.at("action_dim").get<Index>();
  d.history = m.at("history").get<Index>();
  d.horizon = m.at("horizon").get<Index>();
  d.obs_stats = stats_from(m.at("obs_stats"));
  d.act_stats = stats_from(m.at("act_stats"));
  d.splits.train = m.at("splits").at("train").get<std::vector<int>>();
  d.splits.val = m.at("splits").at("val").get<std::vector<int>>();
  d.splits.test = m.at("splits").at("test").get<std::vector<int>>();
  d.modes = m.at("modes").get<std::vector<int>>();
  d.stamp = m.value("stamp", json::object());
  const Index ow = d.history * d.obs_dim;
  const Index aw = d.horizon * d.action_dim;
  const char* p = bytes.data() + nl + 1;
  const char* end = bytes.data() + bytes.size();
  const auto& win = m.at("windows");
  d.train = read_windows(p, end, m.at("counts").at("train").get<Index>(), ow, aw, win.at("train").at("traj"),
                         win.at("train").at("t"));
  d.val = read_windows(p, end, m.at("counts").at("val").get<Index>(), ow, aw, win.at("val").at("traj"),
                       win.at("val").at("t"));
  d.test = read_windows(p, end, m.at("counts").at("test").get<Index>(), ow, aw, win.at("test").at("traj"),
                        win.at("test").at("t"));
  if (p != end) throw IoError("dataset cache " + path + ": trailing bytes after windows");
  return d;
}

}  // namespace lqb
