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

#include "liquidbench/experiment.hpp"
#include "liquidbench/io.hpp"

#include <filesystem>
#include <sstream>

using namespace lqb;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lqb_experiment_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

RunConfig tiny() {
  RunConfig c;
  c.n_traj = 20;
  c.epochs = 2;
  c.d_model = 16;
  c.episodes = 3;
  c.latency_repeats = 2;
  c.latency_warmup = 1;
  c.sweep_seeds = {7};
  return c;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char ch : s) n += ch == '\n';
  return n;
}

}  // namespace

TEST_CASE("config round trip and validation") {
  const std::string dir = scratch("config");
  RunConfig c = tiny();
  c.lr = 1.25e-3;
  c.sweep_seeds = {1, 2, 3};
  const std::string path = dir + "/c.json";
  save_config(c, path);
  const std::string first = read_file(path);
  const RunConfig back = load_config(path);
  save_config(back, path);
  CHECK(read_file(path) == first);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(to_json(RunConfig{}).at("tag") == "fair_halfparam_deterministic_clip_120epochs");

  CHECK_THROWS_AS(config_from_json(json{{"no_such_key", 1}}), ExperimentError);
  CHECK_THROWS_AS(config_from_json(json{{"task", "pusht"}}), ExperimentError);
  CHECK_THROWS_AS(config_from_json(json{{"exec_horizon", 17}}), ExperimentError);
  CHECK_THROWS_AS(config_from_json(json{{"epochs", "many"}}), ExperimentError);
  CHECK_THROWS_AS(load_config(dir + "/missing.json"), ExperimentError);
  // Partial files keep defaults for absent keys.
  CHECK(config_from_json(json{{"seed", 9}}).epochs == 120);
}

TEST_CASE("hash scopes") {
  const RunConfig a = tiny();
  RunConfig b = a;
  b.episodes = 99;
  b.eval_samples = 20;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(data_hash(a) == data_hash(b));
  CHECK(train_hash(a, HeadKind::kLiquid, 1, 1.0) == train_hash(b, HeadKind::kLiquid, 1, 1.0));
  CHECK(train_hash(a, HeadKind::kLiquid, 1, 1.0) != train_hash(a, HeadKind::kDiffusion, 1, 1.0));
  CHECK(train_hash(a, HeadKind::kLiquid, 1, 1.0) != train_hash(a, HeadKind::kLiquid, 2, 1.0));
  CHECK(train_hash(a, HeadKind::kLiquid, 1, 1.0) != train_hash(a, HeadKind::kLiquid, 1, 0.1));
  b = a;
  b.lr = 1e-3;
  CHECK(data_hash(a) == data_hash(b));
  CHECK(train_hash(a, HeadKind::kLiquid, 1, 1.0) != train_hash(b, HeadKind::kLiquid, 1, 1.0));
  b = a;
  b.fast = true;
  CHECK(b.effective_epochs() == 30);
  CHECK(train_hash(a, HeadKind::kLiquid, 1, 1.0) != train_hash(b, HeadKind::kLiquid, 1, 1.0));
  b = a;
  b.n_traj = 21;
  CHECK(data_hash(a) != data_hash(b));
}

TEST_CASE("gen") {
  const std::string dir = scratch("gen");
  const RunConfig c = tiny();
  const json j = cmd_gen(c, dir, false);
  const std::string bytes = read_file(Layout{dir}.dataset());
  CHECK_THROWS_AS(cmd_gen(c, dir, false), ExperimentError);
  cmd_gen(c, dir, true);
  CHECK(read_file(Layout{dir}.dataset()) == bytes);
  CHECK(read_file(dir + "/config.json") == config_text(c));

  // Window counts follow L - H_p - H_o + 1 per trajectory of each split.
  const auto trajs = gen_bimaze(c.n_traj, c.seed);
  const PreparedData d = load_checked_dataset(c, dir);
  auto expected = [&](const std::vector<int>& ids) {
    Index n = 0;
    for (int id : ids) n += window_count(static_cast<Index>(trajs[static_cast<std::size_t>(id)].actions.rows()));
    return n;
  };
  CHECK(j.at("windows").at("train").get<Index>() == expected(d.splits.train));
  CHECK(j.at("windows").at("val").get<Index>() == expected(d.splits.val));
  CHECK(j.at("windows").at("test").get<Index>() == expected(d.splits.test));

  const PreparedData fresh = generate_dataset(c);
  CHECK(d.obs_stats.lo == fresh.obs_stats.lo);
  CHECK(d.obs_stats.hi == fresh.obs_stats.hi);
  CHECK(d.act_stats.lo == fresh.act_stats.lo);
  CHECK(d.act_stats.hi == fresh.act_stats.hi);
  CHECK(d.obs_stats.degenerate == fresh.obs_stats.degenerate);

  RunConfig other = c;
  other.seed = 3;
  CHECK_THROWS_AS(load_checked_dataset(other, dir), ExperimentError);
  CHECK_THROWS_AS(load_checked_dataset(c, scratch("gen_missing")), ExperimentError);
}

TEST_CASE("train, eval and checkpoints") {
  const std::string dir = scratch("train");
  const RunConfig c = tiny();
  CHECK_THROWS_AS(cmd_train(c, HeadKind::kLiquid, dir, false), ExperimentError);
  CHECK_THROWS_AS(cmd_eval(c, dir), ExperimentError);
  cmd_gen(c, dir, false);
  CHECK_THROWS_AS(cmd_eval(c, dir), ExperimentError);

  const json jl = cmd_train(c, HeadKind::kLiquid, dir, false);
  CHECK(jl.at("epochs").get<int>() == 2);
  CHECK(jl.at("epochs_run").get<int>() == 2);
  // A finished run is picked up again without retraining.
  CHECK(cmd_train(c, HeadKind::kLiquid, dir, false).at("epochs_run").get<int>() == 0);

  // Partial report with one head.
  const json partial = cmd_eval(c, dir);
  CHECK(partial.at("partial").get<bool>());
  CHECK(partial.at("rows").size() == 1);

  cmd_train(c, HeadKind::kDiffusion, dir, false);
  const Checkpoint lc = load_checkpoint(dir + "/liquid/best.ckpt");
  const Checkpoint dc = load_checkpoint(dir + "/diffusion/best.ckpt");
  CHECK(lc.meta.at("data_hash") == dc.meta.at("data_hash"));
  CHECK(lc.meta.at("data_hash") == data_hash(c));
  CHECK(lc.meta.at("tag") == c.tag);

  // save -> load -> save is byte-idempotent.
  const std::string raw = read_file(dir + "/liquid/last.ckpt");
  CHECK(serialize_checkpoint(parse_checkpoint(raw)) == raw);

  const json je = cmd_eval(c, dir);
  CHECK_FALSE(je.at("partial").get<bool>());
  const std::string csv = read_file(dir + "/eval/metrics.csv");
  CHECK(csv.find("liquid,bimaze") != std::string::npos);
  CHECK(csv.find(",false,") != std::string::npos);  // exact NLL row
  CHECK(csv.find(",true,") != std::string::npos);   // proxy NLL row
  CHECK(csv.find(config_hash(c)) != std::string::npos);
  cmd_eval(c, dir);
  CHECK(read_file(dir + "/eval/metrics.csv") == csv);

  const PreparedData d = load_checked_dataset(c, dir);
  for (const char* m : {"liquid", "diffusion"}) {
    CHECK(static_cast<Index>(read_sidecar(dir + "/eval/" + m + "_errors").size()) == d.test.size());
  }

  // A changed training setting is refused until --force.
  RunConfig changed = c;
  changed.lr = 1e-3;
  CHECK_THROWS_AS(cmd_train(changed, HeadKind::kLiquid, dir, false), ExperimentError);
  CHECK_THROWS_AS(cmd_eval(changed, dir), ExperimentError);
  CHECK(cmd_train(changed, HeadKind::kLiquid, dir, true).at("epochs_run").get<int>() == 2);

  RunConfig fast = c;
  fast.fast = true;
  CHECK(train_config(fast, HeadKind::kLiquid, 1, 1.0, "").epochs == 30);
}

TEST_CASE("sweep") {
  const std::string dir = scratch("sweep");
  RunConfig c = tiny();
  c.epochs = 1;
  c.sweep_seeds = {3, 4};
  cmd_gen(c, dir, false);
  const json j = cmd_sweep(c, dir, false);
  CHECK(j.at("rows").get<int>() == 7 * 2 * 2);
  CHECK(j.at("failed_cells").get<int>() == 0);
  const std::string csv = read_file(dir + "/sweep/sweep.csv");
  CHECK(count_lines(csv) == 1 + 7 * 2 * 2);
  const std::string log = read_file(dir + "/sweep/sweep_log.jsonl");
  CHECK(count_lines(log) == 14);
  std::istringstream in(log);
  std::string line;
  while (std::getline(in, line)) CHECK(json::parse(line).at("nested_in_previous").get<bool>());

  // Drop two finished cells; the rerun redoes only those and lands on the same bytes.
  fs::remove(dir + "/sweep/seed3/f2/cell.json");
  fs::remove_all(dir + "/sweep/seed4/f6");
  fs::remove(dir + "/sweep/sweep.csv");
  cmd_sweep(c, dir, false, 2);
  CHECK(read_file(dir + "/sweep/sweep.csv") == csv);
  CHECK(read_file(dir + "/sweep/sweep_log.jsonl") == log);
}

TEST_CASE("rollout, theory and report") {
  const std::string dir = scratch("rollout");
  RunConfig c = tiny();
  c.episodes = 6;
  const json je = cmd_rollout(c, "expert", dir);
  ExpertRollout expert(rollout_config(c).world);
  const RolloutAggregate direct = aggregate("expert", rollout(expert, rollout_config(c)));
  CHECK(je.at("success_pct").get<double>() == direct.success_pct);
  CHECK(je.at("distance_success_pct").get<double>() == direct.distance_success_pct);
  CHECK(je.at("mean_reward").get<double>() == direct.mean_reward);

  const json jr = cmd_rollout(c, "random", dir);
  const std::string lines = read_file(dir + "/rollout/random.jsonl");
  CHECK(count_lines(lines) == 6);
  double successes = 0;
  std::istringstream in(lines);
  std::string line;
  while (std::getline(in, line)) {
    const json l = json::parse(line);
    successes += l.at("success").get<bool>() ? 1.0 : 0.0;
    CHECK(l.at("config_hash") == config_hash(c));
  }
  CHECK(jr.at("success_pct").get<double>() == doctest::Approx(100.0 * successes / 6.0));
  CHECK_THROWS_AS(cmd_rollout(c, "liquid", dir), ExperimentError);
  CHECK_THROWS_AS(cmd_rollout(c, "oracle", dir), ExperimentError);

  const json jt = cmd_theory(c, dir);
  const std::string t1 = read_file(dir + "/theory/theory.csv");
  CHECK(count_lines(t1) == 1 + 3 * 3 * 8);
  for (const auto& s : jt.at("slopes")) {
    if (s.at("method") == "euler") {
      CHECK(s.at("slope").get<double>() >= -1.1);
      CHECK(s.at("slope").get<double>() <= -0.9);
    }
  }
  cmd_theory(c, dir);
  CHECK(read_file(dir + "/theory/theory.csv") == t1);
  CHECK(read_file(dir + "/theory/theory_slopes.csv").find(c.tag) != std::string::npos);

  cmd_report(c, dir);
  const std::string md = read_file(dir + "/report.md");
  CHECK(md.find("| expert |") != std::string::npos);
  CHECK(md.find("euler") != std::string::npos);
  CHECK_THROWS_AS(cmd_report(c, scratch("empty_report")), ExperimentError);
}

TEST_CASE("stamp_csv") {
  CHECK(stamp_csv("a,b\n1,2\n", "t", "h") == "a,b,tag,config_hash\n1,2,t,h\n");
}
