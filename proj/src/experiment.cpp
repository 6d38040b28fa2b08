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

#include "liquidbench/experiment.hpp"

#include "liquidbench/io.hpp"
#include "liquidbench/theory.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

namespace lqb {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string join(const std::string& a, const std::string& b) { return (fs::path(a) / b).string(); }

void write_json(const std::string& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ExperimentError("invariant", path + ": " + e.what());
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ExperimentError("config", what);
}

std::string fraction_label(double f) {
  const auto& fl = fraction_list();
  for (std::size_t i = 0; i < fl.size(); ++i) {
    if (std::abs(fl[i] - f) < 1e-12) return "f" + std::to_string(i);
  }
  throw ExperimentError("config", "fraction " + std::to_string(f) + " is not one of the fixed fractions");
}

json stamp(const RunConfig& c) { return {{"tag", c.tag}, {"config_hash", config_hash(c)}}; }

}  // namespace

void RunConfig::validate() const {
  require(task == "bimaze" || task == "bimodal1d", "task must be bimaze or bimodal1d, got " + task);
  require(n_traj >= 3, "n_traj must be >= 3 so every split is non-empty");
  require(history >= 1 && horizon >= 1, "history and horizon must be >= 1");
  require(d_model >= 1 && liquid_layers >= 1 && components >= 1 && embed_dim >= 1, "model sizes must be >= 1");
  require(diffusion_depth >= 1 && diffusion_steps >= 1, "diffusion depth and steps must be >= 1");
  require(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end, "need 0 < beta_start <= beta_end < 1");
  require(epochs >= 1 && batch_size >= 1, "epochs and batch_size must be >= 1");
  require(lr >= 0.0 && weight_decay >= 0.0 && floor_lr >= 0.0 && warmup_epochs >= 0.0, "negative optimizer setting");
  require(clip_norm > 0.0, "clip_norm must be positive");
  require(w_fr_start >= 0.0 && w_fr_start <= 1.0 && w_fr_end >= 0.0 && w_fr_end <= 1.0, "w_fr must lie in [0, 1]");
  require(val_cap >= 1 && proxy_windows >= 1 && proxy_samples >= 2, "validation sizes too small");
  require(eval_samples >= 10, "eval_samples must be >= 10 for best-of-10");
  require(eval_max_windows >= 0, "eval_max_windows must be >= 0");
  require(latency_repeats >= 1 && latency_warmup >= 0 && latency_batch >= 1, "bad latency settings");
  require(episodes >= 1, "episodes must be >= 1");
  require(exec_horizon >= 1 && exec_horizon <= horizon, "exec_horizon must lie in [1, horizon]");
  require(liquid_decode == "argmax" || liquid_decode == "sample", "liquid_decode must be argmax or sample");
  require(!sweep_seeds.empty(), "sweep_seeds must not be empty");
  require(!tag.empty(), "tag must not be empty");
}

json to_json(const RunConfig& c) {
  return {{"tag", c.tag},
          {"task", c.task},
          {"n_traj", c.n_traj},
          {"seed", c.seed},
          {"history", c.history},
          {"horizon", c.horizon},
          {"zscore", c.zscore},
          {"d_model", c.d_model},
          {"attention", c.attention},
          {"liquid_hidden", c.liquid_hidden},
          {"liquid_layers", c.liquid_layers},
          {"components", c.components},
          {"embed_dim", c.embed_dim},
          {"diffusion_width", c.diffusion_width},
          {"diffusion_depth", c.diffusion_depth},
          {"diffusion_steps", c.diffusion_steps},
          {"beta_start", c.beta_start},
          {"beta_end", c.beta_end},
          {"epochs", c.epochs},
          {"fast", c.fast},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"warmup_epochs", c.warmup_epochs},
          {"floor_lr", c.floor_lr},
          {"clip_norm", c.clip_norm},
          {"w_fr_start", c.w_fr_start},
          {"w_fr_end", c.w_fr_end},
          {"val_cap", c.val_cap},
          {"proxy_windows", c.proxy_windows},
          {"proxy_samples", c.proxy_samples},
          {"eval_samples", c.eval_samples},
          {"eval_max_windows", c.eval_max_windows},
          {"latency_warmup", c.latency_warmup},
          {"latency_repeats", c.latency_repeats},
          {"latency_batch", c.latency_batch},
          {"episodes", c.episodes},
          {"exec_horizon", c.exec_horizon},
          {"liquid_decode", c.liquid_decode},
          {"sweep_seeds", c.sweep_seeds}};
}

RunConfig config_from_json(const json& in) {
  if (!in.is_object()) throw ExperimentError("config", "config must be a JSON object");
  json j = to_json(RunConfig{});
  for (const auto& [k, v] : in.items()) {
    if (!j.contains(k)) throw ExperimentError("config", "unknown config key '" + k + "'");
    j[k] = v;
  }
  RunConfig c;
  try {
    j.at("tag").get_to(c.tag);
    j.at("task").get_to(c.task);
    j.at("n_traj").get_to(c.n_traj);
    j.at("seed").get_to(c.seed);
    j.at("history").get_to(c.history);
    j.at("horizon").get_to(c.horizon);
    j.at("zscore").get_to(c.zscore);
    j.at("d_model").get_to(c.d_model);
    j.at("attention").get_to(c.attention);
    j.at("liquid_hidden").get_to(c.liquid_hidden);
    j.at("liquid_layers").get_to(c.liquid_layers);
    j.at("components").get_to(c.components);
    j.at("embed_dim").get_to(c.embed_dim);
    j.at("diffusion_width").get_to(c.diffusion_width);
    j.at("diffusion_depth").get_to(c.diffusion_depth);
    j.at("diffusion_steps").get_to(c.diffusion_steps);
    j.at("beta_start").get_to(c.beta_start);
    j.at("beta_end").get_to(c.beta_end);
    j.at("epochs").get_to(c.epochs);
    j.at("fast").get_to(c.fast);
    j.at("batch_size").get_to(c.batch_size);
    j.at("lr").get_to(c.lr);
    j.at("weight_decay").get_to(c.weight_decay);
    j.at("warmup_epochs").get_to(c.warmup_epochs);
    j.at("floor_lr").get_to(c.floor_lr);
    j.at("clip_norm").get_to(c.clip_norm);
    j.at("w_fr_start").get_to(c.w_fr_start);
    j.at("w_fr_end").get_to(c.w_fr_end);
    j.at("val_cap").get_to(c.val_cap);
    j.at("proxy_windows").get_to(c.proxy_windows);
    j.at("proxy_samples").get_to(c.proxy_samples);
    j.at("eval_samples").get_to(c.eval_samples);
    j.at("eval_max_windows").get_to(c.eval_max_windows);
    j.at("latency_warmup").get_to(c.latency_warmup);
    j.at("latency_repeats").get_to(c.latency_repeats);
    j.at("latency_batch").get_to(c.latency_batch);
    j.at("episodes").get_to(c.episodes);
    j.at("exec_horizon").get_to(c.exec_horizon);
    j.at("liquid_decode").get_to(c.liquid_decode);
    j.at("sweep_seeds").get_to(c.sweep_seeds);
  } catch (const json::exception& e) {
    throw ExperimentError("config", std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_text(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

RunConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw ExperimentError("missing_input", "config file " + path + " not found");
  return config_from_json(read_json(path));
}

void save_config(const RunConfig& c, const std::string& path) { write_file_atomic(path, config_text(c)); }

std::string config_hash(const RunConfig& c) { return hex64(fnv1a(to_json(c).dump())); }

std::string data_hash(const RunConfig& c) {
  const json j = {{"task", c.task},       {"n_traj", c.n_traj},   {"seed", c.seed},
                  {"history", c.history}, {"horizon", c.horizon}, {"zscore", c.zscore}};
  return hex64(fnv1a(j.dump()));
}

std::string train_hash(const RunConfig& c, HeadKind kind, std::uint64_t seed, double fraction) {
  json j = to_json(c);
  for (const char* k : {"tag", "eval_samples", "eval_max_windows", "latency_warmup", "latency_repeats",
                        "latency_batch", "episodes", "exec_horizon", "liquid_decode", "sweep_seeds", "fast"}) {
    j.erase(k);
  }
  j["epochs"] = c.effective_epochs();
  j["head"] = head_name(kind);
  j["run_seed"] = seed;
  j["fraction"] = fraction;
  return hex64(fnv1a(j.dump()));
}

PreparedData generate_dataset(const RunConfig& c) {
  c.validate();
  const std::vector<Trajectory> trajs =
      c.task == "bimaze" ? gen_bimaze(c.n_traj, c.seed) : gen_bimodal1d(c.n_traj, c.seed);
  PrepareConfig pc;
  pc.history = c.history;
  pc.horizon = c.horizon;
  pc.zscore = c.zscore;
  pc.split_seed = c.seed;
  PreparedData d = prepare(trajs, pc);
  d.stamp = {{"data_hash", data_hash(c)}, {"tag", c.tag}, {"config_hash", config_hash(c)}};
  return d;
}

ModelConfig model_config(const RunConfig& c, const PreparedData& d) {
  ModelConfig m;
  m.d_model = c.d_model;
  m.backbone.attention = c.attention;
  m.liquid.hidden = c.liquid_hidden;
  m.liquid.layers = c.liquid_layers;
  m.liquid.components = c.components;
  m.liquid.embed_dim = c.embed_dim;
  m.diffusion.width = c.diffusion_width;
  m.diffusion.depth = c.diffusion_depth;
  m.diffusion.steps = c.diffusion_steps;
  m.diffusion.beta_start = c.beta_start;
  m.diffusion.beta_end = c.beta_end;
  return resolve_models(m, d.obs_dim, d.action_dim, d.history, d.horizon);
}

TrainConfig train_config(const RunConfig& c, HeadKind kind, std::uint64_t seed, double fraction,
                         const std::string& out_dir) {
  TrainConfig t;
  t.epochs = c.effective_epochs();
  t.batch_size = c.batch_size;
  t.seed = seed;
  t.w_fr_start = c.w_fr_start;
  t.w_fr_end = c.w_fr_end;
  t.adam.peak_lr = c.lr;
  t.adam.weight_decay = c.weight_decay;
  t.warmup_epochs = c.warmup_epochs;
  t.floor_lr = c.floor_lr;
  t.clip_norm = c.clip_norm;
  t.val_cap = c.val_cap;
  t.proxy_windows = c.proxy_windows;
  t.proxy_samples = c.proxy_samples;
  t.out_dir = out_dir;
  t.resume = !out_dir.empty();
  t.config_hash = train_hash(c, kind, seed, fraction);
  t.meta_extra = {{"tag", c.tag}, {"data_hash", data_hash(c)}, {"fraction", fraction}};
  return t;
}

EvalConfig eval_config(const RunConfig& c, std::uint64_t seed) {
  EvalConfig e;
  e.samples = c.eval_samples;
  e.seed = seed;
  e.max_windows = c.eval_max_windows;
  e.latency_warmup = c.latency_warmup;
  e.latency_repeats = c.latency_repeats;
  e.latency_batch = c.latency_batch;
  return e;
}

RolloutConfig rollout_config(const RunConfig& c) {
  RolloutConfig r;
  r.episodes = c.episodes;
  r.seed = c.seed;
  r.exec_horizon = c.exec_horizon;
  return r;
}

std::string Layout::dataset() const { return join(root, "dataset.bin"); }
std::string Layout::train_dir(HeadKind k) const { return join(root, head_name(k)); }
std::string Layout::eval_dir() const { return join(root, "eval"); }
std::string Layout::sweep_dir() const { return join(root, "sweep"); }
std::string Layout::rollout_dir() const { return join(root, "rollout"); }
std::string Layout::theory_dir() const { return join(root, "theory"); }

PreparedData load_checked_dataset(const RunConfig& c, const std::string& out) {
  const std::string path = Layout{out}.dataset();
  if (!fs::exists(path)) throw ExperimentError("missing_input", "dataset cache " + path + " not found; run gen first");
  PreparedData d = load_dataset(path);
  const std::string want = data_hash(c);
  const std::string have = d.stamp.value("data_hash", "");
  if (have != want) {
    throw ExperimentError("hash_mismatch", "dataset cache " + path + " has data hash " + have + ", config expects " +
                                               want + "; rerun gen with --force");
  }
  return d;
}

namespace {

Checkpoint load_best(const RunConfig& c, HeadKind kind, std::uint64_t seed, double fraction, const std::string& dir) {
  const std::string path = join(dir, "best.ckpt");
  if (!fs::exists(path)) {
    throw ExperimentError("missing_input", "checkpoint " + path + " not found; run train --model " +
                                               std::string(head_name(kind)) + " first");
  }
  Checkpoint ck = load_checkpoint(path);
  const std::string want = train_hash(c, kind, seed, fraction);
  if (ck.meta.value("model", "") != head_name(kind)) {
    throw ExperimentError("invariant", path + " does not hold a " + std::string(head_name(kind)) + " model");
  }
  if (ck.meta.value("config_hash", "") != want) {
    throw ExperimentError("hash_mismatch", path + " was trained under config hash " +
                                               ck.meta.value("config_hash", "") + ", current config gives " + want);
  }
  return ck;
}

}  // namespace

LiquidHead<float> load_liquid(const RunConfig& c, const ModelConfig& mc, std::uint64_t seed, double fraction,
                              const std::string& dir) {
  const Checkpoint ck = load_best(c, HeadKind::kLiquid, seed, fraction, dir);
  LiquidHead<float> h = make_liquid<float>(mc, seed);
  ParamSet<float> p = h.params();
  get_params(ck, p);
  return h;
}

DiffusionHead<float> load_diffusion(const RunConfig& c, const ModelConfig& mc, std::uint64_t seed, double fraction,
                                    const std::string& dir) {
  const Checkpoint ck = load_best(c, HeadKind::kDiffusion, seed, fraction, dir);
  DiffusionHead<float> h = make_diffusion<float>(mc, seed);
  ParamSet<float> p = h.params();
  get_params(ck, p);
  return h;
}

EvalOutcome evaluate_heads(const RunConfig& c, const PreparedData& d, const Backbone<float>& backbone,
                           const ModelConfig& mc, const LiquidHead<float>* liquid,
                           const DiffusionHead<float>* diffusion, std::uint64_t seed, double fraction,
                           bool with_latency) {
  if (!liquid && !diffusion) throw ExperimentError("missing_input", "no head to evaluate");
  const EvalConfig ec = eval_config(c, seed);
  const EvalInputs in = make_eval_inputs(backbone, d.test, d.horizon, d.action_dim, ec.max_windows);
  const ParamCounts pc = param_counts(mc);
  const std::string hash = config_hash(c);
  const std::string stamp_time = utc_timestamp();

  auto base = [&](const char* model, std::int64_t params) {
    MetricsReport r;
    r.model = model;
    r.dataset = c.task;
    r.fraction = fraction;
    r.seed = seed;
    r.params = params;
    r.timestamp = stamp_time;
    r.tag = c.tag;
    r.config_hash = hash;
    return r;
  };
  auto fill = [](MetricsReport& r, const SampleBank& bank, const MseMetrics& m) {
    r.det_mse = m.deterministic;
    r.det_is_sample = bank.deterministic_is_sample;
    r.sample_mean_mse = m.sample_mean;
    r.best_of_k = m.best_of_k;
    r.diversity = m.diversity;
    r.jerk = m.jerk;
  };
  auto errors_of = [](const MseMetrics& m) {
    std::vector<double> e;
    e.reserve(m.per_window.size());
    for (const auto& w : m.per_window) e.push_back(w[3]);
    return e;
  };

  EvalOutcome out;
  std::optional<SampleBank> lb, db;
  if (liquid) {
    MetricsReport r = base("liquid", pc.liquid + pc.backbone);
    r.nll = exact_nll(*liquid, in);
    r.proxy = false;
    lb = liquid_bank(*liquid, in, ec);
    const MseMetrics m = mse_metrics(*lb, in);
    fill(r, *lb, m);
    if (with_latency) r.latency_ms = liquid_latency(backbone, *liquid, in.obs, ec).median_ms;
    out.reports.push_back(r);
    out.errors.push_back(errors_of(m));
  }
  if (diffusion) {
    MetricsReport r = base("diffusion", pc.diffusion + pc.backbone);
    db = diffusion_bank(*diffusion, in, ec);
    r.nll = proxy_nll(*db, in);
    r.proxy = true;
    const MseMetrics m = mse_metrics(*db, in);
    fill(r, *db, m);
    if (with_latency) r.latency_ms = diffusion_latency(backbone, *diffusion, in.obs, ec).median_ms;
    out.reports.push_back(r);
    out.errors.push_back(errors_of(m));
  }
  if (lb && db) assert_shared_latents(in, *lb, *db);
  return out;
}

json cmd_gen(const RunConfig& c, const std::string& out, bool force) {
  c.validate();
  const Layout lay{out};
  if (fs::exists(lay.dataset()) && !force) {
    throw ExperimentError("exists", "dataset cache " + lay.dataset() + " exists; pass --force to overwrite");
  }
  ensure_dir(out);
  const PreparedData d = generate_dataset(c);
  save_dataset(d, lay.dataset());
  save_config(c, join(out, "config.json"));
  // Reload so the printed counts and stats are what downstream commands see.
  const PreparedData back = load_dataset(lay.dataset());
  json counts = {{"train", back.train.size()}, {"val", back.val.size()}, {"test", back.test.size()}};
  json trajs = {{"train", back.splits.train.size()}, {"val", back.splits.val.size()}, {"test", back.splits.test.size()}};
  json j = stamp(c);
  j["command"] = "gen";
  j["dataset"] = lay.dataset();
  j["data_hash"] = data_hash(c);
  j["windows"] = counts;
  j["trajectories"] = trajs;
  j["degenerate_obs_dims"] = back.obs_stats.degenerate;
  j["degenerate_action_dims"] = back.act_stats.degenerate;
  return j;
}

namespace {

struct Prepared {
  ModelConfig mc;
  Backbone<float> backbone;
  LatentWindows train, val;
};

Prepared prepare_training(const RunConfig& c, const PreparedData& d, std::uint64_t seed, const WindowSet& train) {
  Prepared p;
  p.mc = model_config(c, d);
  p.backbone = make_backbone<float>(p.mc, seed);
  p.train = encode_windows(p.backbone, train);
  p.val = encode_windows(p.backbone, d.val);
  return p;
}

/// Trains into `dir`, resuming a matching partial run and refusing a foreign one.
json train_into(const RunConfig& c, const Prepared& p, HeadKind kind, std::uint64_t seed, double fraction,
                const std::string& dir, bool force) {
  const TrainConfig tc = train_config(c, kind, seed, fraction, dir);
  const std::string last = join(dir, "last.ckpt");
  if (force && fs::exists(dir)) fs::remove_all(dir);
  if (fs::exists(last)) {
    const Checkpoint ck = load_checkpoint(last);
    if (ck.meta.value("config_hash", "") != tc.config_hash || ck.meta.value("model", "") != head_name(kind)) {
      throw ExperimentError("hash_mismatch", last + " belongs to a different configuration; pass --force to retrain");
    }
  }
  TrainResult r;
  if (kind == HeadKind::kLiquid) {
    LiquidHead<float> h = make_liquid<float>(p.mc, seed);
    r = train_liquid(h, p.train, p.val, tc);
  } else {
    DiffusionHead<float> h = make_diffusion<float>(p.mc, seed);
    r = train_diffusion(h, p.train, p.val, tc);
  }
  const EpochRecord& best = r.records.at(r.best_index);
  double seconds = 0.0;
  for (const auto& rec : r.records) seconds += rec.seconds;
  return {{"model", head_name(kind)},
          {"dir", dir},
          {"train_hash", tc.config_hash},
          {"epochs", r.records.size()},
          {"epochs_run", r.epochs_run},
          {"best_epoch", best.epoch},
          {"selection_metric", selection_metric(best, kind)},
          {"train_windows", p.train.size()},
          {"seconds", seconds}};
}

}  // namespace

json cmd_train(const RunConfig& c, HeadKind kind, const std::string& out, bool force) {
  c.validate();
  const PreparedData d = load_checked_dataset(c, out);
  const Prepared p = prepare_training(c, d, c.seed, d.train);
  const std::string dir = Layout{out}.train_dir(kind);
  json j = train_into(c, p, kind, c.seed, 1.0, dir, force);
  save_config(c, join(dir, "config.json"));
  j.update(stamp(c));
  j["command"] = "train";
  j["data_hash"] = data_hash(c);
  return j;
}

namespace {

void write_eval_files(const std::string& dir, const EvalOutcome& ev) {
  ensure_dir(dir);
  write_file_atomic(join(dir, "metrics.csv"), metrics_csv(ev.reports));
  write_file_atomic(join(dir, "timing.csv"), timing_csv(ev.reports));
  json rows = json::array();
  for (const auto& r : ev.reports) rows.push_back(to_json(r));
  write_json(join(dir, "metrics.json"), rows);
  for (std::size_t i = 0; i < ev.reports.size(); ++i) {
    write_sidecar(join(dir, ev.reports[i].model + "_errors"), ev.reports[i], ev.errors[i]);
  }
}

}  // namespace

json cmd_eval(const RunConfig& c, const std::string& out, std::optional<HeadKind> only) {
  c.validate();
  const Layout lay{out};
  const PreparedData d = load_checked_dataset(c, out);
  const ModelConfig mc = model_config(c, d);
  const Backbone<float> bb = make_backbone<float>(mc, c.seed);

  const bool want_l = !only || *only == HeadKind::kLiquid;
  const bool want_d = !only || *only == HeadKind::kDiffusion;
  const bool have_l = want_l && fs::exists(join(lay.train_dir(HeadKind::kLiquid), "best.ckpt"));
  const bool have_d = want_d && fs::exists(join(lay.train_dir(HeadKind::kDiffusion), "best.ckpt"));
  if (!have_l && !have_d) {
    throw ExperimentError("missing_input", "no best.ckpt under " + out + "/liquid or " + out + "/diffusion");
  }
  std::optional<LiquidHead<float>> lh;
  std::optional<DiffusionHead<float>> dh;
  if (have_l) lh = load_liquid(c, mc, c.seed, 1.0, lay.train_dir(HeadKind::kLiquid));
  if (have_d) dh = load_diffusion(c, mc, c.seed, 1.0, lay.train_dir(HeadKind::kDiffusion));
  const EvalOutcome ev =
      evaluate_heads(c, d, bb, mc, lh ? &*lh : nullptr, dh ? &*dh : nullptr, c.seed, 1.0, /*with_latency=*/true);
  write_eval_files(lay.eval_dir(), ev);
  save_config(c, join(lay.eval_dir(), "config.json"));

  json j = stamp(c);
  j["command"] = "eval";
  j["partial"] = !(have_l && have_d);
  j["test_windows"] = d.test.size();
  j["rows"] = json::array();
  for (const auto& r : ev.reports) j["rows"].push_back(to_json(r));
  const ParamCounts pc = param_counts(mc);
  j["param_ratio"] = pc.ratio();
  return j;
}

namespace {

struct SweepCell {
  std::uint64_t seed = 0;
  std::size_t fraction_index = 0;
};

json run_sweep_cell(const RunConfig& c, const PreparedData& d, const SweepCell& cell, const std::string& root,
                    bool force) {
  const double f = fraction_list()[cell.fraction_index];
  const std::string dir = join(join(root, "seed" + std::to_string(cell.seed)), fraction_label(f));
  const std::string cell_path = join(dir, "cell.json");
  const std::string lhash = train_hash(c, HeadKind::kLiquid, cell.seed, f);
  const std::string dhash = train_hash(c, HeadKind::kDiffusion, cell.seed, f);
  if (!force && fs::exists(cell_path)) {
    const json done = read_json(cell_path);
    if (done.value("liquid_hash", "") == lhash && done.value("diffusion_hash", "") == dhash &&
        done.value("status", "") == "ok") {
      json j = done;
      j["skipped"] = true;
      return j;
    }
  }
  ensure_dir(dir);
  const std::vector<int> ids = subsample_fraction(d.splits.train, f, cell.seed);
  const WindowSet sub = d.train_subset(ids);
  json j = {{"seed", cell.seed},
            {"fraction", f},
            {"trajectories", ids.size()},
            {"train_windows", sub.size()},
            {"liquid_hash", lhash},
            {"diffusion_hash", dhash},
            {"status", "ok"}};
  if (cell.fraction_index > 0) {
    const std::vector<int> prev = subsample_fraction(d.splits.train, fraction_list()[cell.fraction_index - 1], cell.seed);
    j["nested_in_previous"] = std::includes(ids.begin(), ids.end(), prev.begin(), prev.end());
  } else {
    j["nested_in_previous"] = true;
  }
  if (sub.size() == 0) {
    j["status"] = "failed: subset has no windows";
    write_json(cell_path, j);
    return j;
  }
  const Prepared p = prepare_training(c, d, cell.seed, sub);
  json reports = json::array();
  std::optional<LiquidHead<float>> lh;
  std::optional<DiffusionHead<float>> dh;
  std::string failure;
  for (HeadKind kind : {HeadKind::kLiquid, HeadKind::kDiffusion}) {
    const std::string tdir = join(dir, head_name(kind));
    try {
      j["train"][head_name(kind)] = train_into(c, p, kind, cell.seed, f, tdir, force);
      if (kind == HeadKind::kLiquid) {
        lh = load_liquid(c, p.mc, cell.seed, f, tdir);
      } else {
        dh = load_diffusion(c, p.mc, cell.seed, f, tdir);
      }
    } catch (const std::exception& e) {
      failure += std::string(head_name(kind)) + ": " + e.what() + "; ";
    }
  }
  if (lh || dh) {
    const EvalOutcome ev =
        evaluate_heads(c, d, p.backbone, p.mc, lh ? &*lh : nullptr, dh ? &*dh : nullptr, cell.seed, f, false);
    for (const auto& r : ev.reports) reports.push_back(to_json(r));
  }
  j["reports"] = reports;
  if (!failure.empty()) j["status"] = "failed: " + failure;
  write_json(cell_path, j);
  return j;
}

}  // namespace

json cmd_sweep(const RunConfig& c, const std::string& out, bool force, int threads) {
  c.validate();
  const PreparedData d = load_checked_dataset(c, out);
  const std::string root = Layout{out}.sweep_dir();
  ensure_dir(root);
  save_config(c, join(root, "config.json"));

  std::vector<SweepCell> cells;
  for (std::uint64_t s : c.sweep_seeds) {
    for (std::size_t i = 0; i < fraction_list().size(); ++i) cells.push_back({s, i});
  }
  std::vector<json> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = run_sweep_cell(c, d, cells[i], root, force);
      } catch (const std::exception& e) {
        results[i] = {{"seed", cells[i].seed},
                      {"fraction", fraction_list()[cells[i].fraction_index]},
                      {"status", std::string("failed: ") + e.what()},
                      {"reports", json::array()}};
      }
      std::lock_guard<std::mutex> lock(log_mutex);
      std::fprintf(stderr, "sweep seed %llu fraction %.4f: %s%s\n",
                   static_cast<unsigned long long>(cells[i].seed), fraction_list()[cells[i].fraction_index],
                   results[i].value("status", "?").c_str(), results[i].value("skipped", false) ? " (cached)" : "");
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<MetricsReport> rows;
  std::string log;
  int failed = 0;
  for (const auto& r : results) {
    json line = {{"seed", r.at("seed")},
                 {"fraction", r.at("fraction")},
                 {"status", r.at("status")},
                 {"trajectories", r.value("trajectories", 0)},
                 {"train_windows", r.value("train_windows", 0)},
                 {"nested_in_previous", r.value("nested_in_previous", false)},
                 {"tag", c.tag},
                 {"config_hash", config_hash(c)}};
    log += line.dump() + "\n";
    if (r.at("status") != "ok") ++failed;
    for (const auto& rep : r.at("reports")) {
      MetricsReport m = report_from_json(rep);
      if (r.at("status") != "ok") m.status = "partial";
      rows.push_back(m);
    }
  }
  write_file_atomic(join(root, "sweep_log.jsonl"), log);
  write_file_atomic(join(root, "sweep.csv"), metrics_csv(rows));
  json all = json::array();
  for (const auto& r : rows) all.push_back(to_json(r));
  write_json(join(root, "sweep.json"), all);

  json j = stamp(c);
  j["command"] = "sweep";
  j["cells"] = cells.size();
  j["failed_cells"] = failed;
  j["rows"] = rows.size();
  j["csv"] = join(root, "sweep.csv");
  return j;
}

json cmd_rollout(const RunConfig& c, const std::string& policy, const std::string& out) {
  c.validate();
  const Layout lay{out};
  const RolloutConfig rc = rollout_config(c);
  std::unique_ptr<Policy> pol;
  std::optional<PreparedData> d;
  std::optional<Backbone<float>> bb;
  std::optional<LiquidHead<float>> lh;
  std::optional<DiffusionHead<float>> dh;
  if (policy == "expert") {
    pol = std::make_unique<ExpertRollout>(rc.world);
  } else if (policy == "random") {
    pol = std::make_unique<RandomPolicy>();
  } else if (policy == "liquid" || policy == "diffusion") {
    if (c.task != "bimaze") throw ExperimentError("config", "closed-loop rollouts need task bimaze");
    d = load_checked_dataset(c, out);
    const ModelConfig mc = model_config(c, *d);
    bb = make_backbone<float>(mc, c.seed);
    if (policy == "liquid") {
      lh = load_liquid(c, mc, c.seed, 1.0, lay.train_dir(HeadKind::kLiquid));
      pol = make_liquid_policy(*bb, *lh, *d, rc.exec_horizon,
                               c.liquid_decode == "sample" ? LiquidDecode::kSample : LiquidDecode::kArgmax);
    } else {
      dh = load_diffusion(c, mc, c.seed, 1.0, lay.train_dir(HeadKind::kDiffusion));
      pol = make_diffusion_policy(*bb, *dh, *d, rc.exec_horizon);
    }
  } else {
    throw ExperimentError("config", "unknown policy '" + policy + "' (expert, random, liquid, diffusion)");
  }
  const std::vector<RolloutResult> res = rollout(*pol, rc);
  const RolloutAggregate agg = aggregate(policy, res);
  if (!agg.containment) throw ExperimentError("invariant", "distance-success without success in a " + policy + " episode");
  const std::string dir = lay.rollout_dir();
  ensure_dir(dir);
  std::string lines;
  for (const auto& r : res) {
    json l = to_json(r);
    l["tag"] = c.tag;
    l["config_hash"] = config_hash(c);
    lines += l.dump() + "\n";
  }
  write_file_atomic(join(dir, policy + ".jsonl"), lines);
  json j = to_json(agg);
  j.update(stamp(c));
  j["exec_horizon"] = rc.exec_horizon;
  if (policy == "liquid") j["decode"] = c.liquid_decode;
  write_json(join(dir, policy + "_summary.json"), j);
  save_config(c, join(dir, "config.json"));
  j["command"] = "rollout";
  return j;
}

std::string stamp_csv(const std::string& csv, const std::string& tag, const std::string& hash) {
  std::istringstream in(csv);
  std::string line, out;
  bool header = true;
  while (std::getline(in, line)) {
    out += line + (header ? ",tag,config_hash" : "," + tag + "," + hash) + "\n";
    header = false;
  }
  return out;
}

json cmd_theory(const RunConfig& c, const std::string& out) {
  c.validate();
  const TheoryReport r = run_theory({2, 4, 8, 16, 32, 64, 128, 256}, c.seed);
  const std::string dir = Layout{out}.theory_dir();
  ensure_dir(dir);
  const std::string hash = config_hash(c);
  write_file_atomic(join(dir, "theory.csv"), stamp_csv(theory_csv(r), c.tag, hash));
  write_file_atomic(join(dir, "theory_slopes.csv"), stamp_csv(theory_slopes_csv(r), c.tag, hash));
  save_config(c, join(dir, "config.json"));
  json j = stamp(c);
  j["command"] = "theory";
  j["rows"] = r.rows.size();
  j["floor"] = kTheoryFloor;
  for (const auto& s : r.slopes) {
    j["slopes"].push_back({{"system", s.system},
                           {"method", s.method},
                           {"slope", s.fit.slope},
                           {"points_used", s.fit.used},
                           {"points_excluded", s.fit.excluded}});
  }
  return j;
}

namespace {

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string metrics_table(const json& rows, bool with_fraction) {
  std::string t = with_fraction ? "| model | fraction | seed | params | NLL | det MSE | best-of-1 | best-of-2 | best-of-5 | "
                                  "best-of-10 | diversity | jerk | status |\n|---|---|---|---|---|---|---|---|---|---|---|---|---|\n"
                                : "| model | params | NLL | det MSE | best-of-1 | best-of-2 | best-of-5 | best-of-10 | "
                                  "diversity | jerk | latency ms |\n|---|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& j : rows) {
    const MetricsReport r = report_from_json(j);
    std::string nll = fmt(r.nll) + (r.proxy ? " (proxy)" : " (exact)");
    std::string det = fmt(r.det_mse) + (r.det_is_sample ? " (fixed-seed sample)" : "");
    t += "| " + r.model + " | ";
    if (with_fraction) t += fmt(r.fraction) + " | " + std::to_string(r.seed) + " | ";
    t += std::to_string(r.params) + " | " + nll + " | " + det;
    for (double b : r.best_of_k) t += " | " + fmt(b);
    t += " | " + fmt(r.diversity) + " | " + fmt(r.jerk);
    t += with_fraction ? " | " + r.status + " |\n" : " | " + fmt(r.latency_ms, 3) + " |\n";
  }
  return t;
}

}  // namespace

json cmd_report(const RunConfig& c, const std::string& out) {
  c.validate();
  const Layout lay{out};
  json j = stamp(c);
  j["command"] = "report";
  std::string md = "# liquidbench report\n\n";
  md += "tag `" + c.tag + "`, config hash `" + config_hash(c) + "`\n\n";
  bool any = false;
  const std::string eval_json = join(lay.eval_dir(), "metrics.json");
  if (fs::exists(eval_json)) {
    const json rows = read_json(eval_json);
    j["eval"] = rows;
    md += "## Head comparison (" + c.task + ", full data)\n\n" + metrics_table(rows, false) + "\n";
    any = true;
  }
  const std::string sweep_json = join(lay.sweep_dir(), "sweep.json");
  if (fs::exists(sweep_json)) {
    const json rows = read_json(sweep_json);
    j["sweep"] = rows;
    md += "## Sample-efficiency sweep\n\n" + metrics_table(rows, true) + "\n";
    any = true;
  }
  json roll = json::array();
  for (const char* p : {"expert", "random", "liquid", "diffusion"}) {
    const std::string path = join(lay.rollout_dir(), std::string(p) + "_summary.json");
    if (fs::exists(path)) roll.push_back(read_json(path));
  }
  if (!roll.empty()) {
    j["rollout"] = roll;
    md += "## Closed loop\n\n| policy | episodes | success % | distance-success % | reward | mean min distance | "
          "failed |\n|---|---|---|---|---|---|---|\n";
    for (const auto& r : roll) {
      md += "| " + r.at("policy").get<std::string>() + " | " + std::to_string(r.at("episodes").get<int>()) + " | " +
            fmt(r.at("success_pct").get<double>(), 1) + " | " + fmt(r.at("distance_success_pct").get<double>(), 1) +
            " | " + fmt(r.at("mean_reward").get<double>(), 1) + " | " +
            fmt(r.at("mean_min_distance").get<double>(), 3) + " | " + std::to_string(r.at("failed").get<int>()) +
            " |\n";
    }
    md += "\nReward counts steps spent inside the success radius.\n\n";
    any = true;
  }
  const std::string slopes = join(lay.theory_dir(), "theory_slopes.csv");
  if (fs::exists(slopes)) {
    j["theory_slopes_csv"] = slopes;
    md += "## Iterative-generator error slopes\n\n```\n" + read_file(slopes) + "```\n";
    any = true;
  }
  if (!any) throw ExperimentError("missing_input", "nothing to report under " + out);
  write_file_atomic(join(out, "report.md"), md);
  write_json(join(out, "report.json"), j);
  j["markdown"] = join(out, "report.md");
  return j;
}

}  // namespace lqb
