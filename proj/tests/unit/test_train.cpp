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

#include "liquidbench/io.hpp"
#include "liquidbench/models.hpp"
#include "liquidbench/train.hpp"

#include <filesystem>

using namespace lqb;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  ModelConfig models;
  LatentWindows train, val;
};

Fixture small_fixture(int trajectories, Index d_model = 8) {
  const PreparedData d = prepare(gen_bimodal1d(trajectories, 3));
  ModelConfig mc;
  mc.d_model = d_model;
  mc.liquid.hidden = 6;
  mc.liquid.layers = 2;
  mc.liquid.components = 2;
  mc.liquid.embed_dim = 4;
  mc.diffusion.steps = 10;
  mc.diffusion.time_embed = 8;
  mc.diffusion.width = 16;
  Fixture f;
  f.models = resolve_models(mc, d.obs_dim, d.action_dim, d.history, d.horizon);
  const Backbone<float> bb = make_backbone<float>(f.models, 1);
  f.train = encode_windows(bb, d.train);
  f.val = encode_windows(bb, d.val);
  return f;
}

std::string scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lqb_train_" + name);
  fs::remove_all(p);
  return p.string();
}

LatentWindows first_rows(const LatentWindows& w, Index n) {
  return {w.ctx.topRows(n), w.act.topRows(n)};
}

}  // namespace

TEST_CASE("branch weight schedule") {
  TrainConfig c;
  CHECK(c.w_fr(0) == 0.0);
  CHECK(c.w_tf(0) == 1.0);
  CHECK(c.w_fr(119) == doctest::Approx(0.5).epsilon(1e-15));
  for (int e = 0; e < c.epochs; ++e) {
    CHECK(c.w_tf(e) + c.w_fr(e) == 1.0);
    if (e > 0) CHECK(c.w_fr(e) >= c.w_fr(e - 1));
  }
  c.epochs = 1;
  CHECK(c.w_fr(0) == 0.0);
  c.epochs = 0;
  CHECK_THROWS_AS(c.w_fr(0), NumericError);
}

TEST_CASE("checkpoint selection") {
  CHECK(select_checkpoint(std::vector<double>{3.0, 1.0, 2.0}) == 1);
  CHECK(select_checkpoint(std::vector<double>{5, 4, 3, 2, 1}) == 4);
  std::vector<double> tie(30, 2.0);
  tie[10] = 1.0;
  tie[20] = 1.0;
  CHECK(select_checkpoint(tie) == 10);
  CHECK_THROWS_AS(select_checkpoint(std::vector<double>{}), NumericError);

  std::vector<EpochRecord> recs(3);
  recs[0].val_fr_nll = 1.0;
  recs[1].val_proxy_nll = -1.0;
  recs[2].val_fr_nll = 0.5;
  recs[0].val_proxy_nll = 0.0;
  recs[2].val_proxy_nll = 0.0;
  CHECK(select_checkpoint(recs, HeadKind::kLiquid) == 1);
  recs[1].val_fr_nll = 2.0;
  CHECK(select_checkpoint(recs, HeadKind::kLiquid) == 2);
  CHECK(select_checkpoint(recs, HeadKind::kDiffusion) == 1);
}

TEST_CASE("checkpoint format") {
  Rng rng(4);
  ParamSet<float> params{{"a", Tensor<float>::parameter(normal_matrix<float>(3, 2, rng))},
                         {"b", Tensor<float>::parameter(normal_matrix<float>(1, 5, rng))}};
  OptimizerState<float> opt = OptimizerState<float>::init(params);
  opt.first_moment[0].setConstant(0.25f);
  opt.second_moment[1].setConstant(2.0f);
  opt.step = 17;
  Checkpoint c;
  c.meta["model"] = "liquid";
  put_params(c, params, &opt);
  const std::string bytes = serialize_checkpoint(c);
  const Checkpoint back = parse_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.meta.at("adam_step").get<int>() == 17);

  ParamSet<float> other{{"a", Tensor<float>::parameter(Matrix<float>::Zero(3, 2))},
                        {"b", Tensor<float>::parameter(Matrix<float>::Zero(1, 5))}};
  OptimizerState<float> opt2 = OptimizerState<float>::init(other);
  get_params(back, other, &opt2);
  CHECK(other[0].tensor.value() == params[0].tensor.value());
  CHECK(other[1].tensor.value() == params[1].tensor.value());
  CHECK(opt2.first_moment[0] == opt.first_moment[0]);
  CHECK(opt2.second_moment[1] == opt.second_moment[1]);
  CHECK(opt2.step == 17);

  ParamSet<float> wrong{{"a", Tensor<float>::parameter(Matrix<float>::Zero(2, 3))}};
  CHECK_THROWS_AS(get_params(back, wrong), CheckpointError);
  ParamSet<float> missing{{"zz", Tensor<float>::parameter(Matrix<float>::Zero(1, 1))}};
  CHECK_THROWS_AS(get_params(back, missing), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 2)), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint("{}\n"), CheckpointError);
}

TEST_CASE("one epoch takes ceil(N/64) steps with clipped gradients") {
  const Fixture f = small_fixture(40);
  for (Index n : {Index{1}, Index{64}, Index{65}, Index{100}}) {
    TrainConfig tc;
    tc.epochs = 1;
    const LatentWindows sub = first_rows(f.train, n);
    LiquidHead<float> liq = make_liquid<float>(f.models, 2);
    double max_norm = 0.0;
    const auto obs = [&](int, Index, double norm) { max_norm = std::max(max_norm, norm); };
    const TrainResult r = train_liquid(liq, sub, f.val, tc, obs);
    CHECK(r.optimizer_steps == (n + 63) / 64);
    CHECK(r.records.size() == 1);
    CHECK(r.records[0].steps == (n + 63) / 64);
    CHECK(max_norm <= 1.0 + 1e-6);
    DiffusionHead<float> diff = make_diffusion<float>(f.models, 2);
    CHECK(train_diffusion(diff, sub, f.val, tc).optimizer_steps == (n + 63) / 64);
  }
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const Fixture f = small_fixture(20);
  TrainConfig tc;
  tc.epochs = 2;
  tc.adam.peak_lr = 0.0;
  tc.floor_lr = 0.0;
  LiquidHead<float> liq = make_liquid<float>(f.models, 5);
  std::vector<Matrix<float>> before;
  for (const auto& p : liq.params()) before.push_back(p.tensor.value());
  train_liquid(liq, f.train, f.val, tc);
  const auto after = liq.params();
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i].tensor.value() == before[i]);

  DiffusionHead<float> diff = make_diffusion<float>(f.models, 5);
  before.clear();
  for (const auto& p : diff.params()) before.push_back(p.tensor.value());
  train_diffusion(diff, f.train, f.val, tc);
  const auto dafter = diff.params();
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(dafter[i].tensor.value() == before[i]);
}

TEST_CASE("fixed seed gives identical records and checkpoints") {
  const Fixture f = small_fixture(20);
  for (HeadKind kind : {HeadKind::kLiquid, HeadKind::kDiffusion}) {
    std::vector<std::string> bytes;
    std::vector<std::vector<EpochRecord>> recs;
    for (int run = 0; run < 2; ++run) {
      TrainConfig tc;
      tc.epochs = 3;
      tc.out_dir = scratch(std::string(head_name(kind)) + std::to_string(run));
      TrainResult r;
      if (kind == HeadKind::kLiquid) {
        LiquidHead<float> h = make_liquid<float>(f.models, 9);
        r = train_liquid(h, f.train, f.val, tc);
      } else {
        DiffusionHead<float> h = make_diffusion<float>(f.models, 9);
        r = train_diffusion(h, f.train, f.val, tc);
      }
      recs.push_back(r.records);
      bytes.push_back(read_file(tc.out_dir + "/last.ckpt") + read_file(tc.out_dir + "/best.ckpt"));
      CHECK(fs::exists(tc.out_dir + "/train_log.jsonl"));
      fs::remove_all(tc.out_dir);
    }
    CHECK(bytes[0] == bytes[1]);
    REQUIRE(recs[0].size() == 3);
    for (std::size_t e = 0; e < 3; ++e) CHECK(recs[0][e].same_values(recs[1][e]));
  }
}

TEST_CASE("resume after interruption is bit-identical") {
  const Fixture f = small_fixture(20);
  for (HeadKind kind : {HeadKind::kLiquid, HeadKind::kDiffusion}) {
    TrainConfig tc;
    tc.epochs = 4;
    tc.config_hash = "abc";
    const auto run = [&](const TrainConfig& c, const StepObserver& obs) {
      if (kind == HeadKind::kLiquid) {
        LiquidHead<float> h = make_liquid<float>(f.models, 3);
        return train_liquid(h, f.train, f.val, c, obs);
      }
      DiffusionHead<float> h = make_diffusion<float>(f.models, 3);
      return train_diffusion(h, f.train, f.val, c, obs);
    };
    TrainConfig straight = tc;
    straight.out_dir = scratch("straight");
    const TrainResult ref = run(straight, {});

    TrainConfig broken = tc;
    broken.out_dir = scratch("broken");
    broken.resume = true;
    const auto crash = [](int epoch, Index, double) {
      if (epoch == 2) throw std::runtime_error("simulated crash");
    };
    CHECK_THROWS_AS(run(broken, crash), std::runtime_error);
    const TrainResult resumed = run(broken, {});
    CHECK(resumed.epochs_run == 2);
    REQUIRE(resumed.records.size() == 4);
    for (std::size_t e = 0; e < 4; ++e) CHECK(resumed.records[e].same_values(ref.records[e]));
    CHECK(read_file(broken.out_dir + "/last.ckpt") == read_file(straight.out_dir + "/last.ckpt"));
    CHECK(read_file(broken.out_dir + "/best.ckpt") == read_file(straight.out_dir + "/best.ckpt"));

    TrainConfig other = broken;
    other.config_hash = "different";
    CHECK_THROWS_AS(run(other, {}), CheckpointError);
    fs::remove_all(straight.out_dir);
    fs::remove_all(broken.out_dir);
  }
}

TEST_CASE("non-finite loss names the batch") {
  Fixture f = small_fixture(20);
  f.train.act(70, 3) = std::numeric_limits<float>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 1;
  tc.seed = 0;
  LiquidHead<float> liq = make_liquid<float>(f.models, 1);
  try {
    train_liquid(liq, f.train, f.val, tc);
    FAIL("expected an exception");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
  }
}

TEST_CASE("diffusion training beats the zero predictor") {
  const Fixture f = small_fixture(60, 16);
  TrainConfig tc;
  tc.epochs = 15;
  tc.adam.peak_lr = 3e-3;
  DiffusionHead<float> diff = make_diffusion<float>(f.models, 7);
  const TrainResult r = train_diffusion(diff, f.train, f.val, tc);
  // A constant-zero noise prediction scores E|eps|^2 = 1 per entry; the
  // baseline is measured on the same draws.
  Rng rng(derive_seed(tc.seed, {0xde1u}));
  double zero_baseline = 0.0;
  const LatentWindows v = cap_rows(f.val, tc.val_cap);
  {
    const DenoiserFn<float> zero = [](const Matrix<float>& x, const std::vector<int>&) {
      return Matrix<float>::Zero(x.rows(), x.cols()).eval();
    };
    std::vector<int> t(static_cast<std::size_t>(v.size()));
    for (auto& s : t) s = 1;
    zero_baseline = denoise_mse<float>(zero, v.act, t, normal_matrix<float>(v.size(), v.act.cols(), rng),
                                       diff.schedule());
  }
  CHECK(zero_baseline == doctest::Approx(1.0).epsilon(0.05));
  CHECK(r.records.back().val_denoise < zero_baseline);
  CHECK(r.records.back().val_denoise < r.records.front().val_denoise);
}

TEST_CASE("liquid validation metrics are order invariant") {
  const Fixture f = small_fixture(20);
  const LiquidHead<float> liq = make_liquid<float>(f.models, 8);
  LatentWindows rev = f.val;
  rev.ctx = f.val.ctx.colwise().reverse();
  rev.act = f.val.act.colwise().reverse();
  CHECK(mean_tf_nll(liq, rev) == doctest::Approx(mean_tf_nll(liq, f.val)).epsilon(1e-5));
  CHECK(mean_fr_nll(liq, rev) == doctest::Approx(mean_fr_nll(liq, f.val)).epsilon(1e-5));
  CHECK(cap_rows(f.val, 5).size() == 5);
  CHECK(cap_rows(f.val, 100000).size() == f.val.size());
}

TEST_CASE("default model sizes") {
  ModelConfig mc = resolve_models({}, 6, 2, 2, 16);
  CHECK(mc.liquid.hidden == 120);
  CHECK(mc.diffusion.width > 0);
  const ParamCounts pc = param_counts(mc);
  CHECK(pc.ratio() >= 0.45);
  CHECK(pc.ratio() <= 0.55);
  CHECK(parse_head("liquid") == HeadKind::kLiquid);
  CHECK_THROWS_AS(parse_head("gru"), std::invalid_argument);
}
