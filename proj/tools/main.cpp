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

#include "CLI11.hpp"
#include "json.hpp"

#include <Eigen/Core>

#include <cstdlib>
#include <iostream>

using nlohmann::json;

namespace {

int thread_cap() {
  const char* env = std::getenv("LIQUIDBENCH_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) {
    throw lqb::ExperimentError("config", std::string("LIQUIDBENCH_THREADS must be a positive integer, got '") + env + "'");
  }
  return static_cast<int>(n);
}

int fail(const std::string& command, const std::string& kind, const std::string& message) {
  const json err = {{"error", {{"command", command}, {"kind", kind}, {"message", message}}}};
  std::cerr << err.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"liquidbench: liquid vs diffusion policy heads under a shared backbone"};
  app.require_subcommand(1);

  std::string config_path, out = "runs/default", model, policy;
  std::uint64_t seed = 42;
  bool fast = false, force = false;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Run seed (default 42)");
  app.add_option("--model", model, "Head to act on")->check(CLI::IsMember({"liquid", "diffusion"}));
  app.add_flag("--fast", fast, "30-epoch profile");
  app.add_flag("--force", force, "Overwrite existing outputs");
  app.add_option("--out", out, "Output directory")->capture_default_str();

  auto* gen = app.add_subcommand("gen", "Generate, window, normalize and cache the dataset");
  auto* train = app.add_subcommand("train", "Train one head on the cached dataset");
  auto* eval = app.add_subcommand("eval", "Evaluate trained heads on the test split");
  auto* sweep = app.add_subcommand("sweep", "Sample-efficiency sweep over the fixed training fractions");
  auto* roll = app.add_subcommand("rollout", "Closed-loop episodes in the maze world");
  roll->add_option("--policy", policy, "expert, random, liquid or diffusion (defaults to --model)")
      ->check(CLI::IsMember({"expert", "random", "liquid", "diffusion"}));
  auto* theory = app.add_subcommand("theory", "Step-count error study on linear systems");
  auto* report = app.add_subcommand("report", "Collect emitted artifacts into report.md");
  for (auto* s : {gen, train, eval, sweep, roll, theory, report}) s->fallthrough();

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    const int threads = thread_cap();
    Eigen::setNbThreads(1);
    lqb::RunConfig cfg = config_path.empty() ? lqb::RunConfig{} : lqb::load_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (fast) cfg.fast = true;
    cfg.validate();

    json result;
    if (command == "gen") {
      result = lqb::cmd_gen(cfg, out, force);
    } else if (command == "train") {
      if (model.empty()) throw lqb::ExperimentError("config", "train needs --model liquid|diffusion");
      result = lqb::cmd_train(cfg, lqb::parse_head(model), out, force);
    } else if (command == "eval") {
      std::optional<lqb::HeadKind> only;
      if (!model.empty()) only = lqb::parse_head(model);
      result = lqb::cmd_eval(cfg, out, only);
    } else if (command == "sweep") {
      result = lqb::cmd_sweep(cfg, out, force, threads);
    } else if (command == "rollout") {
      const std::string p = !policy.empty() ? policy : !model.empty() ? model : "liquid";
      result = lqb::cmd_rollout(cfg, p, out);
    } else if (command == "theory") {
      result = lqb::cmd_theory(cfg, out);
    } else {
      result = lqb::cmd_report(cfg, out);
    }
    std::cout << result.dump(2) << std::endl;
    return 0;
  } catch (const lqb::ExperimentError& e) {
    return fail(command, e.kind(), e.what());
  } catch (const lqb::NumericError& e) {
    return fail(command, "numeric", e.what());
  } catch (const lqb::CheckpointError& e) {
    return fail(command, "checkpoint", e.what());
  } catch (const lqb::IoError& e) {
    return fail(command, "io", e.what());
  } catch (const std::exception& e) {
    return fail(command, "internal", e.what());
  }
}
