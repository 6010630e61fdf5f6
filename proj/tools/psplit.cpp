// Copyright 2026 The psplit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// psplit: corpus generation, pretraining, RL training, evaluation, analysis.
//
//   psplit gen-corpus --config run.cfg
//   psplit pretrain   --config run.cfg
//   psplit train      --config run.cfg --method PolicySplit
//   psplit eval       --config run.cfg [--checkpoint PATH]
//   psplit analyze    --config run.cfg [--checkpoint PATH]
//
// Exit codes: 0 success, 2 validation/configuration error, 3 numeric abort,
// 1 anything else (I/O, resources).

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "psplit/psplit.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::string checkpoint;
};

psplit::RunConfig resolve(const Flags& f) {
  psplit::RunConfig cfg = f.config.empty() ? psplit::RunConfig{} : psplit::load_config(f.config);
  // Flags win over the file.
  if (f.seed) cfg.train.seed = *f.seed;
  if (f.method) cfg.train.method = psplit::parse_method(*f.method);
  if (f.out) cfg.out_dir = *f.out;
  if (f.workers) cfg.train.workers = *f.workers;
  if (cfg.train.workers < 1) throw psplit::ConfigError("--workers must be at least 1");
  return cfg;
}

std::string default_checkpoint(const psplit::RunConfig& cfg) {
  const auto paths = psplit::paths_of(cfg);
  if (std::filesystem::exists(paths.latest_checkpoint())) return paths.latest_checkpoint().string();
  return paths.pretrain_checkpoint().string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy Split reinforcement learning on synthetic sequence tasks"};
  app.require_subcommand(1);
  Flags flags;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config, "flat key = value configuration file");
    cmd->add_option("--seed", flags.seed, "top-level seed");
    cmd->add_option("--method", flags.method,
                    "GRPO | EntropyRegularization | EntropyAdvantage | ForkingTokenOnly | ClipCov | "
                    "EntropyDrivenAdvantage | PolicySplit");
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_option("--workers", flags.workers, "worker threads");
  };
  auto* gen = app.add_subcommand("gen-corpus", "write train/eval query files");
  auto* pre = app.add_subcommand("pretrain", "supervised pretraining to a low-entropy checkpoint");
  auto* train = app.add_subcommand("train", "RL training with periodic checkpoints and a metrics CSV");
  auto* eval = app.add_subcommand("eval", "per-mode accuracy, entropy, length and best-of-n");
  auto* analyze = app.add_subcommand("analyze", "eval plus inter-mode KL, diversity and prefix probes");
  for (auto* c : {gen, pre, train, eval, analyze}) add_common(c);
  for (auto* c : {eval, analyze}) c->add_option("--checkpoint", flags.checkpoint, "checkpoint to analyze");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(flags);
    if (gen->parsed()) {
      const auto splits = psplit::cmd_gen_corpus(cfg);
      std::cout << "wrote " << splits.train.size() << " train and " << splits.eval.size() << " eval queries to "
                << (std::filesystem::path(cfg.out_dir) / "corpus").string() << '\n';
    } else if (pre->parsed()) {
      psplit::cmd_pretrain(cfg);
    } else if (train->parsed()) {
      const auto s = psplit::cmd_train(cfg);
      const auto& h = s.state.history;
      std::cout << "trained " << psplit::to_string(cfg.train.method) << " from step " << s.resumed_from << " to "
                << s.state.step;
      if (!h.empty()) std::cout << "; last mean reward " << h.back().mean_reward;
      std::cout << "\nmetrics: " << psplit::paths_of(cfg).metrics().string() << '\n';
    } else {
      const bool full = analyze->parsed();
      const auto path = flags.checkpoint.empty() ? default_checkpoint(cfg) : flags.checkpoint;
      psplit::cmd_analyze(cfg, path, full);
    }
  } catch (const psplit::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const psplit::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const psplit::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const psplit::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
