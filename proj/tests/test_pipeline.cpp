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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "psplit/pipeline.hpp"

#ifndef PSPLIT_CLI_PATH
#error "PSPLIT_CLI_PATH must point at the command-line tool"
#endif

namespace psplit {
namespace {

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path Fresh(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("psplit_pipeline_" + name);
  fs::remove_all(dir);
  return dir;
}

RunConfig Small(const fs::path& dir) {
  RunConfig cfg;
  cfg.dims.table_rows = 4099;
  cfg.difficulty = 1;
  cfg.train_queries = 16;
  cfg.eval_queries = 8;
  cfg.pretrain_steps = 20;
  cfg.steps = 4;
  cfg.checkpoint_every = 2;
  cfg.train.batch_queries = 4;
  cfg.eval_runs = 2;
  cfg.kl_budget = 2;
  cfg.out_dir = dir.string();
  return cfg;
}

void Prepare(const RunConfig& cfg) {
  std::ostringstream sink;
  cmd_gen_corpus(cfg);
  cmd_pretrain(cfg, sink);
}

TEST(Pipeline, EndToEndWritesExpectedFiles) {
  const auto dir = Fresh("e2e");
  const auto cfg = Small(dir);
  Prepare(cfg);
  const auto s = cmd_train(cfg);
  EXPECT_EQ(s.state.step, 4);
  const auto paths = paths_of(cfg);
  for (const auto& p : {paths.train_corpus(), paths.eval_corpus(), paths.pretrain_checkpoint(), paths.metrics(),
                        paths.latest_checkpoint(), paths.latest_optimizer(), paths.step_checkpoint(2),
                        paths.step_checkpoint(4), paths.effective_config(), paths.log()}) {
    EXPECT_TRUE(fs::exists(p)) << p;
  }
  // Header plus one row per step.
  std::istringstream metrics(Slurp(paths.metrics()));
  std::string line;
  int rows = -1;
  while (std::getline(metrics, line)) ++rows;
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(parse_config(Slurp(paths.effective_config())).train.seed, cfg.train.seed);

  std::ostringstream sink;
  const auto rep = cmd_analyze(cfg, paths.latest_checkpoint().string(), true, sink);
  // normal, high_entropy and the two held-out prefixes.
  ASSERT_EQ(rep.records.size(), 4u);
  EXPECT_EQ(rep.probes.size(), 3u);
  const auto csv = Slurp(paths.analysis_dir() / "analysis_latest.csv");
  EXPECT_EQ(csv.rfind(std::string(kReportHeader) + "\n", 0), 0u);
  fs::remove_all(dir);
}

TEST(Pipeline, RerunIsByteIdentical) {
  const auto a = Fresh("det_a"), b = Fresh("det_b");
  auto ca = Small(a), cb = Small(b);
  cb.train.workers = 3;
  for (const auto& cfg : {ca, cb}) {
    Prepare(cfg);
    cmd_train(cfg);
  }
  EXPECT_EQ(Slurp(paths_of(ca).metrics()), Slurp(paths_of(cb).metrics()));
  EXPECT_EQ(Slurp(paths_of(ca).latest_checkpoint()), Slurp(paths_of(cb).latest_checkpoint()));
  EXPECT_EQ(Slurp(paths_of(ca).train_corpus()), Slurp(paths_of(cb).train_corpus()));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, ResumeMatchesUninterruptedRun) {
  const auto a = Fresh("resume_a"), b = Fresh("resume_b");
  const auto full = Small(a);
  Prepare(full);
  cmd_train(full);

  auto part = Small(b);
  Prepare(part);
  part.steps = 2;
  cmd_train(part);
  part.steps = 4;
  const auto s = cmd_train(part);
  EXPECT_EQ(s.resumed_from, 2);
  EXPECT_EQ(Slurp(paths_of(full).metrics()), Slurp(paths_of(part).metrics()));
  EXPECT_EQ(Slurp(paths_of(full).latest_checkpoint()), Slurp(paths_of(part).latest_checkpoint()));
  EXPECT_EQ(Slurp(paths_of(full).latest_optimizer()), Slurp(paths_of(part).latest_optimizer()));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, ResumeRefusesChangedConfiguration) {
  const auto dir = Fresh("resume_changed");
  auto cfg = Small(dir);
  Prepare(cfg);
  cfg.steps = 2;
  cmd_train(cfg);
  cfg.steps = 4;
  cfg.train.eta = 0.05;
  EXPECT_THROW(cmd_train(cfg), ConfigError);
  fs::remove_all(dir);
}

TEST(Pipeline, MissingInputsAreIoErrors) {
  const auto dir = Fresh("missing");
  const auto cfg = Small(dir);
  std::ostringstream sink;
  EXPECT_THROW(cmd_pretrain(cfg, sink), IoError);
  cmd_gen_corpus(cfg);
  EXPECT_THROW(cmd_train(cfg), IoError);
  fs::remove_all(dir);
}

TEST(Pipeline, ArchitectureMismatchIsRejected) {
  const auto dir = Fresh("arch");
  auto cfg = Small(dir);
  Prepare(cfg);
  cfg.dims.table_rows = 2053;
  EXPECT_THROW(cmd_train(cfg), ConfigError);
  fs::remove_all(dir);
}

int RunCli(const std::string& args) {
  const std::string cmd = std::string(PSPLIT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path WriteConfig(const fs::path& dir, const std::string& extra) {
  fs::create_directories(dir);
  const auto path = dir / "run.cfg";
  std::ofstream out(path);
  out << "table_rows = 4099\ndifficulty = 1\ntrain_queries = 16\neval_queries = 8\npretrain_steps = 20\n"
         "steps = 3\ncheckpoint_every = 3\nbatch_queries = 4\neval_runs = 2\nkl_budget = 2\n"
      << "out_dir = " << (dir / "out").string() << "\n"
      << extra;
  return path;
}

TEST(Cli, FullRunAndFlagPrecedence) {
  const auto dir = Fresh("cli");
  const auto cfg = WriteConfig(dir, "method = GRPO\nseed = 1\n").string();
  ASSERT_EQ(RunCli("gen-corpus --config " + cfg + " --seed 5"), 0);
  ASSERT_EQ(RunCli("pretrain --config " + cfg + " --seed 5"), 0);
  ASSERT_EQ(RunCli("train --config " + cfg + " --seed 5 --method PolicySplit --workers 2"), 0);
  ASSERT_EQ(RunCli("eval --config " + cfg + " --seed 5"), 0);
  ASSERT_EQ(RunCli("analyze --config " + cfg + " --seed 5"), 0);
  const auto effective = parse_config(Slurp(dir / "out" / "effective_config.txt"));
  EXPECT_EQ(effective.train.seed, 5u);
  EXPECT_EQ(effective.train.method, Method::kPolicySplit);
  EXPECT_TRUE(fs::exists(dir / "out" / "analysis" / "analysis_latest.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "analysis" / "eval_latest.csv"));
  const auto metrics = Slurp(dir / "out" / "train" / "metrics.csv");
  EXPECT_NE(metrics.find(",PolicySplit,dual,"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  const auto dir = Fresh("cli_codes");
  EXPECT_EQ(RunCli("gen-corpus --config " + WriteConfig(dir, "bogus_key = 1\n").string()), 2);
  EXPECT_EQ(RunCli("gen-corpus --config " + WriteConfig(dir, "kappa = 0.5\n").string()), 2);
  EXPECT_EQ(RunCli("train --config " + WriteConfig(dir, "").string()), 1);  // no corpus yet
  EXPECT_EQ(RunCli("gen-corpus --config " + (dir / "absent.cfg").string()), 1);
  EXPECT_EQ(RunCli("train --config " + WriteConfig(dir, "").string() + " --method Nope"), 2);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace psplit
