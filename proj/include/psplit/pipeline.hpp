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

// The operator pipeline behind the command-line tool: corpus generation,
// supervised pretraining, RL training with checkpoint/resume, evaluation and
// analysis. Every output file is a pure function of the configuration; wall
// clock timestamps only ever reach <out_dir>/run.log.

#ifndef PSPLIT_PIPELINE_HPP_
#define PSPLIT_PIPELINE_HPP_

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "psplit/analysis.hpp"
#include "psplit/checkpoint.hpp"
#include "psplit/config.hpp"
#include "psplit/environment.hpp"
#include "psplit/errors.hpp"
#include "psplit/policy.hpp"
#include "psplit/trainer.hpp"

namespace psplit {

namespace fs = std::filesystem;

struct RunPaths {
  fs::path root;
  fs::path train_corpus() const { return root / "corpus" / "train.tsv"; }
  fs::path eval_corpus() const { return root / "corpus" / "eval.tsv"; }
  fs::path pretrain_checkpoint() const { return root / "pretrain.ckpt"; }
  fs::path train_dir() const { return root / "train"; }
  fs::path metrics() const { return train_dir() / "metrics.csv"; }
  fs::path latest_checkpoint() const { return train_dir() / "latest.ckpt"; }
  fs::path latest_optimizer() const { return train_dir() / "latest.opt"; }
  fs::path step_checkpoint(std::int64_t step) const {
    std::ostringstream name;
    name << "step_" << std::setw(6) << std::setfill('0') << step << ".ckpt";
    return train_dir() / name.str();
  }
  fs::path analysis_dir() const { return root / "analysis"; }
  fs::path log() const { return root / "run.log"; }
  fs::path effective_config() const { return root / "effective_config.txt"; }
};

inline RunPaths paths_of(const RunConfig& cfg) { return {fs::path(cfg.out_dir)}; }

// Fingerprint of the settings that shape a run's outputs. Locations, worker
// counts and the step horizon are excluded so that relocated, parallel or
// resumed runs produce identical bytes.
inline std::uint64_t output_fingerprint(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.out_dir = "-";
  c.init_checkpoint.clear();
  c.train.workers = 1;
  c.steps = 0;
  c.checkpoint_every = 1;
  return config_hash(c);
}

class RunLog {
 public:
  explicit RunLog(const RunConfig& cfg) : path_(paths_of(cfg).log()) { fs::create_directories(path_.parent_path()); }

  void operator()(const std::string& message) const {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to " + path_.string());
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << message << '\n';
  }

 private:
  fs::path path_;
};

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline void echo_config(const RunConfig& cfg) { write_text_file(paths_of(cfg).effective_config(), format_config(cfg)); }

// ---------------------------------------------------------------------------
// gen-corpus

struct CorpusSplits {
  std::vector<Query> train;
  std::vector<Query> eval;
};

inline CorpusSplits make_corpus(const RunConfig& cfg) {
  return {generate_corpus(cfg.train.seed, Split::kTrain, cfg.task_kind, cfg.difficulty, cfg.train_queries,
                          cfg.train.max_len),
          generate_corpus(cfg.train.seed, Split::kEval, cfg.task_kind, cfg.difficulty, cfg.eval_queries,
                          cfg.train.max_len)};
}

inline CorpusSplits cmd_gen_corpus(const RunConfig& cfg) {
  cfg.validate();
  const auto paths = paths_of(cfg);
  RunLog log(cfg);
  echo_config(cfg);
  auto splits = make_corpus(cfg);
  fs::create_directories(paths.train_corpus().parent_path());
  write_query_file(paths.train_corpus().string(), splits.train);
  write_query_file(paths.eval_corpus().string(), splits.eval);
  log("gen-corpus: " + std::to_string(splits.train.size()) + " train / " + std::to_string(splits.eval.size()) +
      " eval queries");
  return splits;
}

inline std::vector<Query> read_split(const RunConfig& cfg, Split split) {
  const auto paths = paths_of(cfg);
  const auto path = split == Split::kTrain ? paths.train_corpus() : paths.eval_corpus();
  if (!fs::exists(path)) throw IoError("corpus file " + path.string() + " is missing; run gen-corpus first");
  return read_query_file(path.string());
}

inline std::vector<Query> evaluation_queries(const RunConfig& cfg) {
  return read_split(cfg, cfg.eval_split == "eval" ? Split::kEval : Split::kTrain);
}

// ---------------------------------------------------------------------------
// pretrain

// One canonical solution per training query, presented both without a prefix
// and under the high-entropy prefix: the pretrained policy starts out
// ignoring the prefix.
inline std::vector<PretrainExample> pretrain_dataset(std::span<const Query> queries, int max_len) {
  std::vector<PretrainExample> out;
  out.reserve(2 * queries.size());
  for (const auto& q : queries) {
    const auto target = canonical_solution(q, max_len);
    for (const auto& mode : {Mode::normal(), Mode::high_entropy()}) out.push_back({Context{mode, q.query_tokens, {}}, target});
  }
  return out;
}

inline double greedy_accuracy(const PolicyParameters& params, std::span<const Query> queries, int max_len) {
  if (queries.empty()) return 0.0;
  double solved = 0.0;
  for (const auto& q : queries) {
    solved += verify(q, greedy_decode(params, Context{Mode::normal(), q.query_tokens, {}}, max_len)).reward;
  }
  return solved / static_cast<double>(queries.size());
}

struct PretrainSummary {
  PretrainResult result;
  double greedy_train_accuracy = 0.0;
  double greedy_eval_accuracy = 0.0;
};

inline PretrainSummary pretrain_policy(const RunConfig& cfg, std::span<const Query> train,
                                       std::span<const Query> eval) {
  const auto init = init_parameters(cfg.policy_spec(),
                                    derive_seed({cfg.train.seed, static_cast<std::uint64_t>(Stream::kInit)}));
  const auto data = pretrain_dataset(train, cfg.train.max_len);
  PretrainSummary s;
  s.result = supervised_pretrain(init, data, cfg.pretrain_steps, cfg.pretrain_lr);
  s.greedy_train_accuracy = greedy_accuracy(s.result.params, train, cfg.train.max_len);
  s.greedy_eval_accuracy = greedy_accuracy(s.result.params, eval, cfg.train.max_len);
  return s;
}

inline PretrainSummary cmd_pretrain(const RunConfig& cfg, std::ostream& out = std::cout) {
  cfg.validate();
  const auto paths = paths_of(cfg);
  RunLog log(cfg);
  echo_config(cfg);
  const auto train = read_split(cfg, Split::kTrain);
  const auto eval = read_split(cfg, Split::kEval);
  auto s = pretrain_policy(cfg, train, eval);
  save_checkpoint(paths.pretrain_checkpoint().string(), {s.result.params, output_fingerprint(cfg)});
  out << std::setprecision(6) << "pretrain: mean entropy " << s.result.mean_entropy_bits << " bits, greedy accuracy "
      << s.greedy_train_accuracy << " (train) " << s.greedy_eval_accuracy << " (eval)\n";
  if (s.result.warning) std::cerr << "warning: " << *s.result.warning << '\n';
  log("pretrain: wrote " + paths.pretrain_checkpoint().string());
  return s;
}

// ---------------------------------------------------------------------------
// train

struct TrainSummary {
  TrainingState state;
  std::int64_t resumed_from = 0;
  DiscoveryLog discoveries;  // steps run by this invocation only
};

inline PolicyParameters initial_policy(const RunConfig& cfg) {
  const auto path = cfg.init_checkpoint.empty() ? paths_of(cfg).pretrain_checkpoint() : fs::path(cfg.init_checkpoint);
  if (!fs::exists(path)) throw IoError("initial checkpoint " + path.string() + " is missing; run pretrain first");
  auto params = load_checkpoint(path.string()).params;
  if (!(params.spec == cfg.policy_spec())) {
    throw ConfigError("checkpoint " + path.string() + " does not match the configured architecture");
  }
  return params;
}

namespace detail {

// Keeps only the header and rows for steps before `step`.
inline void truncate_metrics(const fs::path& path, std::int64_t step) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metrics " + path.string() + " while resuming");
  std::string text, line;
  std::getline(in, line);
  if (line != kMetricsHeader) throw ValidationError(path.string() + ": unexpected metrics header");
  text = line + "\n";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) < step) text += line + "\n";
  }
  in.close();
  write_text_file(path, text);
}

}  // namespace detail

inline TrainSummary cmd_train(const RunConfig& cfg) {
  cfg.validate();
  const auto paths = paths_of(cfg);
  RunLog log(cfg);
  echo_config(cfg);
  const auto corpus = read_split(cfg, Split::kTrain);
  const auto fingerprint = output_fingerprint(cfg);

  TrainSummary summary;
  auto& state = summary.state;
  fs::create_directories(paths.train_dir());
  if (fs::exists(paths.latest_checkpoint()) && fs::exists(paths.latest_optimizer())) {
    const auto ckpt = load_checkpoint(paths.latest_checkpoint().string());
    if (ckpt.config_hash != fingerprint) {
      throw ConfigError("cannot resume from " + paths.latest_checkpoint().string() +
                        ": it was written under a different configuration");
    }
    state = TrainingState::start(ckpt.params);
    state.moments = load_optimizer_state(paths.latest_optimizer().string(), &state.step);
    state.validate();
    detail::truncate_metrics(paths.metrics(), state.step);
    summary.resumed_from = state.step;
    log("train: resuming at step " + std::to_string(state.step));
  } else {
    state = TrainingState::start(initial_policy(cfg));
    write_text_file(paths.metrics(), std::string(kMetricsHeader) + "\n");
  }

  auto save = [&](bool cadence_point) {
    const Checkpoint ckpt{state.params, fingerprint};
    if (cadence_point) save_checkpoint(paths.step_checkpoint(state.step).string(), ckpt);
    save_checkpoint(paths.latest_checkpoint().string(), ckpt);
    save_optimizer_state(paths.latest_optimizer().string(), state.moments, state.step);
  };

  std::ofstream metrics(paths.metrics(), std::ios::app);
  if (!metrics) throw IoError("cannot append to " + paths.metrics().string());
  while (state.step < cfg.steps) {
    const auto batch = select_batch(corpus, state.step, cfg.train.batch_queries, cfg.train.seed);
    const PolicyParameters before = state.params;
    try {
      const auto report = train_step(state, batch, cfg.train);
      summary.discoveries.record(report.groups);
      metrics << format_metrics_row(report.metrics) << '\n';
    } catch (const NumericError& e) {
      const auto dump = paths.train_dir() / ("abort_step_" + std::to_string(state.step) + ".txt");
      std::ostringstream os;
      os << "numeric abort at step " << state.step << ": " << e.what() << "\nrollouts of the failing batch:\n";
      write_rollout_dump(os, collect_groups(before, batch, cfg.train, state.step));
      write_text_file(dump, os.str());
      log("train: numeric abort, diagnostic dump at " + dump.string());
      throw;
    }
    if (state.step % cfg.checkpoint_every == 0 || state.step == cfg.steps) {
      metrics.flush();
      save(state.step % cfg.checkpoint_every == 0);
    }
  }
  log("train: finished at step " + std::to_string(state.step));
  return summary;
}

// ---------------------------------------------------------------------------
// eval / analyze

inline EvalOptions eval_options(const RunConfig& cfg) {
  EvalOptions opts;
  opts.runs = cfg.eval_runs;
  opts.max_len = cfg.train.max_len;
  opts.seed = cfg.train.seed;
  opts.workers = cfg.train.workers;
  return opts;
}

struct AnalysisReport {
  std::vector<MetricsRecord> records;
  std::vector<ProbeResult> probes;
  InterModeKl kl;
};

inline AnalysisReport analyze_checkpoint(const RunConfig& cfg, const PolicyParameters& params,
                                         std::span<const Query> queries, const std::string& checkpoint_id,
                                         bool with_probes) {
  AnalysisReport rep;
  const auto opts = eval_options(cfg);
  rep.kl = inter_mode_kl(params, queries, cfg.kl_budget, cfg.train.max_len, cfg.train.seed, cfg.train.workers);
  rep.records.push_back(analyze_mode(params, queries, Mode::normal(), opts, checkpoint_id, 0.0));
  rep.records.push_back(analyze_mode(params, queries, Mode::high_entropy(), opts, checkpoint_id, rep.kl.exact));
  if (with_probes) {
    const auto probes = cfg.probes();
    rep.probes = prompt_generalization_probe(params, queries, probes, opts);
    for (const auto& id : probes) {
      if (id == kHighEntropyPrefix) continue;  // already reported as high_entropy
      rep.records.push_back(analyze_mode(params, queries, Mode::named(id), opts, checkpoint_id, 0.0));
    }
  }
  return rep;
}

inline AnalysisReport cmd_analyze(const RunConfig& cfg, const std::string& checkpoint_path, bool with_probes = true,
                                  std::ostream& out = std::cout) {
  cfg.validate();
  const auto paths = paths_of(cfg);
  RunLog log(cfg);
  const auto params = load_checkpoint(checkpoint_path).params;
  const auto queries = evaluation_queries(cfg);
  const std::string id = fs::path(checkpoint_path).stem().string();
  auto rep = analyze_checkpoint(cfg, params, queries, id, with_probes);
  const std::string stem = (with_probes ? "analysis_" : "eval_") + id;
  std::ostringstream csv, txt;
  write_report_csv(csv, rep.records);
  write_summary(txt, rep.records, rep.probes, cfg.eval_runs);
  write_text_file(paths.analysis_dir() / (stem + ".csv"), csv.str());
  write_text_file(paths.analysis_dir() / (stem + ".txt"), txt.str());
  out << txt.str();
  log("analyze: " + checkpoint_path + " -> " + (paths.analysis_dir() / (stem + ".csv")).string());
  return rep;
}

}  // namespace psplit

#endif  // PSPLIT_PIPELINE_HPP_
