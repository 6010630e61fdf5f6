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

// Run configuration: a flat `key = value` text file. Unknown keys are
// rejected; every key has a default, and the effective configuration can be
// echoed back out in a form that parses to the same values.

#ifndef PSPLIT_CONFIG_HPP_
#define PSPLIT_CONFIG_HPP_

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "psplit/checkpoint.hpp"
#include "psplit/environment.hpp"
#include "psplit/errors.hpp"
#include "psplit/policy.hpp"
#include "psplit/trainer.hpp"

namespace psplit {

struct RunConfig {
  TrainConfig train;
  Architecture architecture = Architecture::kTabularSoftmax;
  ArchitectureDims dims;
  TaskKind task_kind = TaskKind::kMultiPathSum;
  int difficulty = 2;
  int train_queries = 256;
  int eval_queries = 64;
  std::string eval_split = "train";  // which split eval/analyze report on
  int eval_runs = 8;
  int steps = 200;
  int pretrain_steps = 60;
  double pretrain_lr = 0.05;
  int checkpoint_every = 50;
  int kl_budget = 8;  // HE rollouts per query for the inter-mode KL
  std::string probe_prefixes = "he,he_rewritten,le";
  std::string out_dir = "run";
  std::string init_checkpoint;  // empty: <out_dir>/pretrain.ckpt

  PolicySpec policy_spec() const { return {architecture, dims, Vocabulary::standard()}; }

  std::vector<std::string> probes() const {
    std::vector<std::string> out;
    std::stringstream ss(probe_prefixes);
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  void validate() const {
    train.validate();
    policy_spec().validate();
    if (difficulty < kMinDifficulty || difficulty > kMaxDifficulty) {
      throw ConfigError("difficulty must lie in [" + std::to_string(kMinDifficulty) + ", " +
                        std::to_string(kMaxDifficulty) + "]");
    }
    if (train_queries < 1 || eval_queries < 1) throw ConfigError("corpus sizes must be positive");
    if (eval_split != "train" && eval_split != "eval") throw ConfigError("eval_split must be 'train' or 'eval'");
    if (eval_runs < 1) throw ConfigError("eval_runs must be positive");
    if (steps < 0 || pretrain_steps < 0) throw ConfigError("step counts must be non-negative");
    if (!(pretrain_lr > 0.0)) throw ConfigError("pretrain_lr must be positive");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be positive");
    if (kl_budget < 1) throw ConfigError("kl_budget must be positive");
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
    const auto vocab = Vocabulary::standard();
    for (const auto& p : probes()) {
      if (!vocab.reserved_prefixes.count(p)) throw ConfigError("probe prefix '" + p + "' is not in the vocabulary");
    }
  }
};

namespace detail {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(text) + "'");
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct ConfigKey {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define PSPLIT_INT_KEY(NAME, FIELD)                                                              \
  ConfigKey {                                                                                    \
    NAME, [](const RunConfig& c) { return std::to_string(c.FIELD); },                            \
        [](RunConfig& c, std::string_view v) { c.FIELD = parse_number<decltype(c.FIELD)>(NAME, v); } \
  }
#define PSPLIT_REAL_KEY(NAME, FIELD)                                                          \
  ConfigKey {                                                                                 \
    NAME, [](const RunConfig& c) { return format_double(c.FIELD); },                          \
        [](RunConfig& c, std::string_view v) { c.FIELD = parse_number<double>(NAME, v); }     \
  }
#define PSPLIT_BOOL_KEY(NAME, FIELD)                                                          \
  ConfigKey {                                                                                 \
    NAME, [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); },        \
        [](RunConfig& c, std::string_view v) { c.FIELD = parse_bool(NAME, v); }               \
  }
#define PSPLIT_STRING_KEY(NAME, FIELD)                                                        \
  ConfigKey {                                                                                 \
    NAME, [](const RunConfig& c) { return c.FIELD; },                                         \
        [](RunConfig& c, std::string_view v) { c.FIELD = std::string(v); }                    \
  }

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"method", [](const RunConfig& c) { return std::string(to_string(c.train.method)); },
       [](RunConfig& c, std::string_view v) { c.train.method = parse_method(std::string(v)); }},
      PSPLIT_REAL_KEY("eta", train.eta),
      PSPLIT_REAL_KEY("eta_prime", train.eta_prime),
      PSPLIT_REAL_KEY("alpha", train.alpha),
      PSPLIT_REAL_KEY("kappa", train.kappa),
      PSPLIT_REAL_KEY("epsilon_ppo", train.epsilon_ppo),
      PSPLIT_REAL_KEY("ent_reg_coef", train.ent_reg_coef),
      PSPLIT_REAL_KEY("ent_adv_alpha", train.ent_adv_alpha),
      PSPLIT_REAL_KEY("forking_keep", train.forking_keep),
      PSPLIT_REAL_KEY("clipcov_ratio", train.clipcov_ratio),
      PSPLIT_REAL_KEY("clipcov_lower", train.clipcov_lower),
      PSPLIT_REAL_KEY("clipcov_upper", train.clipcov_upper),
      PSPLIT_INT_KEY("group_size", train.group_size),
      PSPLIT_INT_KEY("batch_queries", train.batch_queries),
      PSPLIT_REAL_KEY("lr", train.lr),
      PSPLIT_REAL_KEY("weight_decay", train.weight_decay),
      PSPLIT_REAL_KEY("clip_norm", train.clip_norm),
      PSPLIT_INT_KEY("max_len", train.max_len),
      PSPLIT_REAL_KEY("temperature_train", train.temperature_train),
      PSPLIT_INT_KEY("seed", train.seed),
      PSPLIT_BOOL_KEY("sharing", train.sharing),
      PSPLIT_INT_KEY("workers", train.workers),
      {"architecture", [](const RunConfig& c) { return std::string(to_string(c.architecture)); },
       [](RunConfig& c, std::string_view v) { c.architecture = parse_architecture(std::string(v)); }},
      PSPLIT_INT_KEY("context_window", dims.context_window),
      PSPLIT_INT_KEY("table_rows", dims.table_rows),
      PSPLIT_INT_KEY("embed_dim", dims.embed_dim),
      PSPLIT_INT_KEY("hidden_width", dims.hidden_width),
      PSPLIT_BOOL_KEY("prefix_sensitive", dims.prefix_sensitive),
      {"task_kind", [](const RunConfig& c) { return std::string(to_string(c.task_kind)); },
       [](RunConfig& c, std::string_view v) { c.task_kind = parse_task_kind(std::string(v)); }},
      PSPLIT_INT_KEY("difficulty", difficulty),
      PSPLIT_INT_KEY("train_queries", train_queries),
      PSPLIT_INT_KEY("eval_queries", eval_queries),
      PSPLIT_STRING_KEY("eval_split", eval_split),
      PSPLIT_INT_KEY("eval_runs", eval_runs),
      PSPLIT_INT_KEY("steps", steps),
      PSPLIT_INT_KEY("pretrain_steps", pretrain_steps),
      PSPLIT_REAL_KEY("pretrain_lr", pretrain_lr),
      PSPLIT_INT_KEY("checkpoint_every", checkpoint_every),
      PSPLIT_INT_KEY("kl_budget", kl_budget),
      PSPLIT_STRING_KEY("probe_prefixes", probe_prefixes),
      PSPLIT_STRING_KEY("out_dir", out_dir),
      PSPLIT_STRING_KEY("init_checkpoint", init_checkpoint),
  };
  return keys;
}

#undef PSPLIT_INT_KEY
#undef PSPLIT_REAL_KEY
#undef PSPLIT_BOOL_KEY
#undef PSPLIT_STRING_KEY

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& k : detail::config_keys()) {
    if (k.name == key) {
      k.set(cfg, detail::trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

// Applies `key = value` lines on top of `base`. '#' starts a comment.
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_config_value(base, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_config(ss.str());
  if (!cfg.init_checkpoint.empty() && !std::filesystem::exists(cfg.init_checkpoint)) {
    throw ConfigError("init_checkpoint '" + cfg.init_checkpoint + "' does not exist");
  }
  return cfg;
}

// Every key with its effective value, one per line, in a fixed order.
inline std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : detail::config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

inline std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(format_config(cfg)); }

}  // namespace psplit

#endif  // PSPLIT_CONFIG_HPP_
