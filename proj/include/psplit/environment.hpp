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

// Synthetic verifiable-reward tasks with brute-force solution oracles.
//
// Response grammar for both families:  step* ANSWER digit+ EOS
//
//   ModularChain   query  a0 op1 a1 op2 a2 ...        (op in {+, *}, mod 10)
//                  steps  the running value after each operation
//   MultiPathSum   query  x1 x2 ... xn = t1 [t2]      (distinct digits 1..9)
//                  steps  operands picked without reuse, summing to the target

#ifndef PSPLIT_ENVIRONMENT_HPP_
#define PSPLIT_ENVIRONMENT_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "psplit/errors.hpp"
#include "psplit/rng.hpp"
#include "psplit/vocabulary.hpp"

namespace psplit {

enum class TaskKind { kModularChain, kMultiPathSum };

inline const char* to_string(TaskKind kind) {
  return kind == TaskKind::kModularChain ? "ModularChain" : "MultiPathSum";
}

inline TaskKind parse_task_kind(const std::string& name) {
  if (name == "ModularChain") return TaskKind::kModularChain;
  if (name == "MultiPathSum") return TaskKind::kMultiPathSum;
  throw ValidationError("unknown task kind '" + name + "'");
}

inline constexpr int kMinDifficulty = 1;
inline constexpr int kMaxDifficulty = 4;
inline constexpr int kModulus = 10;

struct Query {
  std::int64_t id = 0;
  TaskKind task_kind = TaskKind::kModularChain;
  TokenSequence query_tokens;
  int target = 0;
  int difficulty = 1;

  bool operator==(const Query&) const = default;
};

struct VerifierResult {
  double reward = 0.0;
  std::optional<int> parsed_answer;
};

namespace detail {

inline TokenSequence digits_of(int value) {
  TokenSequence out;
  if (value == 0) return {tok::kDigit0};
  while (value > 0) {
    out.push_back(tok::kDigit0 + value % 10);
    value /= 10;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// Operands of a MultiPathSum query (the tokens before '=').
inline std::vector<int> sum_operands(const Query& q) {
  std::vector<int> ops;
  for (Token t : q.query_tokens) {
    if (t == tok::kEquals) break;
    ops.push_back(t - tok::kDigit0);
  }
  return ops;
}

struct ChainInstance {
  std::vector<int> operands;
  std::vector<Token> operators;
};

inline ChainInstance chain_instance(const Query& q) {
  ChainInstance c;
  for (std::size_t i = 0; i < q.query_tokens.size(); ++i) {
    if (i % 2 == 0) {
      c.operands.push_back(q.query_tokens[i] - tok::kDigit0);
    } else {
      c.operators.push_back(q.query_tokens[i]);
    }
  }
  return c;
}

inline std::vector<int> chain_running_values(const ChainInstance& c) {
  std::vector<int> values;
  int acc = c.operands.front();
  for (std::size_t k = 0; k < c.operators.size(); ++k) {
    acc = c.operators[k] == tok::kAdd ? (acc + c.operands[k + 1]) % kModulus
                                      : (acc * c.operands[k + 1]) % kModulus;
    values.push_back(acc);
  }
  return values;
}

// Parses "ANSWER digit+ EOS" starting at pos; the response must end there.
inline std::optional<int> parse_answer_tail(const TokenSequence& r, std::size_t pos) {
  if (pos >= r.size() || r[pos] != tok::kAnswer) return std::nullopt;
  ++pos;
  std::size_t first = pos;
  int value = 0;
  while (pos < r.size() && is_digit_token(r[pos])) {
    if (pos - first >= 3) return std::nullopt;
    value = value * 10 + (r[pos] - tok::kDigit0);
    ++pos;
  }
  if (pos == first) return std::nullopt;
  if (pos - first > 1 && r[first] == tok::kDigit0) return std::nullopt;  // leading zero
  if (pos + 1 != r.size() || r[pos] != tok::kEos) return std::nullopt;
  return value;
}

}  // namespace detail

// Binary reward. Malformed responses score 0, never throw.
inline VerifierResult verify(const Query& query, const TokenSequence& response) {
  VerifierResult result;
  if (response.empty()) return result;
  auto ans_it = std::find(response.begin(), response.end(), tok::kAnswer);
  if (ans_it == response.end()) return result;
  const auto ans_pos = static_cast<std::size_t>(ans_it - response.begin());
  result.parsed_answer = detail::parse_answer_tail(response, ans_pos);
  if (!result.parsed_answer || *result.parsed_answer != query.target) return result;

  if (query.task_kind == TaskKind::kModularChain) {
    const auto expected = detail::chain_running_values(detail::chain_instance(query));
    if (ans_pos != expected.size()) return result;
    for (std::size_t k = 0; k < expected.size(); ++k) {
      if (response[k] != tok::kDigit0 + expected[k]) return result;
    }
    result.reward = 1.0;
    return result;
  }

  std::vector<int> remaining = detail::sum_operands(query);
  if (ans_pos == 0) return result;
  int sum = 0;
  for (std::size_t k = 0; k < ans_pos; ++k) {
    if (!is_digit_token(response[k])) return result;
    const int v = response[k] - tok::kDigit0;
    auto it = std::find(remaining.begin(), remaining.end(), v);
    if (it == remaining.end()) return result;
    remaining.erase(it);
    sum += v;
  }
  if (sum == query.target) result.reward = 1.0;
  return result;
}

// Exact set of reward-1 responses with length <= max_len, by pruned DFS over
// the task grammar. `budget` bounds the number of expanded prefixes.
inline std::set<TokenSequence> enumerate_solutions(const Query& query, int max_len,
                                                   std::int64_t budget = 100'000'000) {
  std::set<TokenSequence> out;
  std::int64_t expanded = 0;
  auto charge = [&] {
    if (++expanded > budget) {
      throw ResourceError("enumerate_solutions: budget of " + std::to_string(budget) +
                          " prefixes exceeded; use a smaller difficulty");
    }
  };
  const TokenSequence tail_digits = detail::digits_of(query.target);
  auto emit = [&](TokenSequence prefix) {
    prefix.push_back(tok::kAnswer);
    prefix.insert(prefix.end(), tail_digits.begin(), tail_digits.end());
    prefix.push_back(tok::kEos);
    if (static_cast<int>(prefix.size()) <= max_len) out.insert(std::move(prefix));
  };

  if (query.task_kind == TaskKind::kModularChain) {
    const auto inst = detail::chain_instance(query);
    TokenSequence prefix;
    int acc = inst.operands.front();
    // Every step has exactly one consistent digit; the DFS still visits all
    // ten candidates per level and prunes the inconsistent ones.
    std::function<void(std::size_t, int)> dfs = [&](std::size_t k, int value) {
      charge();
      if (k == inst.operators.size()) {
        if (value == query.target) emit(prefix);
        return;
      }
      for (int d = 0; d < 10; ++d) {
        const int next = inst.operators[k] == tok::kAdd ? (value + inst.operands[k + 1]) % kModulus
                                                        : (value * inst.operands[k + 1]) % kModulus;
        if (d != next) continue;
        prefix.push_back(tok::kDigit0 + d);
        dfs(k + 1, d);
        prefix.pop_back();
      }
    };
    dfs(0, acc);
    return out;
  }

  const std::vector<int> operands = detail::sum_operands(query);
  std::vector<bool> used(operands.size(), false);
  TokenSequence prefix;
  const int tail = static_cast<int>(tail_digits.size()) + 2;
  std::function<void(int)> dfs = [&](int sum) {
    charge();
    if (sum == query.target && !prefix.empty()) emit(prefix);
    if (static_cast<int>(prefix.size()) + 1 + tail > max_len) return;
    for (std::size_t i = 0; i < operands.size(); ++i) {
      if (used[i] || sum + operands[i] > query.target) continue;
      used[i] = true;
      prefix.push_back(tok::kDigit0 + operands[i]);
      dfs(sum + operands[i]);
      prefix.pop_back();
      used[i] = false;
    }
  };
  dfs(0);
  return out;
}

// Lexicographically smallest correct response.
inline TokenSequence canonical_solution(const Query& query, int max_len) {
  auto solutions = enumerate_solutions(query, max_len);
  if (solutions.empty()) {
    throw ValidationError("canonical_solution: query " + std::to_string(query.id) +
                          " has no solution within max_len");
  }
  return *solutions.begin();
}

inline int response_length_bound(TaskKind kind, int difficulty) {
  return kind == TaskKind::kModularChain ? difficulty + 3 : (difficulty + 2) + 4;
}

// Deterministic per (rng state, kind, difficulty). Retries until the oracle
// certifies the instance; gives up after 100 attempts.
inline Query generate_query(Rng& rng, TaskKind kind, int difficulty, int max_len,
                            std::int64_t id = 0) {
  if (difficulty < kMinDifficulty || difficulty > kMaxDifficulty) {
    throw ConfigError("generate_query: difficulty " + std::to_string(difficulty) +
                      " outside " + std::to_string(kMinDifficulty) + ".." +
                      std::to_string(kMaxDifficulty));
  }
  for (int attempt = 0; attempt < 100; ++attempt) {
    Query q;
    q.id = id;
    q.task_kind = kind;
    q.difficulty = difficulty;
    if (kind == TaskKind::kModularChain) {
      q.query_tokens.push_back(tok::kDigit0 + rng.integer(0, 9));
      for (int k = 0; k < difficulty; ++k) {
        q.query_tokens.push_back(rng.below(2) == 0 ? tok::kAdd : tok::kMul);
        q.query_tokens.push_back(tok::kDigit0 + rng.integer(0, 9));
      }
      q.target = detail::chain_running_values(detail::chain_instance(q)).back();
    } else {
      std::vector<int> pool = {1, 2, 3, 4, 5, 6, 7, 8, 9};
      const int n = difficulty + 2;
      for (int i = 0; i < n; ++i) {
        const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(9 - i)));
        std::swap(pool[i], pool[j]);
      }
      std::vector<int> operands(pool.begin(), pool.begin() + n);
      const int k = rng.integer(2, std::min(n, difficulty + 1));
      q.target = 0;
      for (int i = 0; i < k; ++i) q.target += operands[i];
      // Present operands in a shuffled order independent of the chosen subset.
      for (int i = n - 1; i > 0; --i) {
        std::swap(operands[i], operands[rng.below(static_cast<std::uint64_t>(i + 1))]);
      }
      for (int v : operands) q.query_tokens.push_back(tok::kDigit0 + v);
      q.query_tokens.push_back(tok::kEquals);
      for (Token t : detail::digits_of(q.target)) q.query_tokens.push_back(t);
    }
    const auto solutions = enumerate_solutions(q, max_len);
    const std::size_t needed = kind == TaskKind::kMultiPathSum ? 2 : 1;
    if (solutions.size() >= needed) return q;
  }
  throw ConfigError("generate_query: no certified instance after 100 attempts (kind " +
                    std::string(to_string(kind)) + ", difficulty " + std::to_string(difficulty) +
                    ", max_len " + std::to_string(max_len) + ")");
}

// ---------------------------------------------------------------------------
// Query-set files: one record per line,
//   id <TAB> task_kind <TAB> difficulty <TAB> space-separated tokens <TAB> target

inline std::string format_query_record(const Query& q) {
  std::ostringstream os;
  os << q.id << '\t' << to_string(q.task_kind) << '\t' << q.difficulty << '\t';
  for (std::size_t i = 0; i < q.query_tokens.size(); ++i) {
    if (i) os << ' ';
    os << q.query_tokens[i];
  }
  os << '\t' << q.target;
  return os.str();
}

inline Query parse_query_record(const std::string& line, std::size_t line_no = 0) {
  auto fail = [&](const std::string& what) -> ValidationError {
    return ValidationError("query record line " + std::to_string(line_no) + ": " + what);
  };
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, '\t')) fields.push_back(field);
  if (fields.size() != 5) throw fail("expected 5 tab-separated fields");
  Query q;
  try {
    q.id = std::stoll(fields[0]);
    q.task_kind = parse_task_kind(fields[1]);
    q.difficulty = std::stoi(fields[2]);
    q.target = std::stoi(fields[4]);
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception&) {
    throw fail("non-numeric field");
  }
  std::istringstream ts(fields[3]);
  Token t;
  while (ts >> t) q.query_tokens.push_back(t);
  if (q.query_tokens.empty()) throw fail("empty query tokens");
  for (Token qt : q.query_tokens) {
    if (qt < 0 || qt >= tok::kReservedBegin) throw fail("token out of query range");
  }
  return q;
}

inline void write_query_file(const std::string& path, const std::vector<Query>& queries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& q : queries) out << format_query_record(q) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<Query> read_query_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Query> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    out.push_back(parse_query_record(line, line_no));
  }
  return out;
}

enum class Split { kTrain, kEval };

// Train ids start at 0, eval ids at kEvalIdOffset; the two splits also draw
// from distinct named streams.
inline constexpr std::int64_t kEvalIdOffset = 1'000'000;

inline std::vector<Query> generate_corpus(std::uint64_t seed, Split split, TaskKind kind,
                                          int difficulty, int count, int max_len) {
  std::vector<Query> out;
  out.reserve(static_cast<std::size_t>(count));
  const std::int64_t base = split == Split::kTrain ? 0 : kEvalIdOffset;
  const auto stream = split == Split::kTrain ? Stream::kCorpusTrain : Stream::kCorpusEval;
  for (int i = 0; i < count; ++i) {
    const std::int64_t id = base + i;
    Rng rng({seed, static_cast<std::uint64_t>(stream), static_cast<std::uint64_t>(id)});
    out.push_back(generate_query(rng, kind, difficulty, max_len, id));
  }
  return out;
}

}  // namespace psplit

#endif  // PSPLIT_ENVIRONMENT_HPP_
