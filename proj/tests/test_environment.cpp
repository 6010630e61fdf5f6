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

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "psplit/environment.hpp"

namespace psplit {
namespace {

Query Sum(std::vector<int> operands, int target) {
  Query q;
  q.task_kind = TaskKind::kMultiPathSum;
  q.difficulty = static_cast<int>(operands.size()) - 2;
  for (int v : operands) q.query_tokens.push_back(v);
  q.query_tokens.push_back(tok::kEquals);
  for (Token t : detail::digits_of(target)) q.query_tokens.push_back(t);
  q.target = target;
  return q;
}

Query Chain(int a0, std::vector<std::pair<Token, int>> steps) {
  Query q;
  q.task_kind = TaskKind::kModularChain;
  q.difficulty = static_cast<int>(steps.size());
  q.query_tokens.push_back(a0);
  int acc = a0;
  for (auto [op, v] : steps) {
    q.query_tokens.push_back(op);
    q.query_tokens.push_back(v);
    acc = op == tok::kAdd ? (acc + v) % 10 : (acc * v) % 10;
  }
  q.target = acc;
  return q;
}

// Every output-token string up to max_len, scored by the verifier.
std::set<TokenSequence> BruteForce(const Query& q, int max_len) {
  std::set<TokenSequence> out;
  TokenSequence s;
  std::function<void()> rec = [&] {
    if (!s.empty() && verify(q, s).reward == 1.0) out.insert(s);
    if (static_cast<int>(s.size()) == max_len) return;
    for (Token t = 0; t < tok::kOutputCount; ++t) {
      s.push_back(t);
      rec();
      s.pop_back();
    }
  };
  rec();
  return out;
}

// Sum over operand subsets hitting the target of |S|! orderings that fit.
std::size_t SubsetFactorialCount(const std::vector<int>& ops, int target, int max_len) {
  const int tail = static_cast<int>(detail::digits_of(target).size()) + 2;
  std::size_t total = 0;
  for (unsigned mask = 1; mask < (1u << ops.size()); ++mask) {
    int sum = 0, k = 0;
    for (std::size_t i = 0; i < ops.size(); ++i) {
      if (mask & (1u << i)) {
        sum += ops[i];
        ++k;
      }
    }
    if (sum != target || k + tail > max_len) continue;
    std::size_t f = 1;
    for (int i = 2; i <= k; ++i) f *= static_cast<std::size_t>(i);
    total += f;
  }
  return total;
}

TEST(Verify, ChainAcceptsOnlyTheDerivation) {
  const Query q = Chain(3, {{tok::kAdd, 4}, {tok::kMul, 5}});  // 7, 5
  EXPECT_EQ(q.target, 5);
  EXPECT_EQ(verify(q, {7, 5, tok::kAnswer, 5, tok::kEos}).reward, 1.0);
  EXPECT_EQ(verify(q, {7, 4, tok::kAnswer, 5, tok::kEos}).reward, 0.0);
  EXPECT_EQ(verify(q, {7, 5, tok::kAnswer, 6, tok::kEos}).reward, 0.0);
  EXPECT_EQ(verify(q, {7, 5, tok::kAnswer, 5}).reward, 0.0);                 // no EOS
  EXPECT_EQ(verify(q, {7, 5, tok::kAnswer, 5, tok::kEos, 1}).reward, 0.0);   // trailing
  EXPECT_EQ(verify(q, {7, 5, tok::kAnswer, 0, 5, tok::kEos}).reward, 0.0);  // leading zero
  EXPECT_EQ(verify(q, {}).reward, 0.0);
}

TEST(Verify, SumUsesEachOperandOnce) {
  const Query q = Sum({2, 3, 5, 7}, 10);
  EXPECT_EQ(verify(q, {3, 7, tok::kAnswer, 1, 0, tok::kEos}).reward, 1.0);
  EXPECT_EQ(verify(q, {2, 3, 5, tok::kAnswer, 1, 0, tok::kEos}).reward, 1.0);
  EXPECT_EQ(verify(q, {5, 5, tok::kAnswer, 1, 0, tok::kEos}).reward, 0.0);
  EXPECT_EQ(verify(q, {3, 6, 1, tok::kAnswer, 1, 0, tok::kEos}).reward, 0.0);
  EXPECT_EQ(verify(q, {3, 7, tok::kAnswer, 1, 1, tok::kEos}).reward, 0.0);
  const auto r = verify(q, {3, 7, tok::kAnswer, 1, 1, tok::kEos});
  ASSERT_TRUE(r.parsed_answer.has_value());
  EXPECT_EQ(*r.parsed_answer, 11);
}

TEST(Enumerate, MatchesBruteForceOnSmallInstances) {
  Rng rng(7);
  for (int k = 0; k < 6; ++k) {
    const auto chain = generate_query(rng, TaskKind::kModularChain, 1, 6);
    EXPECT_EQ(enumerate_solutions(chain, 6), BruteForce(chain, 6));
  }
  for (int k = 0; k < 4; ++k) {
    const auto sum = generate_query(rng, TaskKind::kMultiPathSum, 1, 6);
    EXPECT_EQ(enumerate_solutions(sum, 6), BruteForce(sum, 6));
  }
}

TEST(Enumerate, MatchesSubsetFactorialCount) {
  Rng rng(8);
  for (int difficulty = 1; difficulty <= 4; ++difficulty) {
    for (int k = 0; k < 10; ++k) {
      const auto q = generate_query(rng, TaskKind::kMultiPathSum, difficulty, 10);
      EXPECT_EQ(enumerate_solutions(q, 10).size(), SubsetFactorialCount(detail::sum_operands(q), q.target, 10));
    }
  }
}

TEST(Enumerate, KnownSumInstance) {
  // {3,7} and {2,3,5}: 2! + 3! = 8 orderings.
  const Query q = Sum({2, 3, 5, 7}, 10);
  const auto sols = enumerate_solutions(q, 10);
  EXPECT_EQ(sols.size(), 8u);
  for (const auto& s : sols) EXPECT_EQ(verify(q, s).reward, 1.0);
  EXPECT_EQ(canonical_solution(q, 10), (TokenSequence{2, 3, 5, tok::kAnswer, 1, 0, tok::kEos}));
}

TEST(Enumerate, ChainHasUniqueSolution) {
  Rng rng(9);
  for (int d = 1; d <= 4; ++d) {
    const auto q = generate_query(rng, TaskKind::kModularChain, d, 10);
    EXPECT_EQ(enumerate_solutions(q, 10).size(), 1u);
  }
}

TEST(Enumerate, BudgetExceededIsResourceError) {
  const Query q = Sum({1, 2, 3, 4, 5, 6}, 21);
  EXPECT_THROW(enumerate_solutions(q, 12, 5), ResourceError);
}

TEST(Enumerate, MaxLenPrunes) {
  const Query q = Sum({2, 3, 5, 7}, 10);
  // Length 6 only admits the two-operand orderings.
  EXPECT_EQ(enumerate_solutions(q, 6).size(), 2u);
  EXPECT_TRUE(enumerate_solutions(q, 4).empty());
  EXPECT_THROW(canonical_solution(q, 4), ValidationError);
}

TEST(Generate, MultiPathSumHasAtLeastTwoSolutions) {
  Rng rng(10);
  for (int d = 1; d <= 4; ++d) {
    for (int k = 0; k < 20; ++k) {
      const auto q = generate_query(rng, TaskKind::kMultiPathSum, d, 10);
      EXPECT_GE(enumerate_solutions(q, 10).size(), 2u);
      EXPECT_EQ(static_cast<int>(detail::sum_operands(q).size()), d + 2);
    }
  }
}

TEST(Generate, BadDifficultyAndImpossibleLength) {
  Rng rng(1);
  EXPECT_THROW(generate_query(rng, TaskKind::kModularChain, 0, 10), ConfigError);
  EXPECT_THROW(generate_query(rng, TaskKind::kModularChain, 5, 10), ConfigError);
  EXPECT_THROW(generate_query(rng, TaskKind::kModularChain, 4, 3), ConfigError);
}

TEST(Corpus, DeterministicDisjointAndSized) {
  const auto a = generate_corpus(5, Split::kTrain, TaskKind::kMultiPathSum, 2, 30, 10);
  const auto b = generate_corpus(5, Split::kTrain, TaskKind::kMultiPathSum, 2, 30, 10);
  const auto e = generate_corpus(5, Split::kEval, TaskKind::kMultiPathSum, 2, 20, 10);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 30u);
  EXPECT_EQ(e.size(), 20u);
  std::set<std::int64_t> ids;
  for (const auto& q : a) ids.insert(q.id);
  for (const auto& q : e) EXPECT_EQ(ids.count(q.id), 0u);
  EXPECT_NE(generate_corpus(6, Split::kTrain, TaskKind::kMultiPathSum, 2, 30, 10), a);
}

TEST(QueryFile, RoundTrip) {
  const auto qs = generate_corpus(3, Split::kTrain, TaskKind::kModularChain, 3, 10, 10);
  const auto path = (std::filesystem::temp_directory_path() / "psplit_queries.tsv").string();
  write_query_file(path, qs);
  EXPECT_EQ(read_query_file(path), qs);
  std::remove(path.c_str());
}

TEST(QueryFile, MalformedRecordNamesLine) {
  try {
    parse_query_record("1\tModularChain\t2\t3 12\t", 4);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
  EXPECT_THROW(parse_query_record("1\tNope\t2\t3\t3"), ValidationError);
  EXPECT_THROW(parse_query_record("1\tModularChain\t2\t3 16\t3"), ValidationError);
}

}  // namespace
}  // namespace psplit
