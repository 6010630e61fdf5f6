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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "psplit/advantage.hpp"

namespace psplit {
namespace {

TEST(Grpo, HandValues) {
  const std::vector<double> r = {1, 1, 0, 0};
  const auto a = grpo_advantages(r);
  EXPECT_NEAR(a[0], 1.0, 1e-6);
  EXPECT_NEAR(a[3], -1.0, 1e-6);
  const std::vector<double> one = {1, 0, 0, 0};
  const auto b = grpo_advantages(one);
  // mean 1/4, population std sqrt(3)/4
  EXPECT_NEAR(b[0], 0.75 / (std::sqrt(3.0) / 4.0), 1e-6);
  EXPECT_NEAR(b[1], -0.25 / (std::sqrt(3.0) / 4.0), 1e-6);
  for (double x : grpo_advantages(std::vector<double>{1, 1, 1, 1})) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(grpo_advantages(std::vector<double>{1}), ValidationError);
}

TEST(Grpo, PermutationEquivariant) {
  const std::vector<double> r = {1, 0, 1, 1, 0, 0, 0, 1};
  const std::vector<std::size_t> perm = {3, 7, 0, 5, 1, 6, 2, 4};
  std::vector<double> rp;
  for (auto i : perm) rp.push_back(r[i]);
  const auto a = grpo_advantages(r), ap = grpo_advantages(rp);
  for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_DOUBLE_EQ(ap[k], a[perm[k]]);
}

LogProbTrace Trace(std::vector<double> v, ContextTag tag) { return {std::move(v), tag}; }

TEST(BValues, Arithmetic) {
  const auto n = Trace({-1.0, -0.5}, ContextTag::kNormal);
  const auto h = Trace({-3.0, -2.0}, ContextTag::kHighEntropy);
  EXPECT_NEAR(b_values(n, h, 0.5)[0], 2.0, 1e-15);
  EXPECT_NEAR(b_values(n, h, 1.0)[1], 2.0, 1e-15);
  EXPECT_NEAR(b_values(n, h, 0.0)[1], 0.5, 1e-15);
  EXPECT_THROW(b_values(n, Trace({-1.0}, ContextTag::kHighEntropy), 0.5), ValidationError);
  EXPECT_THROW(b_values(n, h, 1.5), ValidationError);
}

TEST(StandardizeB, PooledOverGroup) {
  const auto t = standardize_b({{0.0, 0.0}, {2.0, 2.0}});
  EXPECT_NEAR(t.B[0][0], -1.0, 1e-6);
  EXPECT_NEAR(t.B[1][1], 1.0, 1e-6);
  const auto c = standardize_b({{3.0}, {3.0, 3.0}});
  for (const auto& row : c.B) {
    for (double x : row) EXPECT_EQ(x, 0.0);
  }
}

TEST(StandardizeB, WeightedDecompositionIsEquivalent) {
  // beta1 * entropy term + beta2 * drift term, with alpha = 1 - beta2 / beta1,
  // standardizes to the same B as the alpha form.
  Rng rng(8);
  std::vector<LogProbTrace> normal, he;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> n, h;
    for (int t = 0; t < 3 + i; ++t) {
      n.push_back(-rng.uniform(0.01, 3.0));
      h.push_back(-rng.uniform(0.01, 3.0));
    }
    normal.push_back(Trace(n, ContextTag::kNormal));
    he.push_back(Trace(h, ContextTag::kHighEntropy));
  }
  const double beta1 = 2.7, beta2 = 0.9, alpha = 1.0 - beta2 / beta1;
  std::vector<std::vector<double>> via_alpha, via_betas;
  for (std::size_t i = 0; i < normal.size(); ++i) {
    via_alpha.push_back(b_values(normal[i], he[i], alpha));
    std::vector<double> row;
    for (std::size_t t = 0; t < normal[i].size(); ++t) {
      // beta1 * (-log pi_HE) + beta2 * (log pi_HE - log pi)
      row.push_back(-beta1 * he[i].values[t] + beta2 * (he[i].values[t] - normal[i].values[t]));
    }
    via_betas.push_back(row);
  }
  const auto a = standardize_b(via_alpha), b = standardize_b(via_betas);
  for (std::size_t i = 0; i < a.B.size(); ++i) {
    for (std::size_t t = 0; t < a.B[i].size(); ++t) EXPECT_NEAR(a.B[i][t], b.B[i][t], 1e-9);
  }
}

TEST(HeAdvantages, ClampedBonus) {
  const std::vector<double> A = {1.0, -1.0, 0.0, 0.4};
  const std::vector<double> B = {3.0, 10.0, 5.0, -0.1};
  const auto out = he_advantages(A, B, 0.03, 2.0);
  EXPECT_NEAR(out[0], 1.015, 1e-12);
  EXPECT_NEAR(out[1], -0.985, 1e-12);
  EXPECT_EQ(out[2], 0.0);
  EXPECT_NEAR(out[3], 0.4 - 0.003, 1e-12);  // within the clip bound
}

TEST(HeAdvantages, Errors) {
  const std::vector<double> A = {1.0}, B = {1.0}, B2 = {1.0, 2.0};
  EXPECT_THROW(he_advantages(A, B, 0.03, 0.5), ConfigError);
  EXPECT_THROW(he_advantages(A, B, -0.1, 2.0), ConfigError);
  EXPECT_THROW(he_advantages(A, B2, 0.03, 2.0), ValidationError);
}

TEST(HeAdvantages, SignPreservationAndBonusBound) {
  Rng rng(21);
  const double eta = 0.03, kappa = 2.0;
  for (int i = 0; i < 100000; ++i) {
    double a = rng.normal() * std::pow(10.0, rng.uniform(-6.0, 3.0));
    if (a == 0.0) a = 1e-3;
    const double b = rng.normal() * std::pow(10.0, rng.uniform(-3.0, 3.0));
    const std::vector<double> A = {a}, B = {b};
    const double out = he_advantages(A, B, eta, kappa)[0];
    ASSERT_EQ(std::signbit(out), std::signbit(a)) << a << " " << b;
    ASSERT_LE(std::abs(out - a), eta * std::abs(a) / kappa * (1 + 1e-12));
  }
}

TEST(Forking, TopFraction) {
  EXPECT_EQ(forking_token_mask(std::vector<double>{0.1, 0.9, 0.5, 0.7}, 0.5), (std::vector<int>{0, 1, 0, 1}));
  EXPECT_EQ(forking_token_mask(std::vector<double>{0.3, 0.2, 0.1}, 1.0), (std::vector<int>{1, 1, 1}));
  EXPECT_EQ(forking_token_mask(std::vector<double>(8, 1.0), 0.25), (std::vector<int>{1, 1, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(forking_token_mask(std::vector<double>(5, 1.0), 0.2), (std::vector<int>{1, 0, 0, 0, 0}));
  EXPECT_THROW(forking_token_mask(std::vector<double>{1.0}, 0.0), ValidationError);
}

TEST(EntropyScale, LowEntropyGetsLargestFactor) {
  const auto out = entropy_driven_scale(std::vector<double>{1.0, 1.0}, std::vector<double>{0.2, 0.8});
  EXPECT_GT(out[0], out[1]);
  EXPECT_DOUBLE_EQ(out[0], 10.0);  // floor 0.1
  EXPECT_DOUBLE_EQ(out[1], 1.0);
  const auto eq = entropy_driven_scale(std::vector<double>{0.5, -1.0, 2.0}, std::vector<double>{0.3, 0.3, 0.3});
  EXPECT_EQ(eq, (std::vector<double>{0.5, -1.0, 2.0}));
  const auto mid = entropy_driven_scale(std::vector<double>{1.0, 1.0, 1.0}, std::vector<double>{0.0, 0.5, 1.0});
  EXPECT_DOUBLE_EQ(mid[1], 2.0);
}

TEST(ClipCov, Statistics) {
  const auto c = clip_cov_statistics(std::vector<double>{1.0, -1.0}, std::vector<double>{-0.5, -1.5});
  EXPECT_DOUBLE_EQ(c[0], 0.5);
  EXPECT_DOUBLE_EQ(c[1], 0.5);
}

TEST(ClipCov, MaskCounts) {
  Rng rng(4);
  const std::vector<double> inside(10000, 2.0);
  const auto m = clip_cov_mask(inside, 0.0002, 1.0, 5.0, rng);
  EXPECT_EQ(std::count(m.begin(), m.end(), 0), 2);
  const auto small = clip_cov_mask(std::vector<double>(4000, 2.0), 0.0002, 1.0, 5.0, rng);
  EXPECT_EQ(std::count(small.begin(), small.end(), 0), 0);
  const auto outside = clip_cov_mask(std::vector<double>(10000, 0.5), 0.0002, 1.0, 5.0, rng);
  EXPECT_EQ(std::count(outside.begin(), outside.end(), 0), 0);
  // Only in-range tokens are ever masked.
  std::vector<double> mixed(10000, 0.0);
  mixed[17] = 3.0;
  const auto mm = clip_cov_mask(mixed, 0.0002, 1.0, 5.0, rng);
  EXPECT_EQ(std::count(mm.begin(), mm.end(), 0), 1);
  EXPECT_EQ(mm[17], 0);
  EXPECT_THROW(clip_cov_mask(inside, 1.0, 1.0, 5.0, rng), ValidationError);
}

}  // namespace
}  // namespace psplit
