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
#include <map>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "psplit/trainer.hpp"

namespace psplit {
namespace {

PolicyParameters Policy(bool prefix_sensitive, std::uint64_t seed, double scale = 0.5, int rows = 1021) {
  PolicySpec spec;
  spec.dims.table_rows = rows;
  spec.dims.prefix_sensitive = prefix_sensitive;
  auto p = init_parameters(spec, seed);
  Rng rng(seed);
  for (auto& v : p.values) v = scale * rng.normal();
  return p;
}

std::vector<Query> Queries(int n, TaskKind kind = TaskKind::kMultiPathSum) {
  return generate_corpus(3, Split::kTrain, kind, 1, n, 10);
}

TrainConfig Config(Method m) {
  TrainConfig cfg;
  cfg.method = m;
  cfg.group_size = 4;
  cfg.batch_queries = 2;
  cfg.max_len = 10;
  return cfg;
}

// Groups with at least one informative (mixed-reward) group, so advantages
// are not identically zero.
std::vector<RolloutGroup> MixedGroups(const PolicyParameters& p, const TrainConfig& cfg) {
  const auto qs = Queries(40);
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    std::vector<RolloutGroup> groups;
    bool informative = false;
    for (int i = 0; i < 2; ++i) {
      groups.push_back(sample_group(p, qs[(seed * 2 + static_cast<std::uint64_t>(i)) % qs.size()], cfg.group_size,
                                    cfg.max_len, 1.0, seed, cfg.layout()));
      std::set<double> rewards;
      for (const auto& r : groups.back().rollouts) rewards.insert(r.reward);
      informative |= rewards.size() == 2;
    }
    if (informative) return groups;
  }
  ADD_FAILURE() << "no informative group found";
  return {};
}

// Boosts the canonical answer so that correct rollouts appear often.
PolicyParameters Teach(const PolicyParameters& p, int steps) {
  std::vector<PretrainExample> data;
  for (const auto& q : Queries(40)) {
    data.push_back({make_context(q, ContextTag::kNormal), canonical_solution(q, 10)});
    data.push_back({make_context(q, ContextTag::kHighEntropy), canonical_solution(q, 10)});
  }
  return supervised_pretrain(p, data, steps, 0.05).params;
}

TEST(PpoClip, BranchesAndWeights) {
  const LogProbTrace old{{0.0, 0.0, 0.0, 0.0}, ContextTag::kNormal};
  const LogProbTrace cur{{std::log(1.5), std::log(1.5), std::log(0.5), std::log(1.1)}, ContextTag::kNormal};
  const std::vector<double> A = {1.0, -1.0, -1.0, 2.0};
  const auto l = ppo_clipped_loss(old, cur, A, 0.2);
  EXPECT_NEAR(l.loss, 1.2 - 1.5 - 0.8 + 2.2, 1e-12);
  EXPECT_EQ(l.weights[0], 0.0);  // clipped above
  EXPECT_NEAR(l.weights[1], -1.5, 1e-12);
  EXPECT_EQ(l.weights[2], 0.0);  // clipped below
  EXPECT_NEAR(l.weights[3], 2.2, 1e-12);
  EXPECT_THROW(ppo_clipped_loss(old, cur, std::vector<double>{1.0}, 0.2), ValidationError);
}

TEST(PolicySplitObjective, RatiosStartAtOne) {
  const auto p = Teach(Policy(true, 1, 0.1), 20);
  const auto cfg = Config(Method::kPolicySplit);
  const auto groups = MixedGroups(p, cfg);
  const auto obj = policy_split_objective(p, groups, cfg);
  EXPECT_EQ(obj.max_ratio_deviation, 0.0);
}

TEST(PolicySplitObjective, GradientMatchesFiniteDifferences) {
  for (bool sharing : {false, true}) {
    auto cfg = Config(Method::kPolicySplit);
    cfg.sharing = sharing;
    cfg.eta = 0.3;
    cfg.eta_prime = 0.1;
    const auto old = Teach(Policy(true, 2, 0.1, 61), 20);  // small table keeps FD cheap
    const auto groups = MixedGroups(old, cfg);
    // Move away from the snapshot so ratios differ from one, but stay inside
    // the clip region with high probability.
    auto p = old;
    Rng rng(9);
    for (auto& v : p.values) v += 0.01 * rng.normal();
    const auto obj = method_objective(p, groups, cfg);
    const auto fd = finite_difference_gradient(
        [&](std::span<const double> th) {
          PolicyParameters q = p;
          q.values.assign(th.begin(), th.end());
          return method_objective(q, groups, cfg, 0, false).objective;
        },
        p.values, 1e-6);
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      worst = std::max(worst, std::abs(fd[i] - obj.gradient[i]));
      scale = std::max(scale, std::abs(fd[i]));
    }
    EXPECT_GT(scale, 0.0);
    EXPECT_LT(worst, 1e-6 + 1e-5 * scale) << "sharing=" << sharing;
  }
}

TEST(EntropyRegularization, GradientMatchesFiniteDifferences) {
  auto cfg = Config(Method::kEntropyRegularization);
  cfg.ent_reg_coef = 0.05;
  const auto p = Policy(true, 3, 0.3, 61);
  const auto groups = MixedGroups(p, cfg);
  const auto obj = method_objective(p, groups, cfg);
  EXPECT_GT(obj.entropy_term, 0.0);
  const auto fd = finite_difference_gradient(
      [&](std::span<const double> th) {
        PolicyParameters q = p;
        q.values.assign(th.begin(), th.end());
        return method_objective(q, groups, cfg, 0, false).objective;
      },
      p.values, 1e-6);
  for (std::size_t i = 0; i < fd.size(); ++i) ASSERT_NEAR(fd[i], obj.gradient[i], 1e-6);
}

TEST(PolicySplitObjective, AdvantageRoutingFollowsLossMode) {
  auto cfg = Config(Method::kPolicySplit);
  const auto p = Teach(Policy(true, 4, 0.1), 40);
  const auto groups = MixedGroups(p, cfg);
  for (double eta_prime : {0.0, 0.02}) {
    cfg.eta_prime = eta_prime;
    const auto obj = policy_split_objective(p, groups, cfg);
    ASSERT_EQ(obj.assignments_per_group, (std::vector<std::size_t>{8, 8}));
    for (const auto& a : obj.audit) {
      if (a.assignment.loss_mode == LossMode::kHELoss) {
        EXPECT_EQ(a.advantage_kind, AdvantageKind::kEntropyRegularized);
      } else {
        EXPECT_EQ(a.advantage_kind,
                  eta_prime == 0.0 ? AdvantageKind::kCorrectnessOnly : AdvantageKind::kEntropyRegularized);
      }
    }
  }
  cfg.sharing = false;
  EXPECT_EQ(policy_split_objective(p, groups, cfg).assignments_per_group, (std::vector<std::size_t>{4, 4}));
}

// With eta = 0 and a policy that ignores the prefix, the dual-mode objective
// collapses to GRPO on the same rollouts; sharing doubles it.
TEST(PolicySplitObjective, ReducesToGrpo) {
  auto cfg = Config(Method::kPolicySplit);
  cfg.eta = 0.0;
  cfg.sharing = false;
  const auto old = Teach(Policy(false, 5, 0.1), 40);
  const auto groups = MixedGroups(old, cfg);
  auto p = old;
  Rng rng(1);
  for (auto& v : p.values) v += 0.02 * rng.normal();

  auto relabeled = groups;
  for (auto& g : relabeled) {
    g.layout = GroupLayout::kNormalOnly;
    for (auto& r : g.rollouts) r.sampled_mode = ContextTag::kNormal;
  }
  const auto ps = method_objective(p, groups, cfg);
  const auto grpo = method_objective(p, relabeled, Config(Method::kGRPO));
  EXPECT_NEAR(ps.objective, grpo.objective, 1e-12);
  for (std::size_t i = 0; i < ps.gradient.size(); ++i) ASSERT_NEAR(ps.gradient[i], grpo.gradient[i], 1e-12);

  cfg.sharing = true;
  const auto shared = method_objective(p, groups, cfg);
  EXPECT_NEAR(shared.objective, 2.0 * ps.objective, 1e-12);
}

TEST(Baselines, ForkingTokenOnlyKeepsTopFifth) {
  auto cfg = Config(Method::kForkingTokenOnly);
  const auto p = Teach(Policy(true, 6, 0.1), 20);
  const auto groups = MixedGroups(p, cfg);
  std::size_t tokens = 0;
  for (const auto& g : groups) {
    for (const auto& r : g.rollouts) tokens += r.tokens.size();
  }
  const auto obj = method_objective(p, groups, cfg);
  EXPECT_LE(obj.nonzero_weight_tokens, static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(tokens))));
}

TEST(Baselines, EntropyAdvantageAddsBoundedBonus) {
  auto cfg = Config(Method::kEntropyAdvantage);
  const auto p = Teach(Policy(true, 7, 0.1), 20);
  const auto groups = MixedGroups(p, cfg);
  const auto plain = method_objective(p, groups, Config(Method::kGRPO));
  const auto bonus = method_objective(p, groups, cfg);
  // At ratio 1 the surrogate is the advantage sum; the bonus is non-negative.
  EXPECT_GE(bonus.objective, plain.objective - 1e-12);
  cfg.ent_adv_alpha = 0.0;
  EXPECT_NEAR(method_objective(p, groups, cfg).objective, plain.objective, 1e-12);
}

TEST(Baselines, RejectWrongEntryPoint) {
  const auto p = Teach(Policy(true, 8, 0.1), 20);
  const auto groups = MixedGroups(p, Config(Method::kGRPO));
  EXPECT_THROW(policy_split_objective(p, groups, Config(Method::kGRPO)), ConfigError);
  EXPECT_THROW(baseline_objective(p, groups, Config(Method::kPolicySplit)), ConfigError);
}

TEST(TrainConfig, Validation) {
  auto cfg = Config(Method::kPolicySplit);
  cfg.kappa = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = Config(Method::kPolicySplit);
  cfg.group_size = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_method("PPO"), ConfigError);
  EXPECT_EQ(parse_method("ClipCov"), Method::kClipCov);
}

TEST(SelectBatch, EpochIsAPermutation) {
  const auto qs = Queries(12);
  std::multiset<std::int64_t> ids;
  for (int step = 0; step < 4; ++step) {
    for (const auto& q : select_batch(qs, step, 3, 42)) ids.insert(q.id);
  }
  for (const auto& q : qs) EXPECT_EQ(ids.count(q.id), 1u);
}

TEST(TrainStep, DeterministicAndWorkerIndependent) {
  auto cfg = Config(Method::kPolicySplit);
  const auto qs = Queries(8);
  const auto base = Policy(true, 10, 0.1);
  std::vector<TrainingState> states;
  for (int workers : {1, 3, 1}) {
    cfg.workers = workers;
    auto s = TrainingState::start(base);
    for (int k = 0; k < 3; ++k) train_step(s, select_batch(qs, s.step, cfg.batch_queries, cfg.seed), cfg);
    states.push_back(std::move(s));
  }
  EXPECT_EQ(states[0].params.values, states[1].params.values);
  EXPECT_EQ(states[0].params.values, states[2].params.values);
  EXPECT_EQ(states[0].step, 3);
  EXPECT_EQ(states[0].params.version, 3);
  EXPECT_EQ(states[0].history.size(), 3u);
  EXPECT_EQ(states[0].history[0].mode, "dual");
}

TEST(TrainStep, ChangesParametersAndReportsRatiosOfOne) {
  auto cfg = Config(Method::kPolicySplit);
  const auto qs = Queries(8);
  auto s = TrainingState::start(Teach(Policy(true, 11, 0.1), 20));
  const auto before = s.params.values;
  const auto rep = train_step(s, select_batch(qs, 0, cfg.batch_queries, cfg.seed), cfg);
  EXPECT_EQ(rep.max_ratio_deviation, 0.0);
  EXPECT_NE(s.params.values, before);
  EXPECT_GE(rep.metrics.mean_reward, 0.0);
  EXPECT_LE(rep.metrics.mean_reward, 1.0);
}

TEST(TrainStep, UninformativeGroupsOnlyDecay) {
  // A policy that can never answer correctly yields zero advantages: the step
  // applies weight decay alone.
  auto cfg = Config(Method::kGRPO);
  const auto qs = Queries(4);
  auto p = Policy(true, 12, 0.0);
  p.values.assign(p.values.size(), 0.0);
  // Force EOS immediately: every rollout is wrong.
  const std::size_t n_out = 12;
  for (std::size_t i = tok::kEos; i < p.values.size(); i += n_out) p.values[i] = 50.0;
  auto s = TrainingState::start(p);
  const auto rep = train_step(s, select_batch(qs, 0, cfg.batch_queries, cfg.seed), cfg);
  EXPECT_EQ(rep.metrics.mean_reward, 0.0);
  EXPECT_EQ(rep.metrics.grad_norm, 0.0);
  EXPECT_NEAR(s.params.values[tok::kEos], 50.0 * (1.0 - cfg.lr * cfg.weight_decay), 1e-9);
}

TEST(Discovery, StrictSuperset) {
  DiscoveryLog log;
  log.normal.insert({1, {1, 2}});
  log.high_entropy.insert({1, {1, 2}});
  EXPECT_FALSE(log.high_entropy_strict_superset());
  log.high_entropy.insert({1, {2, 1}});
  EXPECT_TRUE(log.high_entropy_strict_superset());
  log.normal.insert({2, {3}});
  EXPECT_FALSE(log.high_entropy_strict_superset());
}

TEST(MetricsRow, Format) {
  StepMetrics m;
  m.step = 3;
  m.method = Method::kPolicySplit;
  m.mode = "dual";
  m.mean_reward = 0.5;
  EXPECT_EQ(format_metrics_row(m), "3,PolicySplit,dual,0.5,0,0,0,0,0");
}

}  // namespace
}  // namespace psplit
