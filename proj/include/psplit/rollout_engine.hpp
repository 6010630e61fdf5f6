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

// Group sampling across the two modes, dual-context old-policy traces, and
// loss assignments with optional rollout sharing.

#ifndef PSPLIT_ROLLOUT_ENGINE_HPP_
#define PSPLIT_ROLLOUT_ENGINE_HPP_

#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "psplit/environment.hpp"
#include "psplit/errors.hpp"
#include "psplit/policy.hpp"
#include "psplit/rng.hpp"

namespace psplit {

struct Rollout {
  TokenSequence tokens;
  ContextTag sampled_mode = ContextTag::kNormal;
  double reward = 0.0;
  LogProbTrace old_logprobs_normal;
  LogProbTrace old_logprobs_he;
  std::int64_t query_id = 0;
  int rollout_index = 0;
  // Exact step entropies (nats) under the sampling context at collection time.
  std::vector<double> step_entropies;

  const LogProbTrace& old_trace(ContextTag ctx) const {
    return ctx == ContextTag::kNormal ? old_logprobs_normal : old_logprobs_he;
  }
};

enum class GroupLayout {
  kDualMode,    // first G/2 Normal, last G/2 HighEntropy
  kNormalOnly,  // all G Normal (single-mode baselines)
};

struct RolloutGroup {
  Query query;
  std::vector<Rollout> rollouts;
  std::uint64_t group_seed = 0;
  GroupLayout layout = GroupLayout::kDualMode;
  // Number of (sequence, context) log-prob evaluations spent on this group:
  // one per sampling trace plus one per cross-mode re-scoring.
  int scoring_calls = 0;

  std::size_t size() const { return rollouts.size(); }
};

inline Context make_context(const Query& q, ContextTag tag) {
  return Context{tag == ContextTag::kNormal ? Mode::normal() : Mode::high_entropy(), q.query_tokens, {}};
}

// Samples G rollouts for one query from a single parameter snapshot. Rollout
// i draws from the stream (seed, query id, i), so groups are reproducible and
// independent of worker scheduling.
inline RolloutGroup sample_group(const PolicyParameters& params, const Query& query, int group_size, int max_len,
                                 double temperature, std::uint64_t seed,
                                 GroupLayout layout = GroupLayout::kDualMode) {
  if (group_size < 2 || group_size % 2 != 0) {
    throw ValidationError("sample_group: group size must be even and at least 2, got " + std::to_string(group_size));
  }
  RolloutGroup group;
  group.query = query;
  group.group_seed = seed;
  group.layout = layout;
  group.rollouts.resize(static_cast<std::size_t>(group_size));
  const SamplingOptions opts{temperature, -1, 1.0};
  for (int i = 0; i < group_size; ++i) {
    const ContextTag mode =
        (layout == GroupLayout::kDualMode && i >= group_size / 2) ? ContextTag::kHighEntropy : ContextTag::kNormal;
    Rng rng({seed, static_cast<std::uint64_t>(Stream::kRollout), static_cast<std::uint64_t>(query.id),
             static_cast<std::uint64_t>(i)});
    auto sampled = sample_rollout(params, make_context(query, mode), max_len, opts, rng);
    ++group.scoring_calls;
    Rollout& r = group.rollouts[static_cast<std::size_t>(i)];
    r.tokens = std::move(sampled.tokens);
    r.sampled_mode = mode;
    r.query_id = query.id;
    r.rollout_index = i;
    r.step_entropies = std::move(sampled.entropies);
    r.reward = verify(query, r.tokens).reward;
    if (mode == ContextTag::kNormal) {
      r.old_logprobs_normal = std::move(sampled.trace);
      if (layout == GroupLayout::kDualMode) {
        r.old_logprobs_he = score_sequence(params, make_context(query, ContextTag::kHighEntropy), r.tokens);
        ++group.scoring_calls;
      }
    } else {
      r.old_logprobs_he = std::move(sampled.trace);
      r.old_logprobs_normal = score_sequence(params, make_context(query, ContextTag::kNormal), r.tokens);
      ++group.scoring_calls;
    }
  }
  return group;
}

enum class LossMode { kNormalLoss, kHELoss };

inline ContextTag context_of(LossMode m) {
  return m == LossMode::kNormalLoss ? ContextTag::kNormal : ContextTag::kHighEntropy;
}

struct Assignment {
  std::size_t rollout = 0;  // index into the group
  LossMode loss_mode = LossMode::kNormalLoss;
};

// Without sharing each rollout gets the loss of its sampled mode; with sharing
// every rollout gets both, so the loss mode rather than the sampled mode
// decides which context and advantage type apply.
inline std::vector<Assignment> build_training_assignments(const RolloutGroup& group, bool sharing) {
  std::vector<Assignment> out;
  out.reserve(group.size() * (sharing ? 2 : 1));
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto sampled = group.rollouts[i].sampled_mode == ContextTag::kNormal ? LossMode::kNormalLoss : LossMode::kHELoss;
    if (!sharing) {
      out.push_back({i, sampled});
    } else {
      out.push_back({i, LossMode::kNormalLoss});
      out.push_back({i, LossMode::kHELoss});
    }
  }
  return out;
}

// Debug dump: query_id, rollout_index, sampled_mode, reward, tokens.
inline void write_rollout_dump(std::ostream& os, const std::vector<RolloutGroup>& groups) {
  for (const auto& g : groups) {
    for (const auto& r : g.rollouts) {
      os << r.query_id << '\t' << r.rollout_index << '\t' << to_string(r.sampled_mode) << '\t' << r.reward << '\t';
      for (std::size_t i = 0; i < r.tokens.size(); ++i) os << (i ? " " : "") << r.tokens[i];
      os << '\n';
    }
  }
}

}  // namespace psplit

#endif  // PSPLIT_ROLLOUT_ENGINE_HPP_
