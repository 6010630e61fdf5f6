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

// Advantage computations: group-normalized correctness advantages, the
// dual-mode entropy signal with clamped bonus, and the entropy-as-weight
// baseline transforms.

#ifndef PSPLIT_ADVANTAGE_HPP_
#define PSPLIT_ADVANTAGE_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "psplit/core_math.hpp"
#include "psplit/errors.hpp"
#include "psplit/rng.hpp"

namespace psplit {

enum class AdvantageKind { kCorrectnessOnly, kEntropyRegularized, kBaseline };

// Per-assignment, per-token advantages with their provenance.
struct AdvantageTable {
  AdvantageKind kind = AdvantageKind::kCorrectnessOnly;
  std::string baseline_name;  // set when kind == kBaseline
  std::vector<std::vector<double>> per_token;
};

// Raw b values and their standardized form B, one array per rollout.
struct EntropySignalTable {
  std::vector<std::vector<double>> b;
  std::vector<std::vector<double>> B;
};

// Standardized rewards within the group (population std, zeros when the
// group is uninformative).
inline std::vector<double> grpo_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw ValidationError("grpo_advantages: group needs at least 2 rewards");
  return standardize(rewards, kStdEpsilon);
}

// b_t = -alpha log pi_HE(o_t) - (1 - alpha) log pi(o_t)
inline std::vector<double> b_values(const LogProbTrace& normal, const LogProbTrace& he, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("b_values: alpha must lie in [0, 1]");
  if (normal.size() != he.size()) {
    throw ValidationError("b_values: trace lengths differ (" + std::to_string(normal.size()) + " vs " +
                          std::to_string(he.size()) + ")");
  }
  std::vector<double> out(normal.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = -alpha * he.values[t] - (1.0 - alpha) * normal.values[t];
  return out;
}

// Standardizes b over the pooled tokens of every rollout in the group.
inline EntropySignalTable standardize_b(std::vector<std::vector<double>> b) {
  std::vector<double> pool;
  for (const auto& row : b) pool.insert(pool.end(), row.begin(), row.end());
  EntropySignalTable table;
  table.B.resize(b.size());
  if (pool.empty()) {
    table.b = std::move(b);
    return table;
  }
  const auto flat = standardize(pool, kStdEpsilon);
  std::size_t k = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    table.B[i].assign(flat.begin() + static_cast<std::ptrdiff_t>(k),
                      flat.begin() + static_cast<std::ptrdiff_t>(k + b[i].size()));
    k += b[i].size();
  }
  table.b = std::move(b);
  return table;
}

// A + coef * clip(B, +-|A| / kappa), per token. B is treated as a constant.
inline std::vector<double> clipped_bonus_advantages(std::span<const double> A, std::span<const double> B, double coef,
                                                    double kappa) {
  if (!(kappa >= 1.0)) throw ConfigError("advantage clamp requires kappa >= 1, got " + std::to_string(kappa));
  if (A.size() != B.size()) {
    throw ValidationError("he_advantages: A has " + std::to_string(A.size()) + " tokens, B has " +
                          std::to_string(B.size()));
  }
  std::vector<double> out(A.size());
  for (std::size_t t = 0; t < A.size(); ++t) out[t] = A[t] + coef * symmetric_clip(B[t], std::abs(A[t]) / kappa);
  return out;
}

inline std::vector<double> he_advantages(std::span<const double> A, std::span<const double> B, double eta,
                                         double kappa) {
  if (!(eta >= 0.0)) throw ConfigError("he_advantages: eta must be non-negative");
  return clipped_bonus_advantages(A, B, eta, kappa);
}

// 1 for the top keep_fraction of tokens by entropy (ties: earlier position
// first), 0 elsewhere.
inline std::vector<int> forking_token_mask(std::span<const double> entropies, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ValidationError("forking_token_mask: keep_fraction must be in (0, 1]");
  }
  const std::size_t n = entropies.size();
  std::vector<int> mask(n, 0);
  const auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return entropies[a] > entropies[b]; });
  for (std::size_t i = 0; i < std::min(keep, n); ++i) mask[order[i]] = 1;
  return mask;
}

inline constexpr double kEntropyScaleFloor = 0.1;

// Divides each sequence's advantage by its min-max normalized entropy within
// the group, floored at 0.1. Equal entropies leave advantages unchanged.
inline std::vector<double> entropy_driven_scale(std::span<const double> advantages,
                                                std::span<const double> sequence_entropies) {
  if (advantages.size() != sequence_entropies.size()) {
    throw ValidationError("entropy_driven_scale: advantage and entropy counts differ");
  }
  std::vector<double> out(advantages.begin(), advantages.end());
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(sequence_entropies.begin(), sequence_entropies.end());
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double normalized = range > 0.0 ? (sequence_entropies[i] - *lo) / range : 1.0;
    out[i] /= std::max(normalized, kEntropyScaleFloor);
  }
  return out;
}

// Centered per-batch covariance proxy (A - mean A) * (logp - mean logp).
inline std::vector<double> clip_cov_statistics(std::span<const double> advantages, std::span<const double> logprobs) {
  if (advantages.size() != logprobs.size()) throw ValidationError("clip_cov_statistics: length mismatch");
  std::vector<double> out(advantages.size());
  if (out.empty()) return out;
  const double ma = mean_and_std(advantages).mean;
  const double ml = mean_and_std(logprobs).mean;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (advantages[i] - ma) * (logprobs[i] - ml);
  return out;
}

// Masks (0) floor(N * clip_ratio) tokens drawn uniformly from those whose
// covariance statistic lies within [lower, upper]; everything else is 1.
inline std::vector<int> clip_cov_mask(std::span<const double> covariance, double clip_ratio, double lower,
                                      double upper, Rng& rng) {
  if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) throw ValidationError("clip_cov_mask: clip_ratio must be in (0, 1)");
  std::vector<int> mask(covariance.size(), 1);
  const auto budget = static_cast<std::size_t>(std::floor(clip_ratio * static_cast<double>(covariance.size()) + 1e-9));
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < covariance.size(); ++i) {
    if (covariance[i] >= lower && covariance[i] <= upper) candidates.push_back(i);
  }
  const std::size_t take = std::min(budget, candidates.size());
  for (std::size_t k = 0; k < take; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.below(candidates.size() - k));
    std::swap(candidates[k], candidates[j]);
    mask[candidates[k]] = 0;
  }
  return mask;
}

}  // namespace psplit

#endif  // PSPLIT_ADVANTAGE_HPP_
