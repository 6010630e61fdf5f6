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

// Numeric bedrock: exact and sampled entropy/KL, standardization, clipping
// and central-difference gradients. Everything here is a pure function.

#ifndef PSPLIT_CORE_MATH_HPP_
#define PSPLIT_CORE_MATH_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "psplit/errors.hpp"

namespace psplit {

inline constexpr double kLn2 = 0.69314718055994530942;
inline constexpr double kStdEpsilon = 1e-8;

enum class LogBase { kBits, kNats };

enum class ContextTag { kNormal, kHighEntropy };

inline const char* to_string(ContextTag tag) {
  return tag == ContextTag::kNormal ? "normal" : "high_entropy";
}

// A probability vector over the vocabulary.
struct CategoricalDistribution {
  std::vector<double> probs;

  // Throws ValidationError naming the first invariant that fails.
  void validate(double tolerance = 1e-9) const {
    if (probs.empty()) throw ValidationError("distribution: empty probability vector");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const double p = probs[i];
      if (!std::isfinite(p)) {
        throw ValidationError("distribution: probability " + std::to_string(i) + " is not finite");
      }
      if (p < 0.0) {
        throw ValidationError("distribution: probability " + std::to_string(i) + " is negative");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > tolerance) {
      throw ValidationError("distribution: probabilities sum to " + std::to_string(total) +
                            ", not 1");
    }
  }

  std::size_t size() const { return probs.size(); }
};

// Per-token log-probabilities of a generated sequence under one context.
struct LogProbTrace {
  std::vector<double> values;
  ContextTag context_tag = ContextTag::kNormal;

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
};

// Numerically stable softmax over logits. Entries equal to -infinity get
// probability zero.
inline CategoricalDistribution softmax(std::span<const double> logits) {
  CategoricalDistribution dist;
  dist.probs.resize(logits.size());
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    dist.probs[i] = std::exp(logits[i] - peak);
    total += dist.probs[i];
  }
  for (auto& p : dist.probs) p /= total;
  return dist;
}

// Shannon entropy, -sum p log p, with 0 log 0 = 0.
inline double exact_entropy(const CategoricalDistribution& dist, LogBase base = LogBase::kNats) {
  dist.validate();
  double h = 0.0;
  for (double p : dist.probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return base == LogBase::kBits ? h / kLn2 : h;
}

// Unbiased estimate of entropy from log-probabilities of tokens sampled from
// the same distribution. Result in nats.
inline double sampled_entropy_estimate(const LogProbTrace& trace) {
  if (trace.empty()) throw ValidationError("sampled_entropy_estimate: empty trace");
  double total = 0.0;
  for (double v : trace.values) total -= v;
  return total / static_cast<double>(trace.size());
}

// KL(p || q) in nats. q must cover the support of p.
inline double exact_kl(const CategoricalDistribution& p, const CategoricalDistribution& q) {
  p.validate();
  q.validate();
  if (p.size() != q.size()) {
    throw ValidationError("exact_kl: distributions have different sizes");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.probs[i] == 0.0) continue;
    if (q.probs[i] == 0.0) {
      throw DomainError("exact_kl: q has zero probability at token " + std::to_string(i) +
                        " where p is positive");
    }
    kl += p.probs[i] * std::log(p.probs[i] / q.probs[i]);
  }
  return std::max(kl, 0.0);
}

// k1 estimator: mean of log p - log q over samples drawn from p. May be
// negative on finite samples.
inline double k1_kl_estimate(const LogProbTrace& trace_p, const LogProbTrace& trace_q) {
  if (trace_p.size() != trace_q.size()) {
    throw ValidationError("k1_kl_estimate: trace lengths differ (" +
                          std::to_string(trace_p.size()) + " vs " +
                          std::to_string(trace_q.size()) + ")");
  }
  if (trace_p.empty()) throw ValidationError("k1_kl_estimate: empty traces");
  double total = 0.0;
  for (std::size_t i = 0; i < trace_p.size(); ++i) total += trace_p.values[i] - trace_q.values[i];
  return total / static_cast<double>(trace_p.size());
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline MeanStd mean_and_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / n);
  return out;
}

// (v - mean) / std using the population std. Returns zeros when the std falls
// below epsilon.
inline std::vector<double> standardize(std::span<const double> values,
                                       double epsilon = kStdEpsilon) {
  if (values.empty()) throw ValidationError("standardize: empty input");
  if (epsilon < 0.0) throw ValidationError("standardize: negative epsilon");
  const MeanStd ms = mean_and_std(values);
  std::vector<double> out(values.size(), 0.0);
  if (ms.std < epsilon) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - ms.mean) / ms.std;
  return out;
}

inline double symmetric_clip(double value, double bound) {
  if (bound < 0.0) throw ValidationError("symmetric_clip: negative bound");
  return std::min(std::max(value, -bound), bound);
}

// Central differences, one coordinate at a time.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& objective,
    std::span<const double> params, double h) {
  if (!(h > 0.0)) throw ValidationError("finite_difference_gradient: h must be positive");
  std::vector<double> x(params.begin(), params.end());
  std::vector<double> grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = objective(x);
    x[i] = saved - h;
    const double down = objective(x);
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_difference_gradient: objective not finite at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace psplit

#endif  // PSPLIT_CORE_MATH_HPP_
