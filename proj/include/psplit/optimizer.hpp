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

#ifndef PSPLIT_OPTIMIZER_HPP_
#define PSPLIT_OPTIMIZER_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "psplit/errors.hpp"

namespace psplit {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-2;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

// First/second moment estimates plus the step counter used for bias
// correction.
struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;
  std::int64_t step = 0;

  static AdamMoments zeros(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
};

inline double l2_norm(std::span<const double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return std::sqrt(ss);
}

// One AdamW ascent step on `params` along `gradient` (the gradient of an
// objective being maximized). Returns the pre-clip gradient norm.
//
//   g <- g * min(1, clip / ||g||)
//   m <- b1 m + (1 - b1) g,   v <- b2 v + (1 - b2) g^2
//   p <- p - lr * wd * p + lr * m_hat / (sqrt(v_hat) + eps)
inline double optimizer_update(AdamMoments& moments, std::span<double> params,
                               std::span<const double> gradient, double lr,
                               const AdamWConfig& cfg = {}) {
  if (params.size() != gradient.size() || moments.first.size() != params.size() ||
      moments.second.size() != params.size()) {
    throw ValidationError("optimizer_update: shape mismatch between params, gradient and moments");
  }
  for (std::size_t i = 0; i < gradient.size(); ++i) {
    if (!std::isfinite(gradient[i])) {
      throw NumericError("optimizer_update: non-finite gradient at index " + std::to_string(i));
    }
  }
  const double norm = l2_norm(gradient);
  const double scale = (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;
  moments.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(moments.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(moments.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradient[i] * scale;
    double& m = moments.first[i];
    double& v = moments.second[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    params[i] -= lr * cfg.weight_decay * params[i];
    params[i] += lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.epsilon);
  }
  return norm;
}

}  // namespace psplit

#endif  // PSPLIT_OPTIMIZER_HPP_
