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

// PPO-clipped dual-mode objectives, baseline objectives and the batch
// training loop. Objectives are maximized; the only sign flip lives inside
// optimizer_update, which takes an ascent direction.

#ifndef PSPLIT_TRAINER_HPP_
#define PSPLIT_TRAINER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "psplit/advantage.hpp"
#include "psplit/core_math.hpp"
#include "psplit/environment.hpp"
#include "psplit/errors.hpp"
#include "psplit/optimizer.hpp"
#include "psplit/parallel.hpp"
#include "psplit/policy.hpp"
#include "psplit/rng.hpp"
#include "psplit/rollout_engine.hpp"

namespace psplit {

enum class Method {
  kGRPO,
  kEntropyRegularization,
  kEntropyAdvantage,
  kForkingTokenOnly,
  kClipCov,
  kEntropyDrivenAdvantage,
  kPolicySplit,
};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kGRPO: return "GRPO";
    case Method::kEntropyRegularization: return "EntropyRegularization";
    case Method::kEntropyAdvantage: return "EntropyAdvantage";
    case Method::kForkingTokenOnly: return "ForkingTokenOnly";
    case Method::kClipCov: return "ClipCov";
    case Method::kEntropyDrivenAdvantage: return "EntropyDrivenAdvantage";
    case Method::kPolicySplit: return "PolicySplit";
  }
  return "";
}

inline Method parse_method(const std::string& name) {
  for (Method m : {Method::kGRPO, Method::kEntropyRegularization, Method::kEntropyAdvantage, Method::kForkingTokenOnly,
                   Method::kClipCov, Method::kEntropyDrivenAdvantage, Method::kPolicySplit}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown method '" + name + "'");
}

struct TrainConfig {
  Method method = Method::kPolicySplit;
  double eta = 0.03;
  double eta_prime = 0.0;
  double alpha = 0.5;
  double kappa = 2.0;
  double epsilon_ppo = 0.2;
  double ent_reg_coef = 0.003;
  double ent_adv_alpha = 0.4;
  double forking_keep = 0.2;
  double clipcov_ratio = 0.0002;
  double clipcov_lower = 1.0;
  double clipcov_upper = 5.0;
  int group_size = 8;
  int batch_queries = 32;
  double lr = 0.05;
  double weight_decay = 1e-2;
  double clip_norm = 1.0;
  int max_len = 10;
  double temperature_train = 1.0;
  std::uint64_t seed = 0;
  bool sharing = true;
  int workers = 1;

  void validate() const {
    if (!(kappa >= 1.0)) throw ConfigError("kappa must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!(epsilon_ppo > 0.0)) throw ConfigError("epsilon_ppo must be positive");
    if (group_size < 2 || group_size % 2 != 0) throw ConfigError("group_size must be even and >= 2");
    if (batch_queries < 1) throw ConfigError("batch_queries must be positive");
    if (!(eta >= 0.0)) throw ConfigError("eta must be non-negative");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (max_len < 1) throw ConfigError("max_len must be positive");
    if (!(temperature_train > 0.0)) throw ConfigError("temperature_train must be positive");
    if (!(forking_keep > 0.0 && forking_keep <= 1.0)) throw ConfigError("forking_keep must be in (0, 1]");
    if (!(clipcov_ratio > 0.0 && clipcov_ratio < 1.0)) throw ConfigError("clipcov_ratio must be in (0, 1)");
  }

  GroupLayout layout() const { return method == Method::kPolicySplit ? GroupLayout::kDualMode : GroupLayout::kNormalOnly; }
};

// ---------------------------------------------------------------------------
// PPO clipped surrogate

struct ClippedLoss {
  double loss = 0.0;            // sum_t min(rho A, clip(rho) A)
  std::vector<double> weights;  // d loss / d log pi(o_t)
  std::vector<double> ratios;
};

// Token-summed surrogate sum_t min[rho_t A_t, clip(rho_t, 1 +- eps) A_t] with
// rho_t = exp(current_t - old_t). The weight of a token is rho_t A_t on the
// unclipped branch and 0 where the clip saturates.
inline ClippedLoss ppo_clipped_loss(const LogProbTrace& old_trace, const LogProbTrace& current,
                                    std::span<const double> advantages, double epsilon) {
  if (old_trace.size() != current.size() || advantages.size() != current.size()) {
    throw ValidationError("ppo_clipped_loss: trace/advantage lengths differ");
  }
  ClippedLoss out;
  out.weights.assign(current.size(), 0.0);
  out.ratios.resize(current.size());
  for (std::size_t t = 0; t < current.size(); ++t) {
    const double rho = std::exp(current.values[t] - old_trace.values[t]);
    const double A = advantages[t];
    if (!std::isfinite(rho) || !std::isfinite(A)) {
      throw NumericError("ppo_clipped_loss: non-finite ratio or advantage at token " + std::to_string(t));
    }
    out.ratios[t] = rho;
    const bool clipped = (A > 0.0 && rho > 1.0 + epsilon) || (A < 0.0 && rho < 1.0 - epsilon);
    if (clipped) {
      out.loss += std::clamp(rho, 1.0 - epsilon, 1.0 + epsilon) * A;
    } else {
      out.loss += rho * A;
      out.weights[t] = rho * A;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Objectives

struct AssignmentAudit {
  std::size_t group = 0;
  Assignment assignment;
  AdvantageKind advantage_kind = AdvantageKind::kCorrectnessOnly;
};

struct ObjectiveResult {
  double objective = 0.0;
  std::vector<double> gradient;  // ascent direction
  std::vector<AssignmentAudit> audit;
  std::vector<std::size_t> assignments_per_group;
  double max_ratio_deviation = 0.0;  // max |rho - 1|
  std::size_t nonzero_weight_tokens = 0;
  double entropy_term = 0.0;
};

namespace detail {

struct LossTerm {
  std::size_t group = 0;
  Assignment assignment;
  std::vector<double> advantages;
  AdvantageKind kind = AdvantageKind::kCorrectnessOnly;
};

inline std::vector<double> broadcast(double value, std::size_t n) { return std::vector<double>(n, value); }

inline std::vector<double> group_rewards(const RolloutGroup& g) {
  std::vector<double> r;
  for (const auto& ro : g.rollouts) r.push_back(ro.reward);
  return r;
}

inline std::vector<LossTerm> policy_split_terms(const std::vector<RolloutGroup>& groups, const TrainConfig& cfg) {
  std::vector<LossTerm> terms;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    const auto A = grpo_advantages(group_rewards(g));
    std::vector<std::vector<double>> b;
    b.reserve(g.size());
    for (const auto& r : g.rollouts) b.push_back(b_values(r.old_logprobs_normal, r.old_logprobs_he, cfg.alpha));
    const EntropySignalTable signal = standardize_b(std::move(b));
    for (const auto& a : build_training_assignments(g, cfg.sharing)) {
      const auto n = g.rollouts[a.rollout].tokens.size();
      const auto base = broadcast(A[a.rollout], n);
      LossTerm term{gi, a, {}, AdvantageKind::kCorrectnessOnly};
      if (a.loss_mode == LossMode::kHELoss) {
        term.advantages = he_advantages(base, signal.B[a.rollout], cfg.eta, cfg.kappa);
        term.kind = AdvantageKind::kEntropyRegularized;
      } else if (cfg.eta_prime != 0.0) {
        term.advantages = clipped_bonus_advantages(base, signal.B[a.rollout], cfg.eta_prime, cfg.kappa);
        term.kind = AdvantageKind::kEntropyRegularized;
      } else {
        term.advantages = base;
      }
      terms.push_back(std::move(term));
    }
  }
  return terms;
}

inline std::vector<LossTerm> baseline_terms(const std::vector<RolloutGroup>& groups, const TrainConfig& cfg,
                                            const std::vector<std::vector<LogProbTrace>>& current, std::uint64_t step) {
  std::vector<LossTerm> terms;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    auto A = grpo_advantages(group_rewards(g));
    if (cfg.method == Method::kEntropyDrivenAdvantage) {
      std::vector<double> seq_entropy;
      for (const auto& r : g.rollouts) {
        double s = 0.0;
        for (double h : r.step_entropies) s += h;
        seq_entropy.push_back(r.step_entropies.empty() ? 0.0 : s / static_cast<double>(r.step_entropies.size()));
      }
      A = entropy_driven_scale(A, seq_entropy);
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto& r = g.rollouts[i];
      LossTerm term{gi, {i, LossMode::kNormalLoss}, broadcast(A[i], r.tokens.size()), AdvantageKind::kBaseline};
      if (cfg.method == Method::kEntropyAdvantage) {
        for (std::size_t t = 0; t < r.tokens.size(); ++t) {
          term.advantages[t] += std::min(cfg.ent_adv_alpha * r.step_entropies[t], std::abs(A[i]) / cfg.kappa);
        }
      }
      terms.push_back(std::move(term));
    }
  }
  if (cfg.method == Method::kForkingTokenOnly) {
    std::vector<double> entropies;
    for (const auto& term : terms) {
      const auto& h = groups[term.group].rollouts[term.assignment.rollout].step_entropies;
      entropies.insert(entropies.end(), h.begin(), h.end());
    }
    const auto mask = forking_token_mask(entropies, cfg.forking_keep);
    std::size_t k = 0;
    for (auto& term : terms) {
      for (auto& a : term.advantages) a *= mask[k++];
    }
  } else if (cfg.method == Method::kClipCov) {
    std::vector<double> adv, logp;
    for (const auto& term : terms) {
      const auto& cur = current[term.group][term.assignment.rollout];
      adv.insert(adv.end(), term.advantages.begin(), term.advantages.end());
      logp.insert(logp.end(), cur.values.begin(), cur.values.end());
    }
    Rng rng({cfg.seed, static_cast<std::uint64_t>(Stream::kClipCov), step});
    const auto mask = clip_cov_mask(clip_cov_statistics(adv, logp), cfg.clipcov_ratio, cfg.clipcov_lower,
                                    cfg.clipcov_upper, rng);
    std::size_t k = 0;
    for (auto& term : terms) {
      for (auto& a : term.advantages) a *= mask[k++];
    }
  }
  return terms;
}

}  // namespace detail

// Evaluates the configured method's objective at `params` on groups collected
// under an old snapshot (their recorded traces), together with its gradient.
//
//   J = (1/G) sum_groups sum_assignments L(assignment)
//
// plus, for EntropyRegularization, coef * (1/G) sum of step entropies at the
// sampled positions.
inline ObjectiveResult method_objective(const PolicyParameters& params, const std::vector<RolloutGroup>& groups,
                                        const TrainConfig& cfg, std::uint64_t step = 0, bool with_gradient = true) {
  cfg.validate();
  ObjectiveResult out;
  const double inv_g = 1.0 / static_cast<double>(cfg.group_size);

  // Current log-probs under each context, computed only where needed.
  std::vector<std::vector<LogProbTrace>> current_normal(groups.size()), current_he(groups.size());
  std::vector<std::vector<char>> have_normal(groups.size()), have_he(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    current_normal[gi].resize(groups[gi].size());
    current_he[gi].resize(groups[gi].size());
    have_normal[gi].assign(groups[gi].size(), 0);
    have_he[gi].assign(groups[gi].size(), 0);
  }
  auto current = [&](std::size_t gi, std::size_t ri, ContextTag ctx) -> const LogProbTrace& {
    const bool normal = ctx == ContextTag::kNormal;
    auto& slot = normal ? current_normal[gi][ri] : current_he[gi][ri];
    auto& have = normal ? have_normal[gi][ri] : have_he[gi][ri];
    if (!have) {
      slot = score_sequence(params, make_context(groups[gi].query, ctx), groups[gi].rollouts[ri].tokens);
      have = 1;
    }
    return slot;
  };

  std::vector<detail::LossTerm> terms;
  if (cfg.method == Method::kPolicySplit) {
    terms = detail::policy_split_terms(groups, cfg);
  } else {
    if (cfg.method == Method::kClipCov) {
      for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        for (std::size_t ri = 0; ri < groups[gi].size(); ++ri) current(gi, ri, ContextTag::kNormal);
      }
    }
    terms = detail::baseline_terms(groups, cfg, current_normal, step);
  }

  out.assignments_per_group.assign(groups.size(), 0);
  std::vector<WeightedSequence> batch;
  batch.reserve(terms.size());
  for (const auto& term : terms) {
    const auto& g = groups[term.group];
    const auto& r = g.rollouts[term.assignment.rollout];
    const ContextTag ctx = context_of(term.assignment.loss_mode);
    const auto& cur = current(term.group, term.assignment.rollout, ctx);
    ClippedLoss loss;
    try {
      loss = ppo_clipped_loss(r.old_trace(ctx), cur, term.advantages, cfg.epsilon_ppo);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (query " + std::to_string(g.query.id) + ", rollout " +
                         std::to_string(r.rollout_index) + ")");
    }
    out.objective += inv_g * loss.loss;
    for (double rho : loss.ratios) out.max_ratio_deviation = std::max(out.max_ratio_deviation, std::abs(rho - 1.0));
    for (auto& w : loss.weights) {
      w *= inv_g;
      if (w != 0.0) ++out.nonzero_weight_tokens;
    }
    out.audit.push_back({term.group, term.assignment, term.kind});
    out.assignments_per_group[term.group] += 1;
    if (with_gradient) batch.push_back({make_context(g.query, ctx), r.tokens, std::move(loss.weights)});
  }
  if (with_gradient) out.gradient = weighted_logprob_gradient(params, batch);

  if (cfg.method == Method::kEntropyRegularization && cfg.ent_reg_coef != 0.0) {
    std::vector<WeightedSequence> ent_batch;
    for (const auto& g : groups) {
      for (const auto& r : g.rollouts) {
        const auto ctx = make_context(g.query, ContextTag::kNormal);
        for (double h : position_entropies(params, ctx, r.tokens)) out.entropy_term += cfg.ent_reg_coef * inv_g * h;
        if (with_gradient) {
          ent_batch.push_back({ctx, r.tokens, std::vector<double>(r.tokens.size(), cfg.ent_reg_coef * inv_g)});
        }
      }
    }
    out.objective += out.entropy_term;
    if (with_gradient) {
      const auto eg = weighted_entropy_gradient(params, ent_batch);
      for (std::size_t i = 0; i < eg.size(); ++i) out.gradient[i] += eg[i];
    }
  }
  if (!std::isfinite(out.objective)) throw NumericError("objective is not finite");
  return out;
}

inline ObjectiveResult policy_split_objective(const PolicyParameters& params, const std::vector<RolloutGroup>& groups,
                                              const TrainConfig& cfg) {
  if (cfg.method != Method::kPolicySplit) throw ConfigError("policy_split_objective: method must be PolicySplit");
  return method_objective(params, groups, cfg);
}

inline ObjectiveResult baseline_objective(const PolicyParameters& params, const std::vector<RolloutGroup>& groups,
                                          const TrainConfig& cfg, std::uint64_t step = 0) {
  if (cfg.method == Method::kPolicySplit) throw ConfigError("baseline_objective: method must not be PolicySplit");
  return method_objective(params, groups, cfg, step);
}

// ---------------------------------------------------------------------------
// Training loop

struct StepMetrics {
  std::int64_t step = 0;
  Method method = Method::kGRPO;
  std::string mode;  // "normal" for single-mode methods, "dual" for PolicySplit
  double mean_reward = 0.0;
  double mean_entropy_bits = 0.0;
  double mean_length = 0.0;
  double inter_mode_kl = 0.0;  // k1 over HE-sampled tokens, nats
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct TrainingState {
  PolicyParameters params;
  std::int64_t step = 0;
  AdamMoments moments;
  std::vector<StepMetrics> history;

  static TrainingState start(PolicyParameters params) {
    TrainingState s;
    s.moments = AdamMoments::zeros(params.values.size());
    s.params = std::move(params);
    return s;
  }

  void validate() const {
    params.validate();
    if (moments.first.size() != params.values.size() || moments.second.size() != params.values.size()) {
      throw ValidationError("training state: optimizer moments do not match parameters");
    }
  }
};

struct StepReport {
  StepMetrics metrics;
  std::vector<RolloutGroup> groups;
  std::vector<AssignmentAudit> audit;
  std::vector<std::size_t> assignments_per_group;
  double max_ratio_deviation = 0.0;
};

// Queries for a step: a seeded permutation of the corpus per epoch, consumed
// in order.
inline std::vector<Query> select_batch(const std::vector<Query>& corpus, std::int64_t step, int batch,
                                       std::uint64_t seed) {
  if (corpus.empty()) throw ValidationError("select_batch: empty corpus");
  const auto n = static_cast<std::int64_t>(corpus.size());
  std::vector<Query> out;
  for (int j = 0; j < batch; ++j) {
    const std::int64_t flat = step * batch + j;
    const std::int64_t epoch = flat / n;
    std::vector<std::size_t> perm(corpus.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng({seed, static_cast<std::uint64_t>(Stream::kCorpusTrain), 0xba7c5ULL, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    out.push_back(corpus[perm[static_cast<std::size_t>(flat % n)]]);
  }
  return out;
}

inline std::vector<RolloutGroup> collect_groups(const PolicyParameters& params, const std::vector<Query>& batch,
                                                const TrainConfig& cfg, std::int64_t step) {
  std::vector<RolloutGroup> groups(batch.size());
  const std::uint64_t seed = derive_seed({cfg.seed, static_cast<std::uint64_t>(Stream::kRollout),
                                          static_cast<std::uint64_t>(step)});
  parallel_for(batch.size(), cfg.workers, [&](std::size_t i) {
    groups[i] = sample_group(params, batch[i], cfg.group_size, cfg.max_len, cfg.temperature_train, seed, cfg.layout());
  });
  return groups;
}

// Snapshot -> sample groups -> assignments -> advantages -> one optimizer
// update -> advance step.
inline StepReport train_step(TrainingState& state, const std::vector<Query>& batch, const TrainConfig& cfg) {
  cfg.validate();
  StepReport report;
  report.groups = collect_groups(state.params, batch, cfg, state.step);
  ObjectiveResult obj = method_objective(state.params, report.groups, cfg, static_cast<std::uint64_t>(state.step));
  for (std::size_t i = 0; i < obj.gradient.size(); ++i) {
    if (!std::isfinite(obj.gradient[i])) {
      throw NumericError("train_step " + std::to_string(state.step) + ": non-finite gradient at parameter " +
                         std::to_string(i) + " (value " + std::to_string(obj.gradient[i]) + ")");
    }
  }
  AdamWConfig opt;
  opt.weight_decay = cfg.weight_decay;
  opt.clip_norm = cfg.clip_norm;
  const double grad_norm = optimizer_update(state.moments, state.params.values, obj.gradient, cfg.lr, opt);
  for (std::size_t i = 0; i < state.params.values.size(); ++i) {
    if (!std::isfinite(state.params.values[i])) {
      throw NumericError("train_step " + std::to_string(state.step) + ": parameter " + std::to_string(i) +
                         " became non-finite");
    }
  }

  StepMetrics m;
  m.step = state.step;
  m.method = cfg.method;
  m.mode = cfg.method == Method::kPolicySplit ? "dual" : "normal";
  std::size_t rollouts = 0, tokens = 0, he_tokens = 0;
  double reward = 0.0, entropy = 0.0, kl = 0.0;
  for (const auto& g : report.groups) {
    for (const auto& r : g.rollouts) {
      ++rollouts;
      reward += r.reward;
      tokens += r.tokens.size();
      for (double h : r.step_entropies) entropy += h;
      if (r.sampled_mode == ContextTag::kHighEntropy) {
        for (std::size_t t = 0; t < r.tokens.size(); ++t) kl += r.old_logprobs_he.values[t] - r.old_logprobs_normal.values[t];
        he_tokens += r.tokens.size();
      }
    }
  }
  m.mean_reward = rollouts ? reward / static_cast<double>(rollouts) : 0.0;
  m.mean_length = rollouts ? static_cast<double>(tokens) / static_cast<double>(rollouts) : 0.0;
  m.mean_entropy_bits = tokens ? entropy / static_cast<double>(tokens) / kLn2 : 0.0;
  m.inter_mode_kl = he_tokens ? kl / static_cast<double>(he_tokens) : 0.0;
  m.loss = obj.objective;
  m.grad_norm = grad_norm;

  state.step += 1;
  state.params.version += 1;
  state.history.push_back(m);
  report.metrics = m;
  report.audit = std::move(obj.audit);
  report.assignments_per_group = std::move(obj.assignments_per_group);
  report.max_ratio_deviation = obj.max_ratio_deviation;
  return report;
}

// ---------------------------------------------------------------------------
// Metrics CSV: step,method,mode,mean_reward,mean_entropy_bits,mean_length,
//              inter_mode_kl,loss,grad_norm

inline constexpr const char* kMetricsHeader =
    "step,method,mode,mean_reward,mean_entropy_bits,mean_length,inter_mode_kl,loss,grad_norm";

inline std::string format_metrics_row(const StepMetrics& m) {
  std::ostringstream os;
  os << std::setprecision(17) << m.step << ',' << to_string(m.method) << ',' << m.mode << ',' << m.mean_reward << ','
     << m.mean_entropy_bits << ',' << m.mean_length << ',' << m.inter_mode_kl << ',' << m.loss << ',' << m.grad_norm;
  return os.str();
}

// Correct responses seen during training, split by the sampling mode.
struct DiscoveryLog {
  std::set<std::pair<std::int64_t, TokenSequence>> normal;
  std::set<std::pair<std::int64_t, TokenSequence>> high_entropy;

  void record(const std::vector<RolloutGroup>& groups) {
    for (const auto& g : groups) {
      for (const auto& r : g.rollouts) {
        if (r.reward != 1.0) continue;
        (r.sampled_mode == ContextTag::kNormal ? normal : high_entropy).insert({r.query_id, r.tokens});
      }
    }
  }

  // True when the high-entropy discoveries contain every normal-mode
  // discovery and at least one more.
  bool high_entropy_strict_superset() const {
    if (high_entropy.size() <= normal.size()) return false;
    return std::includes(high_entropy.begin(), high_entropy.end(), normal.begin(), normal.end());
  }
};

}  // namespace psplit

#endif  // PSPLIT_TRAINER_HPP_
