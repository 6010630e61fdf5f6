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

// Evaluation and analysis: per-mode accuracy/entropy/length, inter-mode
// forward KL, best-of-n, n-gram and self-BLEU diversity, and prefix probes.

#ifndef PSPLIT_ANALYSIS_HPP_
#define PSPLIT_ANALYSIS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "psplit/checkpoint.hpp"
#include "psplit/core_math.hpp"
#include "psplit/environment.hpp"
#include "psplit/errors.hpp"
#include "psplit/parallel.hpp"
#include "psplit/policy.hpp"
#include "psplit/rng.hpp"

namespace psplit {

struct EvalOptions {
  int runs = 8;
  int max_len = 10;
  SamplingOptions sampling{0.6, 20, 0.95};
  std::uint64_t seed = 0;
  int workers = 1;
};

// One sampled response per (query, run) under a mode, plus the untempered
// step entropies along it.
struct EvalSample {
  TokenSequence tokens;
  double reward = 0.0;
  std::vector<double> entropies;  // nats
};

struct ModeSamples {
  Mode mode;
  std::vector<std::vector<EvalSample>> per_query;  // [query][run]
};

// Run r of query q always uses the stream (seed, mode, q.id, r), so a smaller
// run count samples a prefix of a larger one.
inline ModeSamples sample_mode(const PolicyParameters& params, std::span<const Query> queries, const Mode& mode,
                               const EvalOptions& opts) {
  if (opts.runs < 1) throw ValidationError("evaluation: runs must be at least 1");
  ModeSamples out;
  out.mode = mode;
  out.per_query.resize(queries.size());
  const std::uint64_t mode_key = fnv1a64(mode.label());
  parallel_for(queries.size(), opts.workers, [&](std::size_t qi) {
    const Query& q = queries[qi];
    const Context ctx{mode, q.query_tokens, {}};
    auto& slot = out.per_query[qi];
    slot.resize(static_cast<std::size_t>(opts.runs));
    for (int r = 0; r < opts.runs; ++r) {
      Rng rng({opts.seed, static_cast<std::uint64_t>(Stream::kEvaluation), mode_key, static_cast<std::uint64_t>(q.id),
               static_cast<std::uint64_t>(r)});
      auto s = sample_rollout(params, ctx, opts.max_len, opts.sampling, rng);
      auto& e = slot[static_cast<std::size_t>(r)];
      e.reward = verify(q, s.tokens).reward;
      e.tokens = std::move(s.tokens);
      e.entropies = std::move(s.entropies);
    }
  });
  return out;
}

struct ModeEvaluation {
  double accuracy = 0.0;
  double mean_entropy_bits = 0.0;  // pooled over every generated position
  double mean_length = 0.0;
};

inline ModeEvaluation summarize_mode(const ModeSamples& samples) {
  ModeEvaluation ev;
  std::size_t n = 0, positions = 0;
  double reward = 0.0, entropy = 0.0, length = 0.0;
  for (const auto& runs : samples.per_query) {
    for (const auto& s : runs) {
      ++n;
      reward += s.reward;
      length += static_cast<double>(s.tokens.size());
      for (double h : s.entropies) entropy += h;
      positions += s.entropies.size();
    }
  }
  if (n) {
    ev.accuracy = reward / static_cast<double>(n);
    ev.mean_length = length / static_cast<double>(n);
  }
  if (positions) ev.mean_entropy_bits = entropy / static_cast<double>(positions) / kLn2;
  return ev;
}

inline ModeEvaluation evaluate_mode(const PolicyParameters& params, std::span<const Query> queries, const Mode& mode,
                                    const EvalOptions& opts) {
  return summarize_mode(sample_mode(params, queries, mode, opts));
}

// Fraction of queries where at least one of the first n runs is correct.
inline double best_of_n(const ModeSamples& samples, int n) {
  if (n < 1) throw ValidationError("best_of_n: n must be at least 1");
  if (samples.per_query.empty()) return 0.0;
  std::size_t solved = 0;
  for (const auto& runs : samples.per_query) {
    if (static_cast<std::size_t>(n) > runs.size()) throw ValidationError("best_of_n: n exceeds sampled runs");
    for (int r = 0; r < n; ++r) {
      if (runs[static_cast<std::size_t>(r)].reward == 1.0) {
        ++solved;
        break;
      }
    }
  }
  return static_cast<double>(solved) / static_cast<double>(samples.per_query.size());
}

inline double best_of_n(const PolicyParameters& params, std::span<const Query> queries, const Mode& mode, int n,
                        EvalOptions opts) {
  opts.runs = n;
  return best_of_n(sample_mode(params, queries, mode, opts), n);
}

struct InterModeKl {
  double exact = 0.0;           // mean exact KL(HE || Normal) per visited position, nats
  double k1 = 0.0;              // mean log pi_HE - log pi over the same tokens
  double k1_standard_error = 0.0;
  std::size_t positions = 0;
};

// Samples `budget` rollouts per query from the high-entropy mode at
// temperature 1 and averages the exact per-step forward KL over every visited
// context. The k1 estimate over the same tokens is returned alongside.
inline InterModeKl inter_mode_kl(const PolicyParameters& params, std::span<const Query> queries, int budget,
                                 int max_len, std::uint64_t seed, int workers = 1) {
  if (budget < 1) throw ValidationError("inter_mode_kl: budget must be at least 1 rollout per query");
  struct Partial {
    std::vector<double> exact, k1;
  };
  std::vector<Partial> partial(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t qi) {
    const Query& q = queries[qi];
    const Context he{Mode::high_entropy(), q.query_tokens, {}};
    for (int r = 0; r < budget; ++r) {
      Rng rng({seed, static_cast<std::uint64_t>(Stream::kEvaluation), 0x6b6cULL, static_cast<std::uint64_t>(q.id),
               static_cast<std::uint64_t>(r)});
      const auto s = sample_rollout(params, he, max_len, SamplingOptions{1.0, -1, 1.0}, rng);
      const auto normal_trace = score_sequence(params, Context{Mode::normal(), q.query_tokens, {}}, s.tokens);
      Context walk_he = he;
      Context walk_n{Mode::normal(), q.query_tokens, {}};
      for (std::size_t t = 0; t < s.tokens.size(); ++t) {
        const auto p = next_token_distribution(params, walk_he);
        const auto qd = next_token_distribution(params, walk_n);
        partial[qi].exact.push_back(exact_kl(p, qd));
        partial[qi].k1.push_back(s.trace.values[t] - normal_trace.values[t]);
        walk_he.generated_prefix.push_back(s.tokens[t]);
        walk_n.generated_prefix.push_back(s.tokens[t]);
      }
    }
  });
  std::vector<double> exact, k1;
  for (const auto& p : partial) {
    exact.insert(exact.end(), p.exact.begin(), p.exact.end());
    k1.insert(k1.end(), p.k1.begin(), p.k1.end());
  }
  InterModeKl out;
  out.positions = exact.size();
  if (exact.empty()) return out;
  out.exact = mean_and_std(exact).mean;
  const auto k = mean_and_std(k1);
  out.k1 = k.mean;
  out.k1_standard_error = k.std / std::sqrt(static_cast<double>(k1.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Diversity

namespace detail {

inline std::map<TokenSequence, int> ngram_counts(const TokenSequence& s, std::size_t n) {
  std::map<TokenSequence, int> counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) counts[TokenSequence(s.begin() + static_cast<std::ptrdiff_t>(i),
                                                                        s.begin() + static_cast<std::ptrdiff_t>(i + n))]++;
  return counts;
}

}  // namespace detail

// Unique / total n-grams of one sequence; 0 when it has no n-gram.
inline double ngram_diversity_ratio(const TokenSequence& s, int n) {
  if (n < 1) throw ValidationError("ngram_diversity_ratio: n must be positive");
  const auto nn = static_cast<std::size_t>(n);
  if (s.size() < nn) return 0.0;
  const auto counts = detail::ngram_counts(s, nn);
  return static_cast<double>(counts.size()) / static_cast<double>(s.size() - nn + 1);
}

// Mean over the set of the per-rollout unique/total n-gram ratio.
inline double div_ngram(std::span<const TokenSequence> rollouts, int n = 2) {
  if (rollouts.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : rollouts) total += ngram_diversity_ratio(r, n);
  return total / static_cast<double>(rollouts.size());
}

// Multi-reference BLEU-4: clipped n-gram precisions (max count over
// references), add-one smoothing on zero precisions, uniform geometric mean,
// brevity penalty against the closest reference length.
inline double bleu4(const TokenSequence& hypothesis, std::span<const TokenSequence> references) {
  if (hypothesis.empty() || references.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto hyp = detail::ngram_counts(hypothesis, n);
    std::map<TokenSequence, int> max_ref;
    for (const auto& ref : references) {
      for (const auto& [g, c] : detail::ngram_counts(ref, n)) max_ref[g] = std::max(max_ref[g], c);
    }
    double matched = 0.0, total = 0.0;
    for (const auto& [g, c] : hyp) {
      total += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) matched += std::min(c, it->second);
    }
    const double precision = matched > 0.0 ? matched / total : 1.0 / (total + 1.0);
    log_sum += 0.25 * std::log(precision);
  }
  const auto c = static_cast<double>(hypothesis.size());
  double r = static_cast<double>(references.front().size());
  for (const auto& ref : references) {
    const auto len = static_cast<double>(ref.size());
    if (std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r)) r = len;
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

// 1 - mean_i BLEU(o_i, O \ {o_i}).
inline double div_bleu(std::span<const TokenSequence> rollouts) {
  if (rollouts.size() < 2) throw ValidationError("div_bleu: need at least two rollouts");
  double total = 0.0;
  std::vector<TokenSequence> others;
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    others.clear();
    for (std::size_t j = 0; j < rollouts.size(); ++j) {
      if (j != i) others.push_back(rollouts[j]);
    }
    total += bleu4(rollouts[i], others);
  }
  return std::clamp(1.0 - total / static_cast<double>(rollouts.size()), 0.0, 1.0);
}

struct Diversity {
  double div_ngram = 0.0;
  double div_bleu = 0.0;
};

// Per-query diversity of the sampled runs, averaged over queries.
inline Diversity mode_diversity(const ModeSamples& samples, int n = 2) {
  Diversity d;
  if (samples.per_query.empty()) return d;
  std::vector<TokenSequence> set;
  for (const auto& runs : samples.per_query) {
    set.clear();
    for (const auto& s : runs) set.push_back(s.tokens);
    d.div_ngram += div_ngram(set, n);
    if (set.size() >= 2) d.div_bleu += div_bleu(set);
  }
  const auto q = static_cast<double>(samples.per_query.size());
  d.div_ngram /= q;
  d.div_bleu /= q;
  return d;
}

// ---------------------------------------------------------------------------
// Prefix probes and reports

struct ProbeResult {
  std::string prefix;
  double accuracy = 0.0;
  double mean_entropy_bits = 0.0;
  double delta_entropy_bits = 0.0;  // against the no-prefix mode
};

// Evaluates each named prefix and reports its entropy shift relative to the
// normal mode. Held-out prefixes must differ from the trained one.
inline std::vector<ProbeResult> prompt_generalization_probe(const PolicyParameters& params,
                                                            std::span<const Query> queries,
                                                            const std::vector<std::string>& prefixes,
                                                            const EvalOptions& opts,
                                                            const std::string& trained_prefix = kHighEntropyPrefix) {
  const auto& vocab = params.spec.vocab;
  const TokenSequence& trained = vocab.prefix(trained_prefix);
  for (const auto& id : prefixes) {
    if (id != trained_prefix && vocab.prefix(id) == trained) {
      throw ConfigError("probe prefix '" + id + "' collides with the trained prefix '" + trained_prefix + "'");
    }
  }
  const auto base = evaluate_mode(params, queries, Mode::normal(), opts);
  std::vector<ProbeResult> out;
  for (const auto& id : prefixes) {
    const auto ev = evaluate_mode(params, queries, Mode::named(id), opts);
    out.push_back({id, ev.accuracy, ev.mean_entropy_bits, ev.mean_entropy_bits - base.mean_entropy_bits});
  }
  return out;
}

struct MetricsRecord {
  std::string checkpoint_id;
  std::string mode;
  double accuracy = 0.0;
  double mean_entropy_bits = 0.0;
  double mean_length = 0.0;
  double forward_kl_he_from_normal = 0.0;
  double best_of_n = 0.0;
  double div_ngram = 0.0;
  double div_bleu = 0.0;

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(accuracy) || !unit(best_of_n) || !unit(div_ngram) || !unit(div_bleu) || mean_entropy_bits < 0.0 ||
        mean_length < 0.0) {
      throw ValidationError("metrics record for mode '" + mode + "' has a rate outside its range");
    }
  }
};

inline MetricsRecord analyze_mode(const PolicyParameters& params, std::span<const Query> queries, const Mode& mode,
                                  const EvalOptions& opts, const std::string& checkpoint_id, double forward_kl) {
  const auto samples = sample_mode(params, queries, mode, opts);
  const auto ev = summarize_mode(samples);
  const auto div = mode_diversity(samples);
  MetricsRecord rec{checkpoint_id, mode.label(), ev.accuracy, ev.mean_entropy_bits, ev.mean_length, forward_kl,
                    best_of_n(samples, opts.runs), div.div_ngram, div.div_bleu};
  rec.validate();
  return rec;
}

inline constexpr const char* kReportHeader =
    "checkpoint,mode,accuracy,mean_entropy_bits,mean_length,forward_kl_he_from_normal,best_of_n,div_ngram,div_bleu";

inline void write_report_csv(std::ostream& os, const std::vector<MetricsRecord>& records) {
  os << kReportHeader << '\n' << std::setprecision(17);
  for (const auto& r : records) {
    os << r.checkpoint_id << ',' << r.mode << ',' << r.accuracy << ',' << r.mean_entropy_bits << ',' << r.mean_length
       << ',' << r.forward_kl_he_from_normal << ',' << r.best_of_n << ',' << r.div_ngram << ',' << r.div_bleu << '\n';
  }
}

// Plain-text tables: per-mode accuracy/entropy (with best-of-n), the
// normal-vs-high-entropy deltas with forward KL, and the prefix probes.
inline void write_summary(std::ostream& os, const std::vector<MetricsRecord>& records,
                          const std::vector<ProbeResult>& probes, int n) {
  os << std::fixed << std::setprecision(4);
  os << "mode                 acc      avg@" << n << "    best@" << n << "   ent(bits)  len      div-2gram  div-bleu\n";
  for (const auto& r : records) {
    os << std::left << std::setw(20) << r.mode << std::right << ' ' << std::setw(7) << r.accuracy << "  "
       << std::setw(7) << r.accuracy << "  " << std::setw(7) << r.best_of_n << "  " << std::setw(8)
       << r.mean_entropy_bits << "  " << std::setw(7) << r.mean_length << "  " << std::setw(8) << r.div_ngram
       << "  " << std::setw(8) << r.div_bleu << '\n';
  }
  const MetricsRecord* normal = nullptr;
  const MetricsRecord* he = nullptr;
  for (const auto& r : records) {
    if (r.mode == "normal") normal = &r;
    if (r.mode == "high_entropy") he = &r;
  }
  if (normal && he) {
    os << "\n|dAcc|    |dEnt|    |dLen|    D_KL(HE||N)\n"
       << std::setw(7) << std::abs(he->accuracy - normal->accuracy) << "   " << std::setw(7)
       << std::abs(he->mean_entropy_bits - normal->mean_entropy_bits) << "   " << std::setw(7)
       << std::abs(he->mean_length - normal->mean_length) << "   " << std::setw(7) << he->forward_kl_he_from_normal
       << '\n';
  }
  if (!probes.empty()) {
    os << "\nprefix               acc      ent(bits)  dEnt\n";
    for (const auto& p : probes) {
      os << std::left << std::setw(20) << p.prefix << std::right << ' ' << std::setw(7) << p.accuracy << "  "
         << std::setw(8) << p.mean_entropy_bits << "  " << std::showpos << std::setw(7) << p.delta_entropy_bits
         << std::noshowpos << '\n';
    }
  }
}

}  // namespace psplit

#endif  // PSPLIT_ANALYSIS_HPP_
