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

// Autoregressive softmax sequence policies over a small vocabulary.
//
// Both architectures condition on (mode prefix, query, generated tokens). The
// mode prefix is a reserved token sequence looked up in the vocabulary, so the
// high-entropy mode is the same parameterization evaluated on a prefixed
// context.
//
//   TabularSoftmax  logits = S[row] + M[mode_row],
//                   row      = hash(query ++ generated) mod table_rows
//                   mode_row = hash(prefix ++ query ++ generated) mod table_rows
//   TinyMlp         logits = W2 tanh(W1 [bag(prefix), emb(body_0..W-1)] + b1) + b2
//
// S is shared by every mode; M gives each mode (the unprefixed one included)
// its own rows, so all modes move at the same rate under the optimizer.
// With prefix_sensitive = false the mode table (tabular) or the prefix bag
// slot (MLP) are absent, and both modes are identical by construction.

#ifndef PSPLIT_POLICY_HPP_
#define PSPLIT_POLICY_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psplit/core_math.hpp"
#include "psplit/errors.hpp"
#include "psplit/optimizer.hpp"
#include "psplit/rng.hpp"
#include "psplit/vocabulary.hpp"

namespace psplit {

enum class Architecture { kTabularSoftmax = 0, kTinyMlp = 1 };

inline const char* to_string(Architecture a) {
  return a == Architecture::kTabularSoftmax ? "TabularSoftmax" : "TinyMlp";
}

inline Architecture parse_architecture(const std::string& name) {
  if (name == "TabularSoftmax") return Architecture::kTabularSoftmax;
  if (name == "TinyMlp") return Architecture::kTinyMlp;
  throw ValidationError("unknown architecture '" + name + "'");
}

struct ArchitectureDims {
  int context_window = 24;  // max prefix + query + generated tokens
  int table_rows = 65536;   // tabular only
  int embed_dim = 8;        // MLP only
  int hidden_width = 32;    // MLP only
  bool prefix_sensitive = true;

  bool operator==(const ArchitectureDims&) const = default;
};

struct PolicySpec {
  Architecture architecture = Architecture::kTabularSoftmax;
  ArchitectureDims dims;
  Vocabulary vocab = Vocabulary::standard();

  int outputs() const { return vocab.output_count; }
  int prefix_tables() const { return dims.prefix_sensitive ? 1 : 0; }

  std::size_t parameter_count() const {
    const auto n_out = static_cast<std::size_t>(outputs());
    if (architecture == Architecture::kTabularSoftmax) {
      return static_cast<std::size_t>(1 + prefix_tables()) *
             static_cast<std::size_t>(dims.table_rows) * n_out;
    }
    const auto d = static_cast<std::size_t>(dims.embed_dim);
    const auto h = static_cast<std::size_t>(dims.hidden_width);
    return static_cast<std::size_t>(vocab.size) * d + h * input_width() + h + n_out * h + n_out;
  }

  // MLP input: one bag slot for the prefix plus one slot per body position.
  std::size_t input_width() const {
    return static_cast<std::size_t>(dims.embed_dim) * static_cast<std::size_t>(dims.context_window + 1);
  }

  void validate() const {
    vocab.validate();
    if (dims.context_window < 1) throw ValidationError("policy: context_window must be positive");
    if (architecture == Architecture::kTabularSoftmax && dims.table_rows < 1) {
      throw ValidationError("policy: table_rows must be positive");
    }
    if (architecture == Architecture::kTinyMlp && (dims.embed_dim < 1 || dims.hidden_width < 1)) {
      throw ValidationError("policy: embed_dim and hidden_width must be positive");
    }
  }

  bool operator==(const PolicySpec&) const = default;
};

struct PolicyParameters {
  PolicySpec spec;
  std::vector<double> values;
  std::int64_t version = 0;

  void validate() const {
    spec.validate();
    if (values.size() != spec.parameter_count()) {
      throw ValidationError("policy: parameter array has " + std::to_string(values.size()) +
                            " entries, architecture declares " +
                            std::to_string(spec.parameter_count()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw NumericError("policy: parameter " + std::to_string(i) + " is not finite");
      }
    }
  }
};

// Which conditioning prefix a context carries.
struct Mode {
  enum class Kind { kNormal, kHighEntropy, kNamed };
  Kind kind = Kind::kNormal;
  std::string name;

  static Mode normal() { return {}; }
  static Mode high_entropy() { return {Kind::kHighEntropy, kHighEntropyPrefix}; }
  static Mode named(std::string id) { return {Kind::kNamed, std::move(id)}; }

  std::string label() const {
    switch (kind) {
      case Kind::kNormal: return "normal";
      case Kind::kHighEntropy: return "high_entropy";
      case Kind::kNamed: return name;
    }
    return "";
  }
  ContextTag tag() const { return kind == Kind::kNormal ? ContextTag::kNormal : ContextTag::kHighEntropy; }

  bool operator==(const Mode&) const = default;
};

struct Context {
  Mode mode;
  TokenSequence query_tokens;
  TokenSequence generated_prefix;
};

inline TokenSequence resolve_prefix(const Vocabulary& vocab, const Mode& mode) {
  if (mode.kind == Mode::Kind::kNormal) return {};
  return vocab.prefix(mode.kind == Mode::Kind::kHighEntropy ? std::string(kHighEntropyPrefix) : mode.name);
}

// Initial parameters: zero logits for the tabular policy, small seeded random
// weights for the MLP with zero reserved-token embeddings so that every mode
// starts out identical.
inline PolicyParameters init_parameters(const PolicySpec& spec, std::uint64_t seed) {
  spec.validate();
  PolicyParameters p;
  p.spec = spec;
  p.values.assign(spec.parameter_count(), 0.0);
  if (spec.architecture == Architecture::kTinyMlp) {
    Rng rng({seed, static_cast<std::uint64_t>(Stream::kInit)});
    const auto d = static_cast<std::size_t>(spec.dims.embed_dim);
    const auto h = static_cast<std::size_t>(spec.dims.hidden_width);
    const auto in = spec.input_width();
    const auto n_out = static_cast<std::size_t>(spec.outputs());
    std::size_t k = 0;
    for (int t = 0; t < spec.vocab.size; ++t) {
      for (std::size_t j = 0; j < d; ++j, ++k) {
        p.values[k] = spec.vocab.is_reserved(t) ? 0.0 : 0.5 * rng.normal();
      }
    }
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d * 4));
    for (std::size_t i = 0; i < h * in; ++i, ++k) p.values[k] = s1 * rng.normal();
    k += h;  // b1 = 0
    const double s2 = 0.1 / std::sqrt(static_cast<double>(h));
    for (std::size_t i = 0; i < n_out * h; ++i, ++k) p.values[k] = s2 * rng.normal();
  }
  return p;
}

namespace detail {

inline std::uint64_t hash_step(std::uint64_t h, Token t) {
  return mix64(h ^ (static_cast<std::uint64_t>(t) + 0x51ed27ULL) * 0x100000001b3ULL);
}

// Running tabular row hashes of the body and of prefix ++ body.
struct RowHash {
  std::uint64_t body = 0x6a09e667f3bcc908ULL;
  std::uint64_t mode = 0xbb67ae8584caa73bULL;

  explicit RowHash(const TokenSequence& prefix) {
    for (Token r : prefix) mode = hash_step(mode, r);
    mode = hash_step(mode, -2);  // prefix/query boundary
  }
  void push(Token t) {
    body = hash_step(body, t);
    mode = hash_step(mode, t);
  }
};

// Forward pass at one position. Holds what backward needs.
struct Activation {
  std::vector<double> logits;
  // tabular
  std::size_t row = 0;
  std::size_t mode_row = 0;
  // MLP
  std::vector<double> input;
  std::vector<double> hidden;
  std::vector<int> slot_tokens;  // token per body slot, -1 if empty
};

class Network {
 public:
  Network(const PolicyParameters& params, std::span<const double> theta)
      : spec_(params.spec), theta_(theta) {}

  const PolicySpec& spec() const { return spec_; }

  // Forward at the position conditioned on `prefix` and `body`. The tabular
  // row hashes of the body alone and of prefix ++ body arrive precomputed.
  void forward(const TokenSequence& prefix, std::span<const Token> body, std::uint64_t body_hash,
               std::uint64_t mode_hash, Activation& act) const {
    const int n_out = spec_.outputs();
    act.logits.assign(static_cast<std::size_t>(n_out), 0.0);
    if (spec_.architecture == Architecture::kTabularSoftmax) {
      const auto rows = static_cast<std::uint64_t>(spec_.dims.table_rows);
      act.row = static_cast<std::size_t>(body_hash % rows);
      act.mode_row = static_cast<std::size_t>(mode_hash % rows);
      add_row(0, act.row, act.logits);
      if (spec_.dims.prefix_sensitive) add_row(1, act.mode_row, act.logits);
      return;
    }
    const auto d = static_cast<std::size_t>(spec_.dims.embed_dim);
    const auto h = static_cast<std::size_t>(spec_.dims.hidden_width);
    const auto in = spec_.input_width();
    act.input.assign(in, 0.0);
    if (spec_.dims.prefix_sensitive) {
      for (Token r : prefix) {
        for (std::size_t j = 0; j < d; ++j) act.input[j] += theta_[embed_offset(r) + j];
      }
    }
    act.slot_tokens.assign(static_cast<std::size_t>(spec_.dims.context_window), -1);
    for (std::size_t s = 0; s < body.size(); ++s) {
      act.slot_tokens[s] = body[s];
      for (std::size_t j = 0; j < d; ++j) act.input[(s + 1) * d + j] = theta_[embed_offset(body[s]) + j];
    }
    act.hidden.assign(h, 0.0);
    const std::size_t w1 = w1_offset(), b1 = w1 + h * in;
    for (std::size_t i = 0; i < h; ++i) {
      double z = theta_[b1 + i];
      const double* row = &theta_[w1 + i * in];
      for (std::size_t j = 0; j < in; ++j) z += row[j] * act.input[j];
      act.hidden[i] = std::tanh(z);
    }
    const std::size_t w2 = b1 + h, b2 = w2 + static_cast<std::size_t>(n_out) * h;
    for (int o = 0; o < n_out; ++o) {
      double z = theta_[b2 + static_cast<std::size_t>(o)];
      const double* row = &theta_[w2 + static_cast<std::size_t>(o) * h];
      for (std::size_t i = 0; i < h; ++i) z += row[i] * act.hidden[i];
      act.logits[static_cast<std::size_t>(o)] = z;
    }
  }

  // Accumulates d(objective)/d(theta) given d(objective)/d(logits).
  void backward(const TokenSequence& prefix, const Activation& act, std::span<const double> dlogits,
                std::span<double> grad) const {
    const auto n_out = static_cast<std::size_t>(spec_.outputs());
    if (spec_.architecture == Architecture::kTabularSoftmax) {
      add_grad_row(0, act.row, dlogits, grad);
      if (spec_.dims.prefix_sensitive) add_grad_row(1, act.mode_row, dlogits, grad);
      return;
    }
    const auto d = static_cast<std::size_t>(spec_.dims.embed_dim);
    const auto h = static_cast<std::size_t>(spec_.dims.hidden_width);
    const auto in = spec_.input_width();
    const std::size_t w1 = w1_offset(), b1 = w1 + h * in, w2 = b1 + h, b2 = w2 + n_out * h;
    std::vector<double> dpre(h, 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double g = dlogits[o];
      if (g == 0.0) continue;
      grad[b2 + o] += g;
      for (std::size_t i = 0; i < h; ++i) {
        grad[w2 + o * h + i] += g * act.hidden[i];
        dpre[i] += g * theta_[w2 + o * h + i];
      }
    }
    std::vector<double> dinput(in, 0.0);
    for (std::size_t i = 0; i < h; ++i) {
      const double g = dpre[i] * (1.0 - act.hidden[i] * act.hidden[i]);
      if (g == 0.0) continue;
      grad[b1 + i] += g;
      for (std::size_t j = 0; j < in; ++j) {
        grad[w1 + i * in + j] += g * act.input[j];
        dinput[j] += g * theta_[w1 + i * in + j];
      }
    }
    if (spec_.dims.prefix_sensitive) {
      for (Token r : prefix) {
        for (std::size_t j = 0; j < d; ++j) grad[embed_offset(r) + j] += dinput[j];
      }
    }
    for (std::size_t s = 0; s < act.slot_tokens.size(); ++s) {
      if (act.slot_tokens[s] < 0) break;
      for (std::size_t j = 0; j < d; ++j) grad[embed_offset(act.slot_tokens[s]) + j] += dinput[(s + 1) * d + j];
    }
  }

 private:
  std::size_t table_offset(int table, std::size_t row) const {
    return (static_cast<std::size_t>(table) * static_cast<std::size_t>(spec_.dims.table_rows) + row) *
           static_cast<std::size_t>(spec_.outputs());
  }
  void add_row(int table, std::size_t row, std::vector<double>& logits) const {
    const std::size_t off = table_offset(table, row);
    for (std::size_t o = 0; o < logits.size(); ++o) logits[o] += theta_[off + o];
  }
  void add_grad_row(int table, std::size_t row, std::span<const double> g, std::span<double> grad) const {
    const std::size_t off = table_offset(table, row);
    for (std::size_t o = 0; o < g.size(); ++o) grad[off + o] += g[o];
  }
  std::size_t embed_offset(Token t) const {
    return static_cast<std::size_t>(t) * static_cast<std::size_t>(spec_.dims.embed_dim);
  }
  std::size_t w1_offset() const {
    return static_cast<std::size_t>(spec_.vocab.size) * static_cast<std::size_t>(spec_.dims.embed_dim);
  }

  const PolicySpec& spec_;
  std::span<const double> theta_;
};

// Walks the positions of `tokens` under `ctx`, calling fn(position, act) after
// each forward pass. Validates the context window and vocabulary.
template <typename Fn>
void for_each_position(const Network& net, const Context& ctx, std::span<const Token> tokens, Fn&& fn) {
  const PolicySpec& spec = net.spec();
  const TokenSequence prefix = resolve_prefix(spec.vocab, ctx.mode);
  TokenSequence body;
  body.reserve(ctx.query_tokens.size() + ctx.generated_prefix.size() + tokens.size());
  RowHash h(prefix);
  auto push = [&](Token t) {
    body.push_back(t);
    h.push(t);
  };
  for (Token t : ctx.query_tokens) {
    if (t < 0 || t >= spec.vocab.size || spec.vocab.is_reserved(t)) {
      throw ValidationError("context: query token " + std::to_string(t) + " is not a legal query token");
    }
    push(t);
  }
  h.push(-1);  // query/response boundary
  for (Token t : ctx.generated_prefix) {
    if (!spec.vocab.is_output(t)) {
      throw ValidationError("context: generated prefix token " + std::to_string(t) + " out of vocabulary");
    }
    push(t);
  }
  Activation act;
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    if (static_cast<int>(prefix.size() + body.size()) > spec.dims.context_window) {
      throw ValidationError("context overflow: " + std::to_string(prefix.size() + body.size()) +
                            " tokens exceed window " + std::to_string(spec.dims.context_window));
    }
    if (!spec.vocab.is_output(tokens[pos])) {
      throw ValidationError("token " + std::to_string(tokens[pos]) + " at position " +
                            std::to_string(pos) + " is out of vocabulary");
    }
    net.forward(prefix, body, h.body, h.mode, act);
    fn(pos, prefix, act);
    push(tokens[pos]);
  }
}

inline void check_window(const PolicySpec& spec, const TokenSequence& prefix, std::size_t body_len) {
  if (static_cast<int>(prefix.size() + body_len) > spec.dims.context_window) {
    throw ValidationError("context overflow: " + std::to_string(prefix.size() + body_len) +
                          " tokens exceed window " + std::to_string(spec.dims.context_window));
  }
}

// log-softmax of logits, used for log-prob lookups.
inline std::vector<double> log_softmax(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  const double lse = peak + std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

// Full-vocabulary distribution from output-head logits (reserved and
// query-only tokens have probability zero).
inline CategoricalDistribution expand_distribution(const Vocabulary& vocab, std::span<const double> logits) {
  CategoricalDistribution head = softmax(logits);
  head.probs.resize(static_cast<std::size_t>(vocab.size), 0.0);
  return head;
}

}  // namespace detail

// Distribution of the next token over the full vocabulary.
inline CategoricalDistribution next_token_distribution(const PolicyParameters& params, const Context& ctx) {
  const detail::Network net(params, params.values);
  CategoricalDistribution out;
  // Score a dummy token to reuse the validated walk; the token never matters.
  const Token probe = 0;
  detail::for_each_position(net, ctx, std::span<const Token>(&probe, 1),
                            [&](std::size_t, const TokenSequence&, const detail::Activation& act) {
                              out = detail::expand_distribution(params.spec.vocab, act.logits);
                            });
  return out;
}

// Per-token log-probabilities of `tokens` under `ctx`.
inline LogProbTrace score_sequence(const PolicyParameters& params, const Context& ctx,
                                   std::span<const Token> tokens) {
  const detail::Network net(params, params.values);
  LogProbTrace trace;
  trace.context_tag = ctx.mode.tag();
  trace.values.resize(tokens.size());
  detail::for_each_position(net, ctx, tokens,
                            [&](std::size_t pos, const TokenSequence&, const detail::Activation& act) {
                              trace.values[pos] = detail::log_softmax(act.logits)[static_cast<std::size_t>(tokens[pos])];
                            });
  return trace;
}

// Exact per-position entropies (nats) of the step distributions along `tokens`.
inline std::vector<double> position_entropies(const PolicyParameters& params, const Context& ctx,
                                              std::span<const Token> tokens) {
  const detail::Network net(params, params.values);
  std::vector<double> out(tokens.size());
  detail::for_each_position(net, ctx, tokens,
                            [&](std::size_t pos, const TokenSequence&, const detail::Activation& act) {
                              const auto lp = detail::log_softmax(act.logits);
                              double h = 0.0;
                              for (double l : lp) h -= std::exp(l) * l;
                              out[pos] = h;
                            });
  return out;
}

struct SampledSequence {
  TokenSequence tokens;
  LogProbTrace trace;                // untempered log-probs under the sampling context
  std::vector<double> entropies;     // exact step entropies (nats), untempered
  bool terminated = false;           // ended with EOS
};

struct SamplingOptions {
  double temperature = 1.0;
  int top_k = -1;      // <= 0 disables
  double top_p = 1.0;  // >= 1 disables
};

// Autoregressive sampling until EOS or max_len. Recorded log-probs are those
// of the temperature-1 policy regardless of the sampling temperature.
inline SampledSequence sample_rollout(const PolicyParameters& params, const Context& ctx, int max_len,
                                      const SamplingOptions& opts, Rng& rng) {
  if (!(opts.temperature > 0.0)) throw ValidationError("sample_rollout: temperature must be positive");
  if (max_len < 1) throw ValidationError("sample_rollout: max_len must be at least 1");
  const detail::Network net(params, params.values);
  const PolicySpec& spec = params.spec;
  const TokenSequence prefix = resolve_prefix(spec.vocab, ctx.mode);

  SampledSequence out;
  out.trace.context_tag = ctx.mode.tag();
  TokenSequence body = ctx.query_tokens;
  detail::RowHash h(prefix);
  for (Token t : ctx.query_tokens) {
    if (t < 0 || t >= spec.vocab.size || spec.vocab.is_reserved(t)) {
      throw ValidationError("context: query token " + std::to_string(t) + " is not a legal query token");
    }
    h.push(t);
  }
  h.push(-1);
  for (Token t : ctx.generated_prefix) {
    if (!spec.vocab.is_output(t)) {
      throw ValidationError("context: generated prefix token " + std::to_string(t) + " out of vocabulary");
    }
    body.push_back(t);
    h.push(t);
  }
  detail::Activation act;
  const auto n_out = static_cast<std::size_t>(spec.outputs());
  std::vector<double> weights(n_out);
  std::vector<std::size_t> order(n_out);
  for (int step = 0; step < max_len; ++step) {
    detail::check_window(spec, prefix, body.size());
    net.forward(prefix, body, h.body, h.mode, act);
    const auto lp = detail::log_softmax(act.logits);
    double ent = 0.0;
    for (double l : lp) ent -= std::exp(l) * l;

    // Tempered, filtered sampling weights.
    const double peak = *std::max_element(act.logits.begin(), act.logits.end());
    double total = 0.0;
    for (std::size_t o = 0; o < n_out; ++o) {
      weights[o] = std::exp((act.logits[o] - peak) / opts.temperature);
      total += weights[o];
    }
    for (auto& w : weights) w /= total;
    if ((opts.top_k > 0 && static_cast<std::size_t>(opts.top_k) < n_out) || opts.top_p < 1.0) {
      for (std::size_t o = 0; o < n_out; ++o) order[o] = o;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
      std::size_t keep = n_out;
      if (opts.top_k > 0) keep = std::min(keep, static_cast<std::size_t>(opts.top_k));
      if (opts.top_p < 1.0) {
        double cum = 0.0;
        for (std::size_t i = 0; i < keep; ++i) {
          cum += weights[order[i]];
          if (cum >= opts.top_p) {
            keep = i + 1;
            break;
          }
        }
      }
      for (std::size_t i = keep; i < n_out; ++i) weights[order[i]] = 0.0;
      total = 0.0;
      for (double w : weights) total += w;
      for (auto& w : weights) w /= total;
    }
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t choice = n_out - 1;
    while (choice > 0 && weights[choice] == 0.0) --choice;
    for (std::size_t o = 0; o < n_out; ++o) {
      cum += weights[o];
      if (u < cum && weights[o] > 0.0) {
        choice = o;
        break;
      }
    }
    const auto token = static_cast<Token>(choice);
    out.tokens.push_back(token);
    out.trace.values.push_back(lp[choice]);
    out.entropies.push_back(ent);
    body.push_back(token);
    h.push(token);
    if (token == tok::kEos) {
      out.terminated = true;
      break;
    }
  }
  return out;
}

// Argmax decoding (the temperature -> 0 limit).
inline TokenSequence greedy_decode(const PolicyParameters& params, const Context& ctx, int max_len) {
  TokenSequence out;
  Context walk = ctx;
  for (int step = 0; step < max_len; ++step) {
    const auto dist = next_token_distribution(params, walk);
    const auto best = static_cast<Token>(std::max_element(dist.probs.begin(), dist.probs.end()) - dist.probs.begin());
    out.push_back(best);
    walk.generated_prefix.push_back(best);
    if (best == tok::kEos) break;
  }
  return out;
}

struct WeightedSequence {
  Context ctx;
  TokenSequence tokens;
  std::vector<double> weights;  // one per token
};

namespace detail {

template <typename LogitGrad>
std::vector<double> accumulate_gradient(const PolicyParameters& params, std::span<const WeightedSequence> batch,
                                        LogitGrad&& logit_grad) {
  std::vector<double> grad(params.values.size(), 0.0);
  const Network net(params, params.values);
  std::vector<double> dlogits;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& item = batch[b];
    if (item.weights.size() != item.tokens.size()) {
      throw ValidationError("gradient batch item " + std::to_string(b) + ": " +
                            std::to_string(item.weights.size()) + " weights for " +
                            std::to_string(item.tokens.size()) + " tokens");
    }
    for (std::size_t t = 0; t < item.weights.size(); ++t) {
      if (!std::isfinite(item.weights[t])) {
        throw NumericError("gradient batch item " + std::to_string(b) + ": non-finite weight at token " +
                           std::to_string(t));
      }
    }
    for_each_position(net, item.ctx, item.tokens, [&](std::size_t pos, const TokenSequence& prefix, const Activation& act) {
      const double w = item.weights[pos];
      if (w == 0.0) return;
      const auto lp = log_softmax(act.logits);
      dlogits.assign(lp.size(), 0.0);
      logit_grad(w, static_cast<std::size_t>(item.tokens[pos]), lp, dlogits);
      net.backward(prefix, act, dlogits, grad);
    });
  }
  return grad;
}

}  // namespace detail

// Gradient of sum_batch sum_t w_t log pi(o_t | ctx, o_<t).
inline std::vector<double> weighted_logprob_gradient(const PolicyParameters& params,
                                                     std::span<const WeightedSequence> batch) {
  return detail::accumulate_gradient(params, batch,
                                     [](double w, std::size_t token, const std::vector<double>& lp, std::vector<double>& d) {
                                       for (std::size_t o = 0; o < lp.size(); ++o) d[o] = -w * std::exp(lp[o]);
                                       d[token] += w;
                                     });
}

// Gradient of sum_batch sum_t w_t H(pi(. | ctx, o_<t)), the exact step entropy
// at each visited position.
inline std::vector<double> weighted_entropy_gradient(const PolicyParameters& params,
                                                     std::span<const WeightedSequence> batch) {
  return detail::accumulate_gradient(params, batch,
                                     [](double w, std::size_t, const std::vector<double>& lp, std::vector<double>& d) {
                                       double h = 0.0;
                                       for (double l : lp) h -= std::exp(l) * l;
                                       for (std::size_t o = 0; o < lp.size(); ++o) d[o] = -w * std::exp(lp[o]) * (lp[o] + h);
                                     });
}

struct PretrainResult {
  PolicyParameters params;
  double final_log_likelihood = 0.0;  // mean per sequence
  double mean_entropy_bits = 0.0;     // along the dataset sequences
  std::optional<std::string> warning;
};

struct PretrainExample {
  Context ctx;
  TokenSequence tokens;
};

inline constexpr double kLowEntropyThresholdBits = 0.5;

// Maximum-likelihood fitting of the dataset sequences with full-batch Adam
// (no weight decay). Attaches a warning when the resulting mean token entropy
// is not below 0.5 bits.
inline PretrainResult supervised_pretrain(const PolicyParameters& params, std::span<const PretrainExample> dataset,
                                          int steps, double lr) {
  if (dataset.empty()) throw ValidationError("supervised_pretrain: empty dataset");
  if (steps < 0) throw ValidationError("supervised_pretrain: negative step count");
  PretrainResult result;
  result.params = params;
  std::vector<WeightedSequence> batch;
  batch.reserve(dataset.size());
  const double w = 1.0 / static_cast<double>(dataset.size());
  for (const auto& ex : dataset) batch.push_back({ex.ctx, ex.tokens, std::vector<double>(ex.tokens.size(), w)});
  AdamMoments moments = AdamMoments::zeros(params.values.size());
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.clip_norm = 0.0;
  for (int s = 0; s < steps; ++s) {
    const auto grad = weighted_logprob_gradient(result.params, batch);
    optimizer_update(moments, result.params.values, grad, lr, cfg);
  }
  for (double v : result.params.values) {
    if (!std::isfinite(v)) throw NumericError("supervised_pretrain: parameters diverged");
  }
  if (steps > 0) result.params.version += 1;

  double ll = 0.0, ent = 0.0;
  std::size_t positions = 0;
  for (const auto& ex : dataset) {
    for (double v : score_sequence(result.params, ex.ctx, ex.tokens).values) ll += v;
    for (double h : position_entropies(result.params, ex.ctx, ex.tokens)) ent += h;
    positions += ex.tokens.size();
  }
  result.final_log_likelihood = ll / static_cast<double>(dataset.size());
  result.mean_entropy_bits = positions ? ent / static_cast<double>(positions) / kLn2 : 0.0;
  if (result.mean_entropy_bits >= kLowEntropyThresholdBits) {
    result.warning = "under-trained: mean token entropy " + std::to_string(result.mean_entropy_bits) +
                     " bits is not below " + std::to_string(kLowEntropyThresholdBits);
  }
  return result;
}

}  // namespace psplit

#endif  // PSPLIT_POLICY_HPP_
