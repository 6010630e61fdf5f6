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

#ifndef PSPLIT_VOCABULARY_HPP_
#define PSPLIT_VOCABULARY_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "psplit/errors.hpp"

namespace psplit {

using Token = int;
using TokenSequence = std::vector<Token>;

// Fixed token layout shared by the synthetic tasks. Output tokens come first so
// that a policy's output head covers ids [0, kOutputCount).
namespace tok {
inline constexpr Token kDigit0 = 0;  // digits occupy ids 0..9
inline constexpr Token kAnswer = 10;
inline constexpr Token kEos = 11;
inline constexpr Token kOutputCount = 12;
inline constexpr Token kAdd = 12;
inline constexpr Token kMul = 13;
inline constexpr Token kEquals = 14;
inline constexpr Token kReservedBegin = 15;
}  // namespace tok

inline constexpr const char* kHighEntropyPrefix = "he";
inline constexpr const char* kRewrittenHighEntropyPrefix = "he_rewritten";
inline constexpr const char* kLowEntropyPrefix = "le";

inline bool is_digit_token(Token t) { return t >= tok::kDigit0 && t <= tok::kDigit0 + 9; }

struct Vocabulary {
  int size = 19;
  int output_count = tok::kOutputCount;
  int reserved_begin = tok::kReservedBegin;
  // Mode-prompt identifier -> reserved token sequence.
  std::map<std::string, TokenSequence> reserved_prefixes;

  static Vocabulary standard() {
    Vocabulary v;
    v.reserved_prefixes[kHighEntropyPrefix] = {15, 16};
    v.reserved_prefixes[kRewrittenHighEntropyPrefix] = {15, 17};
    v.reserved_prefixes[kLowEntropyPrefix] = {18, 17};
    v.validate();
    return v;
  }

  bool is_reserved(Token t) const { return t >= reserved_begin && t < size; }
  bool is_output(Token t) const { return t >= 0 && t < output_count; }
  int reserved_count() const { return size - reserved_begin; }

  const TokenSequence& prefix(const std::string& id) const {
    auto it = reserved_prefixes.find(id);
    if (it == reserved_prefixes.end()) {
      throw ValidationError("vocabulary: unknown mode prefix '" + id + "'");
    }
    return it->second;
  }

  void validate() const {
    if (size < 8 || size > 64) throw ValidationError("vocabulary: size must be within 8..64");
    if (output_count <= 0 || output_count > reserved_begin || reserved_begin > size) {
      throw ValidationError("vocabulary: inconsistent output/reserved ranges");
    }
    std::set<TokenSequence> seen;
    for (const auto& [id, seq] : reserved_prefixes) {
      if (seq.empty() || seq.size() > 4) {
        throw ValidationError("vocabulary: prefix '" + id + "' must have 1..4 tokens");
      }
      for (Token t : seq) {
        if (!is_reserved(t)) {
          throw ValidationError("vocabulary: prefix '" + id + "' uses non-reserved token " +
                                std::to_string(t));
        }
      }
      if (!seen.insert(seq).second) {
        throw ValidationError("vocabulary: prefix '" + id + "' duplicates another prefix");
      }
    }
  }

  bool operator==(const Vocabulary&) const = default;
};

}  // namespace psplit

#endif  // PSPLIT_VOCABULARY_HPP_
