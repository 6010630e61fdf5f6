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

// Checkpoint files. Layout (all integers and floats little-endian):
//
//   "PSPLIT-CKPT"                      11 bytes
//   u32 format version
//   u32 architecture tag               0 = TabularSoftmax, 1 = TinyMlp
//   u32 context_window, table_rows, embed_dim, hidden_width, prefix_sensitive
//   u32 vocab size, output_count, reserved_begin, prefix count
//   per prefix (sorted by id):  u32 id length, id bytes, u32 token count, u32 tokens
//   u64 config hash
//   i64 parameter version
//   u64 parameter count
//   f64 parameters

#ifndef PSPLIT_CHECKPOINT_HPP_
#define PSPLIT_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "psplit/errors.hpp"
#include "psplit/optimizer.hpp"
#include "psplit/policy.hpp"

namespace psplit {

inline constexpr std::string_view kCheckpointMagic = "PSPLIT-CKPT";
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  PolicyParameters params;
  std::uint64_t config_hash = 0;
};

// FNV-1a, used for config fingerprints.
inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw ValidationError("checkpoint: truncated file");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<char> serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  p.validate();
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointFormatVersion);
  w.u32(static_cast<std::uint32_t>(p.spec.architecture));
  const auto& d = p.spec.dims;
  w.u32(static_cast<std::uint32_t>(d.context_window));
  w.u32(static_cast<std::uint32_t>(d.table_rows));
  w.u32(static_cast<std::uint32_t>(d.embed_dim));
  w.u32(static_cast<std::uint32_t>(d.hidden_width));
  w.u32(d.prefix_sensitive ? 1u : 0u);
  const auto& v = p.spec.vocab;
  w.u32(static_cast<std::uint32_t>(v.size));
  w.u32(static_cast<std::uint32_t>(v.output_count));
  w.u32(static_cast<std::uint32_t>(v.reserved_begin));
  w.u32(static_cast<std::uint32_t>(v.reserved_prefixes.size()));
  for (const auto& [id, seq] : v.reserved_prefixes) {
    w.u32(static_cast<std::uint32_t>(id.size()));
    w.bytes(id);
    w.u32(static_cast<std::uint32_t>(seq.size()));
    for (Token t : seq) w.u32(static_cast<std::uint32_t>(t));
  }
  w.u64(ckpt.config_hash);
  w.u64(static_cast<std::uint64_t>(p.version));
  w.u64(p.values.size());
  for (double x : p.values) w.f64(x);
  return w.buffer();
}

inline Checkpoint deserialize_checkpoint(std::vector<char> data) {
  detail::ByteReader r(std::move(data));
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw ValidationError("checkpoint: bad magic, not a PSPLIT-CKPT file");
  }
  const auto version = r.u32();
  if (version != kCheckpointFormatVersion) {
    throw ValidationError("checkpoint: incompatible format version " + std::to_string(version) +
                          " (this build reads version " + std::to_string(kCheckpointFormatVersion) + ")");
  }
  Checkpoint ckpt;
  auto& p = ckpt.params;
  const auto arch = r.u32();
  if (arch > 1) throw ValidationError("checkpoint: unknown architecture tag " + std::to_string(arch));
  p.spec.architecture = static_cast<Architecture>(arch);
  auto& d = p.spec.dims;
  d.context_window = static_cast<int>(r.u32());
  d.table_rows = static_cast<int>(r.u32());
  d.embed_dim = static_cast<int>(r.u32());
  d.hidden_width = static_cast<int>(r.u32());
  d.prefix_sensitive = r.u32() != 0;
  auto& v = p.spec.vocab;
  v.size = static_cast<int>(r.u32());
  v.output_count = static_cast<int>(r.u32());
  v.reserved_begin = static_cast<int>(r.u32());
  v.reserved_prefixes.clear();
  const auto n_prefixes = r.u32();
  for (std::uint32_t i = 0; i < n_prefixes; ++i) {
    const std::string id = r.bytes(r.u32());
    TokenSequence seq(r.u32());
    for (auto& t : seq) t = static_cast<Token>(r.u32());
    v.reserved_prefixes[id] = std::move(seq);
  }
  ckpt.config_hash = r.u64();
  p.version = static_cast<std::int64_t>(r.u64());
  const auto n = r.u64();
  if (n != p.spec.parameter_count()) {
    throw ValidationError("checkpoint: parameter count " + std::to_string(n) +
                          " does not match the declared architecture");
  }
  p.values.resize(n);
  for (auto& x : p.values) x = r.f64();
  if (!r.done()) throw ValidationError("checkpoint: trailing bytes after parameters");
  p.validate();
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(std::move(data));
}

// Optimizer moments travel in a companion file so that a resumed run
// continues exactly where the interrupted one stopped.
inline constexpr std::string_view kOptimizerMagic = "PSPLIT-OPT";

inline void save_optimizer_state(const std::string& path, const AdamMoments& m, std::int64_t train_step) {
  if (m.first.size() != m.second.size()) throw ValidationError("optimizer state: moment sizes differ");
  detail::ByteWriter w;
  w.bytes(kOptimizerMagic);
  w.u32(kCheckpointFormatVersion);
  w.u64(static_cast<std::uint64_t>(train_step));
  w.u64(static_cast<std::uint64_t>(m.step));
  w.u64(m.first.size());
  for (double x : m.first) w.f64(x);
  for (double x : m.second) w.f64(x);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("write failed: " + path);
}

inline AdamMoments load_optimizer_state(const std::string& path, std::int64_t* train_step) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open optimizer state " + path);
  detail::ByteReader r(std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
  if (r.bytes(kOptimizerMagic.size()) != kOptimizerMagic) throw ValidationError(path + ": not an optimizer state file");
  const auto version = r.u32();
  if (version != kCheckpointFormatVersion) {
    throw ValidationError(path + ": incompatible optimizer state version " + std::to_string(version));
  }
  const auto step = static_cast<std::int64_t>(r.u64());
  if (train_step) *train_step = step;
  AdamMoments m;
  m.step = static_cast<std::int64_t>(r.u64());
  const auto n = r.u64();
  m.first.resize(n);
  m.second.resize(n);
  for (auto& x : m.first) x = r.f64();
  for (auto& x : m.second) x = r.f64();
  if (!r.done()) throw ValidationError(path + ": trailing bytes after optimizer state");
  return m;
}

}  // namespace psplit

#endif  // PSPLIT_CHECKPOINT_HPP_
