// SPDX-License-Identifier: Apache-2.0
#include "train/checkpoint.h"

#include <algorithm>
#include <map>

#include "util/common.h"
#include "util/io.h"

namespace twopass {
namespace train {

namespace {
const char kMagic[4] = {'T', 'P', 'C', 'K'};
}

long TensorEntry::numel() const {
  long n = 1;
  for (int d : dims) n *= d;
  return n;
}

Checkpoint Checkpoint::from_params(const std::vector<nn::Parameter*>& params,
                                   const rnnt::Vocab& vocab, const std::string& config_echo) {
  Checkpoint c;
  c.vocab_tokens = vocab.tokens;
  c.blank_id = vocab.blank_id;
  c.eos_id = vocab.eos_id;
  c.config_echo = config_echo;
  c.entries.reserve(params.size());
  for (const nn::Parameter* p : params) {
    TensorEntry e;
    e.name = p->name;
    e.dtype = 0;
    e.dims = p->value.shape;
    e.f64 = p->value.data;
    c.entries.push_back(std::move(e));
  }
  return c;
}

void Checkpoint::to_params(const std::vector<nn::Parameter*>& params) const {
  check(entries.size() == params.size(), "checkpoint holds " + std::to_string(entries.size()) +
                                             " tensors, model expects " +
                                             std::to_string(params.size()));
  std::map<std::string, const TensorEntry*> by_name;
  for (const TensorEntry& e : entries) {
    check(by_name.emplace(e.name, &e).second, "duplicate checkpoint tensor: " + e.name);
  }
  for (nn::Parameter* p : params) {
    auto it = by_name.find(p->name);
    check(it != by_name.end(), "checkpoint missing tensor: " + p->name);
    const TensorEntry& e = *it->second;
    check(e.dims == p->value.shape, "shape mismatch for " + p->name);
    if (e.dtype == 0) {
      p->value.data = e.f64;
    } else {
      for (size_t i = 0; i < p->value.data.size(); ++i) {
        p->value.data[i] = e.scale * static_cast<double>(e.i8[i]);
      }
    }
  }
}

rnnt::Vocab Checkpoint::vocab() const {
  rnnt::Vocab v;
  v.tokens = vocab_tokens;
  v.blank_id = blank_id;
  v.eos_id = eos_id;
  v.validate();
  return v;
}

const TensorEntry* Checkpoint::find(const std::string& name) const {
  for (const TensorEntry& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  BinWriter w(path);
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(c.version);
  w.u8(c.flags);
  w.u32(static_cast<uint32_t>(c.vocab_tokens.size()));
  for (const std::string& t : c.vocab_tokens) w.str(t);
  w.u32(static_cast<uint32_t>(c.blank_id));
  w.u32(static_cast<uint32_t>(c.eos_id));
  w.str(c.config_echo);
  w.u32(static_cast<uint32_t>(c.entries.size()));
  for (const TensorEntry& e : c.entries) {
    w.str(e.name);
    w.u8(e.dtype);
    w.u32(static_cast<uint32_t>(e.dims.size()));
    for (int d : e.dims) w.u32(static_cast<uint32_t>(d));
    if (e.dtype == 0) {
      check(static_cast<long>(e.f64.size()) == e.numel(), "payload size mismatch for " + e.name);
      for (double v : e.f64) w.f64(v);
    } else {
      check(e.dtype == 1, "unknown tensor dtype");
      check(static_cast<long>(e.i8.size()) == e.numel(), "payload size mismatch for " + e.name);
      w.f64(e.scale);
      for (int8_t v : e.i8) w.i8(v);
    }
  }
  w.close();
}

Checkpoint load_checkpoint(const std::string& path) {
  BinReader r(path);
  char magic[4];
  r.bytes(magic, sizeof(magic));
  check(std::equal(magic, magic + 4, kMagic), "bad checkpoint magic");
  Checkpoint c;
  c.version = r.u32();
  check(c.version == 1, "unsupported checkpoint version " + std::to_string(c.version));
  c.flags = r.u8();
  const uint32_t vocab_size = r.u32();
  c.vocab_tokens.reserve(vocab_size);
  for (uint32_t i = 0; i < vocab_size; ++i) c.vocab_tokens.push_back(r.str());
  c.blank_id = static_cast<int>(r.u32());
  c.eos_id = static_cast<int>(r.u32());
  c.config_echo = r.str();
  const uint32_t count = r.u32();
  c.entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    TensorEntry e;
    e.name = r.str();
    e.dtype = r.u8();
    check(e.dtype == 0 || e.dtype == 1, "unknown tensor dtype in checkpoint");
    const uint32_t rank = r.u32();
    e.dims.resize(rank);
    for (uint32_t k = 0; k < rank; ++k) e.dims[k] = static_cast<int>(r.u32());
    const long n = e.numel();
    check(n >= 0, "negative tensor size in checkpoint");
    if (e.dtype == 0) {
      e.f64.resize(static_cast<size_t>(n));
      for (long k = 0; k < n; ++k) e.f64[static_cast<size_t>(k)] = r.f64();
    } else {
      e.scale = r.f64();
      e.i8.resize(static_cast<size_t>(n));
      for (long k = 0; k < n; ++k) e.i8[static_cast<size_t>(k)] = r.i8();
    }
    c.entries.push_back(std::move(e));
  }
  check(r.eof(), "trailing bytes after checkpoint payload");
  return c;
}

}  // namespace train
}  // namespace twopass
