// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nn/param.h"
#include "rnnt/vocab.h"

namespace twopass {
namespace train {

// One serialized tensor. dtype 0 carries 64-bit reals; dtype 1 carries int8
// codes with a single per-tensor scale (dequantized value = scale * code).
struct TensorEntry {
  std::string name;
  uint8_t dtype = 0;
  std::vector<int> dims;
  std::vector<double> f64;
  double scale = 1.0;
  std::vector<int8_t> i8;

  long numel() const;
};

// Checkpoint container. File layout, little-endian throughout:
//   magic "TPCK" (4 raw bytes)
//   u32 format version (currently 1)
//   u8 flags (bit0: holds quantized payloads)
//   u32 vocab size, then per token: u32 length + UTF-8 bytes
//   u32 blank id, u32 eos id
//   u32 length + UTF-8 config echo
//   u32 tensor count, then per tensor:
//     u32 length + UTF-8 name, u8 dtype, u32 rank, rank * u32 dims,
//     payload (dtype 0: numel * f64; dtype 1: f64 scale + numel * i8)
// Entries keep file order, so load followed by save reproduces the file
// byte for byte.
struct Checkpoint {
  uint32_t version = 1;
  uint8_t flags = 0;  // bit0: quantized
  std::vector<std::string> vocab_tokens;
  int blank_id = 0;
  int eos_id = 1;
  std::string config_echo;
  std::vector<TensorEntry> entries;

  static Checkpoint from_params(const std::vector<nn::Parameter*>& params,
                                const rnnt::Vocab& vocab, const std::string& config_echo);
  // Writes entry values into the matching parameters (by name, shapes
  // checked); dtype-1 entries dequantize on the way in. The entry set must
  // match the parameter set exactly.
  void to_params(const std::vector<nn::Parameter*>& params) const;
  rnnt::Vocab vocab() const;
  const TensorEntry* find(const std::string& name) const;  // nullptr if absent
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
// Rejects bad magic, unsupported versions, truncated files, and trailing
// bytes; nothing is returned unless the whole file parses.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace train
}  // namespace twopass
