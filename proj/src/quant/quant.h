// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nn/tensor.h"
#include "train/checkpoint.h"

namespace twopass {
namespace quant {

// Symmetric per-tensor 8-bit fixed point: value = scale * code, |code| <= 127,
// scale = max|w| / 127 (1 for all-zero tensors).
struct QuantizedTensor {
  std::vector<int> shape;
  double scale = 1.0;
  std::vector<int8_t> codes;
};

// Rounds half away from zero. Rejects non-finite inputs.
QuantizedTensor quantize(const nn::Tensor& t);
nn::Tensor dequantize(const QuantizedTensor& q);

// Converts every real-valued entry to int8 + scale and sets the quantized
// header flag. Vocab and config echo pass through; already-quantized entries
// are left as they are.
train::Checkpoint quantize_checkpoint(const train::Checkpoint& c);

// Serialized-size accounting. The ratio compares the int8 payload (codes plus
// one 8-byte scale per tensor) against the 32-bit inference layout of the
// same parameters; training checkpoints carry 64-bit reals for exact round
// trips, so their on-disk payload is reported separately.
struct SizeReport {
  long param_count = 0;
  long payload_bytes = 0;            // tensor payloads as serialized in `c`
  long quantized_payload_bytes = 0;  // int8 layout for the same tensors
  long fp32_payload_bytes = 0;       // 32-bit reference layout
  double ratio = 0.0;                // quantized_payload_bytes / fp32_payload_bytes
  bool quantized = false;            // header flag of the reported checkpoint
  std::vector<std::pair<std::string, long>> module_payload;  // by name prefix
  std::string text;                  // human-readable breakdown
};
SizeReport model_size_report(const train::Checkpoint& c);

}  // namespace quant
}  // namespace twopass
