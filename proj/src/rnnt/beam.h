// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "lattice/lattice.h"
#include "nn/tensor.h"
#include "rnnt/model.h"

namespace twopass {
namespace rnnt {

struct BeamConfig {
  int beam_size = 8;
  int max_symbols_per_frame = 4;
  double eos_decode_penalty = 0.0;  // subtracted from the `</s>` log-prob
  void validate() const;
};

// Beam contents after consuming one encoder frame, sorted by rank.
struct FrameTrace {
  int frame = 0;  // 0-based index of the frame just consumed
  std::vector<std::pair<std::vector<int>, double>> beam;
};

struct DecodeResult {
  lattice::PrefixTreeLattice lattice;
  // Frames consumed when the mic closed; close wall time is this count times
  // the frame duration. Unset when `</s>` never topped the beam.
  std::optional<int> mic_close_frame;
  std::vector<FrameTrace> trace;
  std::vector<int> best_tokens;
  double best_score = 0.0;
};

// Frame-synchronous beam search over encoder rows. Hypotheses with the same
// label sequence merge by log-sum-exp. A hypothesis whose last label is
// `</s>` is final: its score freezes and it consumes no further frames,
// competing as-is; once a final hypothesis ranks first the search closes the
// mic and stops consuming frames. Rows of e_s are consumed strictly in
// order, so the result up to any frame is independent of later rows.
DecodeResult streaming_beam_search(const RnnTParams& p, const nn::Tensor& e_s,
                                   const BeamConfig& cfg);

}  // namespace rnnt
}  // namespace twopass
