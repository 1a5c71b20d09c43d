// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "nn/tensor.h"

namespace twopass {
namespace nn {

struct TransducerResult {
  double loss = 0.0;       // negative log-likelihood of the label sequence
  Tensor grid_grad;        // d(loss)/d(grid), same shape as grid; empty if not requested
  Tensor alpha;            // {num_labels+1, num_frames} forward log-probs
};

// Forward-backward over the transducer lattice. `grid` holds log-probs with
// row u*num_frames + t and one column per vocabulary entry; a blank advances
// t, label u+1 advances u, and the path ends with a blank at
// (num_frames-1, num_labels).
TransducerResult transducer_forward_backward(const Tensor& grid,
                                             const std::vector<int>& labels,
                                             int num_frames, int blank_id,
                                             bool want_grad);

}  // namespace nn
}  // namespace twopass
