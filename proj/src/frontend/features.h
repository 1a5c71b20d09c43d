// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nn/tensor.h"

namespace twopass {
namespace frontend {

// Stacks stack_k left-context frames (repeat-padding frame 0) and keeps every
// subsample_s-th position: output row i = concat(frames[j-stack_k+1 .. j]),
// j = i*subsample_s. Output length is ceil(T0 / subsample_s).
nn::Tensor stack_and_subsample(const nn::Tensor& frames, int stack_k, int subsample_s);

// Appends a one-hot domain indicator to every row.
nn::Tensor attach_domain_onehot(const nn::Tensor& stacked, int domain_id, int num_domains);

}  // namespace frontend
}  // namespace twopass
