// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "nn/param.h"

namespace twopass {
namespace nn {

// Central-difference check of analytic gradients. `loss_fn` must rebuild its
// graph from the current parameter values, run backward, and return the loss;
// each call accumulates into Parameter::grad, which this routine manages.
// Returns max over checked coordinates of |analytic - fd| / max(1, |analytic|).
// With max_coords > 0 only a deterministic stride-sampled subset of each
// tensor is probed. A non-deterministic loss_fn makes the result unreliable.
double gradient_check(const std::function<double()>& loss_fn,
                      const std::vector<Parameter*>& params, double epsilon,
                      int max_coords = -1);

}  // namespace nn
}  // namespace twopass
