// SPDX-License-Identifier: Apache-2.0

#include "nn/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "util/common.h"

namespace twopass {
namespace nn {

double gradient_check(const std::function<double()>& loss_fn,
                      const std::vector<Parameter*>& params, double epsilon,
                      int max_coords) {
  check(epsilon >= 1e-7 && epsilon <= 1e-3, "gradient_check epsilon out of range");
  for (Parameter* p : params) p->zero_grad();
  loss_fn();
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    long long n = p->value.numel();
    long long stride = 1;
    if (max_coords > 0 && n > max_coords) stride = (n + max_coords - 1) / max_coords;
    for (long long i = 0; i < n; i += stride) {
      double orig = p->value.data[i];
      p->value.data[i] = orig + epsilon;
      double lp = loss_fn();
      p->value.data[i] = orig - epsilon;
      double lm = loss_fn();
      p->value.data[i] = orig;
      double fd = (lp - lm) / (2.0 * epsilon);
      double an = analytic[pi].data[i];
      double rel = std::abs(an - fd) / std::max(1.0, std::abs(an));
      max_rel = std::max(max_rel, rel);
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return max_rel;
}

}  // namespace nn
}  // namespace twopass
