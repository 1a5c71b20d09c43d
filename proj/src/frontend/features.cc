// SPDX-License-Identifier: Apache-2.0

#include "frontend/features.h"

#include "util/common.h"

namespace twopass {
namespace frontend {

nn::Tensor stack_and_subsample(const nn::Tensor& frames, int stack_k, int subsample_s) {
  check(frames.ndim() == 2 && frames.rows() >= 1, "stack_and_subsample needs frames");
  check(stack_k >= 1 && subsample_s >= 1, "stack/subsample factors must be >= 1");
  int t0 = frames.rows();
  int d0 = frames.cols();
  int t_out = (t0 + subsample_s - 1) / subsample_s;
  nn::Tensor out({t_out, stack_k * d0});
  for (int i = 0; i < t_out; ++i) {
    int j = i * subsample_s;
    for (int k = 0; k < stack_k; ++k) {
      int src = j - stack_k + 1 + k;
      if (src < 0) src = 0;
      for (int c = 0; c < d0; ++c) out.at(i, k * d0 + c) = frames.at(src, c);
    }
  }
  return out;
}

nn::Tensor attach_domain_onehot(const nn::Tensor& stacked, int domain_id, int num_domains) {
  check(num_domains >= 1, "need at least one domain");
  check(domain_id >= 0 && domain_id < num_domains, "domain id out of range");
  int rows = stacked.rows();
  int d = stacked.cols();
  nn::Tensor out({rows, d + num_domains});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < d; ++c) out.at(r, c) = stacked.at(r, c);
    out.at(r, d + domain_id) = 1.0;
  }
  return out;
}

}  // namespace frontend
}  // namespace twopass
