// SPDX-License-Identifier: Apache-2.0

#include "nn/transducer.h"

#include <cmath>
#include <limits>

#include "nn/ops.h"
#include "util/common.h"

namespace twopass {
namespace nn {

TransducerResult transducer_forward_backward(const Tensor& grid,
                                             const std::vector<int>& labels,
                                             int num_frames, int blank_id,
                                             bool want_grad) {
  const double kNegInf = -std::numeric_limits<double>::infinity();
  int t_len = num_frames;
  int u_len = static_cast<int>(labels.size());
  int vocab = grid.cols();
  check(t_len >= 1, "transducer needs at least one frame");
  check(grid.rows() == (u_len + 1) * t_len, "transducer grid row count mismatch");
  check(blank_id >= 0 && blank_id < vocab, "blank id out of range");
  for (int y : labels) check(y >= 0 && y < vocab && y != blank_id, "label id out of range");

  auto lp = [&](int t, int u, int v) { return grid.at(u * t_len + t, v); };

  TransducerResult res;
  res.alpha = Tensor({u_len + 1, t_len}, kNegInf);
  Tensor& alpha = res.alpha;
  alpha.at(0, 0) = 0.0;
  for (int t = 1; t < t_len; ++t)
    alpha.at(0, t) = alpha.at(0, t - 1) + lp(t - 1, 0, blank_id);
  for (int u = 1; u <= u_len; ++u) {
    alpha.at(u, 0) = alpha.at(u - 1, 0) + lp(0, u - 1, labels[u - 1]);
    for (int t = 1; t < t_len; ++t)
      alpha.at(u, t) = logaddexp(alpha.at(u, t - 1) + lp(t - 1, u, blank_id),
                                 alpha.at(u - 1, t) + lp(t, u - 1, labels[u - 1]));
  }
  double total = alpha.at(u_len, t_len - 1) + lp(t_len - 1, u_len, blank_id);
  res.loss = -total;
  if (!want_grad) return res;

  Tensor beta({u_len + 1, t_len}, kNegInf);
  beta.at(u_len, t_len - 1) = lp(t_len - 1, u_len, blank_id);
  for (int t = t_len - 2; t >= 0; --t)
    beta.at(u_len, t) = beta.at(u_len, t + 1) + lp(t, u_len, blank_id);
  for (int u = u_len - 1; u >= 0; --u) {
    beta.at(u, t_len - 1) = beta.at(u + 1, t_len - 1) + lp(t_len - 1, u, labels[u]);
    for (int t = t_len - 2; t >= 0; --t)
      beta.at(u, t) = logaddexp(beta.at(u, t + 1) + lp(t, u, blank_id),
                                beta.at(u + 1, t) + lp(t, u, labels[u]));
  }

  res.grid_grad = Tensor(grid.shape);
  // d(-total)/d(lp) = -P(transition through this arc | all paths).
  for (int u = 0; u <= u_len; ++u) {
    for (int t = 0; t < t_len; ++t) {
      double a = alpha.at(u, t);
      if (a == kNegInf) continue;
      if (t + 1 < t_len) {
        double g = a + lp(t, u, blank_id) + beta.at(u, t + 1) - total;
        res.grid_grad.at(u * t_len + t, blank_id) -= std::exp(g);
      } else if (u == u_len) {
        res.grid_grad.at(u * t_len + t, blank_id) -= std::exp(a + lp(t, u, blank_id) - total);
      }
      if (u < u_len) {
        double g = a + lp(t, u, labels[u]) + beta.at(u + 1, t) - total;
        res.grid_grad.at(u * t_len + t, labels[u]) -= std::exp(g);
      }
    }
  }
  return res;
}

}  // namespace nn
}  // namespace twopass
