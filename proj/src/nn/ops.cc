// SPDX-License-Identifier: Apache-2.0

#include "nn/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "util/common.h"

namespace twopass {
namespace nn {

double logaddexp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double logsumexp_row(const double* x, int n) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) m = std::max(m, x[i]);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

Tensor log_softmax(const Tensor& logits) {
  check(logits.ndim() == 2, "log_softmax needs 2-D input");
  Tensor out = logits;
  int n = logits.cols();
  for (int r = 0; r < logits.rows(); ++r) {
    double* row = out.data.data() + static_cast<size_t>(r) * n;
    double lse = logsumexp_row(row, n);
    for (int j = 0; j < n; ++j) row[j] -= lse;
  }
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = log_softmax(logits);
  for (double& v : out.data) v = std::exp(v);
  return out;
}

Tensor sigmoid_t(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

Tensor tanh_t(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data) v = std::tanh(v);
  return out;
}

Tensor add_rowwise(const Tensor& m, const Tensor& bias) {
  check(bias.ndim() == 2 && bias.rows() == 1 && bias.cols() == m.cols(),
        "add_rowwise bias shape mismatch");
  Tensor out = m;
  int n = m.cols();
  for (int r = 0; r < m.rows(); ++r)
    for (int j = 0; j < n; ++j) out.at(r, j) += bias.at(0, j);
  return out;
}

Tensor colsum(const Tensor& m) {
  Tensor out({1, m.cols()});
  for (int r = 0; r < m.rows(); ++r)
    for (int j = 0; j < m.cols(); ++j) out.at(0, j) += m.at(r, j);
  return out;
}

Tensor elem_mul(const Tensor& a, const Tensor& b) {
  check(a.same_shape(b), "elem_mul shape mismatch");
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

Tensor elem_add(const Tensor& a, const Tensor& b) {
  check(a.same_shape(b), "elem_add shape mismatch");
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor elem_sub(const Tensor& a, const Tensor& b) {
  check(a.same_shape(b), "elem_sub shape mismatch");
  Tensor out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

void append_rows(Tensor& dst, const Tensor& src) {
  if (dst.shape.empty()) {
    dst = src;
    return;
  }
  check(dst.ndim() == 2 && src.ndim() == 2 && dst.cols() == src.cols(),
        "append_rows column mismatch");
  dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
  dst.shape[0] += src.rows();
}

Tensor concat_cols_pair(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2 && a.rows() == b.rows(),
        "concat_cols_pair row mismatch");
  Tensor out({a.rows(), a.cols() + b.cols()});
  for (int r = 0; r < a.rows(); ++r) {
    for (int c = 0; c < a.cols(); ++c) out.at(r, c) = a.at(r, c);
    for (int c = 0; c < b.cols(); ++c) out.at(r, a.cols() + c) = b.at(r, c);
  }
  return out;
}

Tensor lstm_cell_forward(const Tensor& wx, const Tensor& wh, const Tensor& b,
                         const Tensor& wp, const Tensor& x, const Tensor& h_prev,
                         const Tensor& c_prev, Tensor* c_out, LstmCellScratch* scratch) {
  int hidden = wx.rows() / 4;
  check(wx.rows() == 4 * hidden && wh.rows() == 4 * hidden, "lstm gate block mismatch");
  check(x.rows() == h_prev.rows() && x.rows() == c_prev.rows(), "lstm batch mismatch");
  int batch = x.rows();

  Tensor pre = matmul(x, wx, false, true);
  accumulate(pre, matmul(h_prev, wh, false, true));
  pre = add_rowwise(pre, b);

  Tensor gi({batch, hidden}), gf({batch, hidden}), gg({batch, hidden}), go({batch, hidden});
  for (int r = 0; r < batch; ++r) {
    for (int j = 0; j < hidden; ++j) {
      gi.at(r, j) = 1.0 / (1.0 + std::exp(-pre.at(r, j)));
      gf.at(r, j) = 1.0 / (1.0 + std::exp(-pre.at(r, hidden + j)));
      gg.at(r, j) = std::tanh(pre.at(r, 2 * hidden + j));
      go.at(r, j) = 1.0 / (1.0 + std::exp(-pre.at(r, 3 * hidden + j)));
    }
  }

  Tensor c = elem_add(elem_mul(gf, c_prev), elem_mul(gi, gg));
  Tensor tc = tanh_t(c);
  Tensor h_full = elem_mul(go, tc);
  Tensor h = matmul(h_full, wp, false, true);

  if (c_out) *c_out = c;
  if (scratch) {
    scratch->i = std::move(gi);
    scratch->f = std::move(gf);
    scratch->g = std::move(gg);
    scratch->o = std::move(go);
    scratch->tc = std::move(tc);
    scratch->h_full = std::move(h_full);
  }
  return h;
}

}  // namespace nn
}  // namespace twopass
