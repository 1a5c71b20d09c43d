// SPDX-License-Identifier: Apache-2.0

#include "nn/tensor.h"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "util/common.h"

namespace twopass {
namespace nn {

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  long long n = 1;
  for (int d : shape) {
    check(d >= 0, "negative tensor dimension");
    n *= d;
  }
  data.assign(static_cast<size_t>(n), fill);
}

Tensor Tensor::from(std::vector<int> s, std::vector<double> d) {
  Tensor t;
  t.shape = std::move(s);
  t.data = std::move(d);
  check(t.numel() == static_cast<long long>(t.data.size()),
        "tensor data size does not match shape " + t.shape_str());
  return t;
}

Tensor Tensor::row(std::vector<double> d) {
  int n = static_cast<int>(d.size());
  return from({1, n}, std::move(d));
}

Tensor Tensor::row_at(int r) const {
  check(ndim() == 2 && r >= 0 && r < rows(), "row_at out of range");
  Tensor out({1, cols()});
  for (int c = 0; c < cols(); ++c) out.at(0, c) = at(r, c);
  return out;
}

long long Tensor::numel() const {
  long long n = 1;
  for (int d : shape) n *= d;
  return n;
}

int Tensor::rows() const {
  check(ndim() == 2, "rows() on non-2D tensor " + shape_str());
  return shape[0];
}

int Tensor::cols() const {
  check(ndim() == 2, "cols() on non-2D tensor " + shape_str());
  return shape[1];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::abs_max() const {
  double m = 0.0;
  for (double v : data) m = std::max(m, std::abs(v));
  return m;
}

void Tensor::fill(double v) {
  for (double& x : data) x = v;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  check(a.ndim() == 2 && b.ndim() == 2, "matmul needs 2-D operands");
  int m = ta ? a.shape[1] : a.shape[0];
  int k = ta ? a.shape[0] : a.shape[1];
  int kb = tb ? b.shape[1] : b.shape[0];
  int n = tb ? b.shape[0] : b.shape[1];
  check(k == kb, "matmul inner dims mismatch: " + a.shape_str() + (ta ? "^T" : "") +
                     " * " + b.shape_str() + (tb ? "^T" : ""));
  Tensor c({m, n});
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  int as0 = a.shape[1];
  int bs0 = b.shape[1];
  if (!ta && !tb) {
    for (int i = 0; i < m; ++i) {
      const double* arow = pa + static_cast<size_t>(i) * as0;
      double* crow = pc + static_cast<size_t>(i) * n;
      for (int kk = 0; kk < k; ++kk) {
        double av = arow[kk];
        if (av == 0.0) continue;
        const double* brow = pb + static_cast<size_t>(kk) * bs0;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    for (int i = 0; i < m; ++i) {
      const double* arow = pa + static_cast<size_t>(i) * as0;
      double* crow = pc + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double* brow = pb + static_cast<size_t>(j) * bs0;
        double s = 0.0;
        for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
        crow[j] = s;
      }
    }
  } else if (ta && !tb) {
    for (int kk = 0; kk < k; ++kk) {
      const double* arow = pa + static_cast<size_t>(kk) * as0;
      const double* brow = pb + static_cast<size_t>(kk) * bs0;
      for (int i = 0; i < m; ++i) {
        double av = arow[i];
        if (av == 0.0) continue;
        double* crow = pc + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (int i = 0; i < m; ++i) {
      double* crow = pc + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double* brow = pb + static_cast<size_t>(j) * bs0;
        double s = 0.0;
        for (int kk = 0; kk < k; ++kk) s += pa[static_cast<size_t>(kk) * as0 + i] * brow[kk];
        crow[j] = s;
      }
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  check(a.ndim() == 2, "transpose needs 2-D");
  Tensor t({a.shape[1], a.shape[0]});
  for (int i = 0; i < a.shape[0]; ++i)
    for (int j = 0; j < a.shape[1]; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

void accumulate(Tensor& dst, const Tensor& src) {
  check(dst.same_shape(src), "accumulate shape mismatch " + dst.shape_str() +
                                 " vs " + src.shape_str());
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  double r = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
  for (double& v : t.data) v = rng.uniform(-r, r);
  return t;
}

Tensor gaussian_tensor(std::vector<int> shape, Rng& rng, double mean, double stddev) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.gaussian(mean, stddev);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  check(a.same_shape(b), "max_abs_diff shape mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace nn
}  // namespace twopass
