// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "util/rng.h"

namespace twopass {
namespace nn {

// Dense row-major tensor of 64-bit reals. Rank 1 and 2 cover everything in
// this codebase; higher ranks are legal but unused.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  static Tensor from(std::vector<int> s, std::vector<double> d);
  static Tensor row(std::vector<double> d);  // shape {1, n}
  Tensor row_at(int r) const;                // copy of row r, shape {1, cols}

  int ndim() const { return static_cast<int>(shape.size()); }
  long long numel() const;
  int rows() const;
  int cols() const;

  double& at(int i) { return data[static_cast<size_t>(i)]; }
  double at(int i) const { return data[static_cast<size_t>(i)]; }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  double abs_max() const;
  void fill(double v);
  std::string shape_str() const;
};

// y = op_a(a) * op_b(b) where op is optional transpose; 2-D only.
Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false);
Tensor transpose(const Tensor& a);
void accumulate(Tensor& dst, const Tensor& src);  // dst += src, same shape

// Uniform init in [-r, r] with r = 1/sqrt(fan_in).
Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng);
Tensor gaussian_tensor(std::vector<int> shape, Rng& rng, double mean = 0.0,
                       double stddev = 1.0);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace nn
}  // namespace twopass

