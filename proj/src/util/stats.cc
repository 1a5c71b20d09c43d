// SPDX-License-Identifier: Apache-2.0

#include "util/stats.h"

#include <algorithm>
#include <cmath>

#include "util/common.h"

namespace twopass {

double percentile_nearest_rank(std::vector<double> values, double p) {
  check(!values.empty(), "percentile of empty sample");
  check(p > 0.0 && p <= 100.0, "percentile rank out of range");
  std::sort(values.begin(), values.end());
  size_t rank = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[rank - 1];
}

double mean(const std::vector<double>& values) {
  check(!values.empty(), "mean of empty sample");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

}  // namespace twopass
