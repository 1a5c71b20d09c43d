// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace twopass {

// Nearest-rank percentile: the value at rank ceil(p/100 * n) of the sorted
// sample (1-based). p in (0, 100]; the sample must be non-empty.
double percentile_nearest_rank(std::vector<double> values, double p);

double mean(const std::vector<double>& values);

}  // namespace twopass
