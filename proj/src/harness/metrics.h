// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "util/common.h"

namespace twopass {
namespace harness {

struct EditCounts {
  int distance = 0;
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
};

// Levenshtein distance with unit costs. The backtrace prefers substitution,
// then deletion, then insertion on cost ties, so the (S, I, D) split is
// deterministic and substitutions + insertions + deletions == distance.
template <class T>
EditCounts edit_distance(const std::vector<T>& ref, const std::vector<T>& hyp) {
  const int m = static_cast<int>(ref.size());
  const int n = static_cast<int>(hyp.size());
  std::vector<std::vector<int>> d(m + 1, std::vector<int>(n + 1, 0));
  for (int i = 1; i <= m; ++i) d[i][0] = i;
  for (int j = 1; j <= n; ++j) d[0][j] = j;
  for (int i = 1; i <= m; ++i) {
    for (int j = 1; j <= n; ++j) {
      const int sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int del = d[i - 1][j] + 1;
      const int ins = d[i][j - 1] + 1;
      d[i][j] = std::min(sub, std::min(del, ins));
    }
  }
  EditCounts out;
  out.distance = d[m][n];
  int i = m;
  int j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (!(ref[i - 1] == hyp[j - 1])) ++out.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
  return out;
}

// Pooled word error rate: 100 * sum(distance) / sum(reference length).
// Requires a positive total reference length.
double wer_percent(const std::vector<EditCounts>& per_utt, const std::vector<int>& ref_lengths);

}  // namespace harness
}  // namespace twopass
