// SPDX-License-Identifier: Apache-2.0
#include "harness/metrics.h"

namespace twopass {
namespace harness {

double wer_percent(const std::vector<EditCounts>& per_utt, const std::vector<int>& ref_lengths) {
  check_config(per_utt.size() == ref_lengths.size(), "edit counts and reference lengths disagree");
  long total_dist = 0;
  long total_len = 0;
  for (size_t i = 0; i < per_utt.size(); ++i) {
    total_dist += per_utt[i].distance;
    total_len += ref_lengths[i];
  }
  check_config(total_len > 0, "total reference length is zero");
  return 100.0 * static_cast<double>(total_dist) / static_cast<double>(total_len);
}

}  // namespace harness
}  // namespace twopass
