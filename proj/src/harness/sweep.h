// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "harness/eval.h"

namespace twopass {
namespace harness {

// One grid entry of the operating-point sweep: a named evaluation
// configuration (endpointer penalty, second-pass weight, rescoring and VAD
// toggles live inside the config).
struct SweepEntry {
  std::string config_id;
  EvalConfig cfg;
};

struct SweepPoint {
  std::string config_id;
  EvalConfig cfg;  // echo of the entry
  EvalResult result;
};

// Evaluates every entry on the same dataset; points come back in entry order.
// Entries must be non-empty with unique ids.
std::vector<SweepPoint> sweep_tradeoff(const rnnt::RnnTParams& first_pass,
                                       const las::LasParams* second_pass,
                                       const frontend::Dataset& ds,
                                       const std::vector<SweepEntry>& entries);

// Metrics CSV: one row per point, in point order.
std::string sweep_csv(const std::vector<SweepPoint>& points);

// Self-contained SVG scatter of the accuracy/latency tradeoff: one marker per
// point at (90th-percentile latency, word error rate), labelled by config id.
std::string sweep_svg(const std::vector<SweepPoint>& points);

}  // namespace harness
}  // namespace twopass
