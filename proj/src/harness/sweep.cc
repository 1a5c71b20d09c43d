// SPDX-License-Identifier: Apache-2.0
#include "harness/sweep.h"

#include <algorithm>
#include <cstdio>
#include <set>

#include "util/common.h"

namespace twopass {
namespace harness {

std::vector<SweepPoint> sweep_tradeoff(const rnnt::RnnTParams& first_pass,
                                       const las::LasParams* second_pass,
                                       const frontend::Dataset& ds,
                                       const std::vector<SweepEntry>& entries) {
  check_config(!entries.empty(), "sweep needs at least one entry");
  std::set<std::string> ids;
  for (const SweepEntry& e : entries) {
    check_config(ids.insert(e.config_id).second, "duplicate sweep config id: " + e.config_id);
  }
  std::vector<SweepPoint> points;
  points.reserve(entries.size());
  for (const SweepEntry& e : entries) {
    points.push_back({e.config_id, e.cfg, eval_dataset(first_pass, second_pass, ds, e.cfg)});
  }
  return points;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::string out = metrics_csv_header();
  for (const SweepPoint& p : points) out += metrics_csv_row(p.config_id, p.result);
  return out;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
  double scale(double v) const { return (v - lo) / (hi - lo); }
};

Range padded_range(double lo, double hi) {
  const double span = hi - lo;
  const double pad = span > 0.0 ? 0.08 * span : std::max(1.0, 0.1 * std::abs(hi));
  return {lo - pad, hi + pad};
}

}  // namespace

std::string sweep_svg(const std::vector<SweepPoint>& points) {
  check_config(!points.empty(), "plot needs at least one point");
  const double width = 640.0, height = 480.0;
  const double left = 70.0, right = 610.0, top = 30.0, bottom = 425.0;

  double x_lo = points[0].result.ep90_ms, x_hi = x_lo;
  double y_lo = points[0].result.wer, y_hi = y_lo;
  for (const SweepPoint& p : points) {
    x_lo = std::min(x_lo, p.result.ep90_ms);
    x_hi = std::max(x_hi, p.result.ep90_ms);
    y_lo = std::min(y_lo, p.result.wer);
    y_hi = std::max(y_hi, p.result.wer);
  }
  const Range xr = padded_range(x_lo, x_hi);
  const Range yr = padded_range(y_lo, y_hi);
  const auto px = [&](double v) { return left + xr.scale(v) * (right - left); };
  const auto py = [&](double v) { return bottom - yr.scale(v) * (bottom - top); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
       num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
  s += "<style>text{font-family:sans-serif;font-size:12px;fill:#333}"
       ".axis{stroke:#333;stroke-width:1}.grid{stroke:#ddd;stroke-width:1}"
       ".pt{fill:#1f77b4}</style>\n";
  s += "<text x=\"" + num((left + right) / 2) +
       "\" y=\"16\" text-anchor=\"middle\" font-size=\"14\">word error rate vs endpointer "
       "latency</text>\n";

  for (int i = 0; i < 5; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    s += "<line class=\"grid\" x1=\"" + num(px(fx)) + "\" y1=\"" + num(top) + "\" x2=\"" +
         num(px(fx)) + "\" y2=\"" + num(bottom) + "\"/>\n";
    s += "<line class=\"grid\" x1=\"" + num(left) + "\" y1=\"" + num(py(fy)) + "\" x2=\"" +
         num(right) + "\" y2=\"" + num(py(fy)) + "\"/>\n";
    s += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(bottom + 18.0) +
         "\" text-anchor=\"middle\">" + tick_label(fx) + "</text>\n";
    s += "<text x=\"" + num(left - 8.0) + "\" y=\"" + num(py(fy) + 4.0) +
         "\" text-anchor=\"end\">" + tick_label(fy) + "</text>\n";
  }
  s += "<line class=\"axis\" x1=\"" + num(left) + "\" y1=\"" + num(bottom) + "\" x2=\"" +
       num(right) + "\" y2=\"" + num(bottom) + "\"/>\n";
  s += "<line class=\"axis\" x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) +
       "\" y2=\"" + num(bottom) + "\"/>\n";
  s += "<text x=\"" + num((left + right) / 2) + "\" y=\"" + num(height - 12.0) +
       "\" text-anchor=\"middle\">EP90 (ms)</text>\n";
  s += "<text x=\"18\" y=\"" + num((top + bottom) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       num((top + bottom) / 2) + ")\">WER (%)</text>\n";

  for (const SweepPoint& p : points) {
    const double cx = px(p.result.ep90_ms);
    const double cy = py(p.result.wer);
    s += "<circle class=\"pt\" cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"4\"/>\n";
    s += "<text x=\"" + num(cx + 6.0) + "\" y=\"" + num(cy - 6.0) + "\">" + p.config_id +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace harness
}  // namespace twopass
