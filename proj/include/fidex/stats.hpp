#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "json.hpp"

namespace fidex {

/// Linearly interpolated percentile (q in [0, 100]) of `values`; 0 for empty input.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

inline double median(std::vector<double> values) { return percentile(std::move(values), 50.0); }

inline double rms(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s / static_cast<double>(values.size()));
}

struct ErrorStats {
  double median = 0.0;
  double p90 = 0.0;

  static ErrorStats of(const std::vector<double>& v) { return {percentile(v, 50.0), percentile(v, 90.0)}; }
  nlohmann::json to_json() const { return {{"median", median}, {"p90", p90}}; }
};

}  // namespace fidex
