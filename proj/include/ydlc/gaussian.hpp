#pragma once

#include <cmath>
#include <numbers>

namespace ydlc {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// Mass of N(mean, scale) on [value - 0.5, value + 0.5]. Evaluated on the
// lower tail of |value - mean| so both erfc terms stay accurate far out.
inline double interval_probability(double value, double mean, double scale) {
  const double d = std::abs(value - mean);
  return normal_cdf((0.5 - d) / scale) - normal_cdf((-0.5 - d) / scale);
}

}  // namespace ydlc
