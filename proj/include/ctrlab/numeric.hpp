#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

namespace ctrlab {

inline double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logit(double p) noexcept { return std::log(p / (1.0 - p)); }

/// Shortest round-trippable text for a double; "nan" for NaN. Integral
/// values below 2^53 print without exponent.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  if (v == std::floor(v) && std::abs(v) < 9007199254740992.0) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace ctrlab
