#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace eoe {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Chi-square quantile at 0.99 for 3 degrees of freedom, used as the
// default SLAM inlier gate on per-path Mahalanobis costs.
inline constexpr double kChi2Dof3Q99 = 11.3449;

/// Invalid configuration or inconsistent inputs (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure: degenerate geometry, ill-conditioning, no consensus
/// (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File system or parse failure (CLI exit code 4).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Wraps an angle to [-pi, pi). The upper bound maps down: wrap(pi) == -pi.
inline double wrap_angle(double a) {
  double w = a - 2.0 * kPi * std::floor((a + kPi) / (2.0 * kPi));
  // floor rounding can leave w == pi when a is a hair below a wrap boundary
  if (w >= kPi) w -= 2.0 * kPi;
  return w;
}

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace eoe
