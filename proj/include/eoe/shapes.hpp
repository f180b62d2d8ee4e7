#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "eoe/common.hpp"
#include "eoe/gp.hpp"
#include "eoe/polar.hpp"
#include "eoe/rng.hpp"

namespace eoe {

/// Declarative description of a star-convex ground-truth object.
struct ShapeSpec {
  enum class Kind { circle, rectangle, star, gp_sample };

  Kind kind = Kind::circle;
  Eigen::Vector2d center{0.0, 0.0};
  // circle
  double radius = 1.0;
  // rectangle (axis-aligned half extents)
  double half_w = 1.0;
  double half_h = 1.0;
  // star: r(theta) = base_radius + amplitude * cos(lobes * theta)
  double base_radius = 2.0;
  double amplitude = 0.5;
  int lobes = 5;
  // gp_sample: deterministic draw from the radial GP prior
  GpHyperParams gp_hyper{0.25, 1.0, 1e-6, 2.0};
  std::uint64_t gp_seed = 0;

  void validate() const {
    switch (kind) {
      case Kind::circle:
        if (!(radius > 0.0)) throw ConfigError("circle: radius must be > 0");
        break;
      case Kind::rectangle:
        if (!(half_w > 0.0) || !(half_h > 0.0))
          throw ConfigError("rectangle: half extents must be > 0");
        break;
      case Kind::star:
        if (!(base_radius > 0.0) || !(amplitude >= 0.0) || lobes < 1)
          throw ConfigError("star: invalid parameters");
        if (!(amplitude < base_radius))
          throw ConfigError("star: amplitude must stay below base radius to "
                            "keep the contour star-convex");
        break;
      case Kind::gp_sample:
        gp_hyper.validate();
        break;
    }
  }
};

inline std::string to_string(ShapeSpec::Kind kind) {
  switch (kind) {
    case ShapeSpec::Kind::circle: return "circle";
    case ShapeSpec::Kind::rectangle: return "rectangle";
    case ShapeSpec::Kind::star: return "star";
    case ShapeSpec::Kind::gp_sample: return "gp_sample";
  }
  return "unknown";
}

/// Evaluable shape. Plain formula for the analytic kinds; gp_sample draws a
/// dense radial grid from the GP prior once at construction and interpolates
/// it periodically afterwards.
class Shape {
 public:
  static constexpr int kGpGridSize = 512;
  static constexpr double kMinRadius = 1e-3;  // star-convexity floor

  explicit Shape(const ShapeSpec& spec) : spec_(spec) {
    spec_.validate();
    if (spec_.kind == ShapeSpec::Kind::gp_sample) sample_gp_grid();
  }

  const ShapeSpec& spec() const { return spec_; }

  /// Radial distance from the shape center to the contour at angle theta.
  double radial(double theta) const {
    switch (spec_.kind) {
      case ShapeSpec::Kind::circle:
        return spec_.radius;
      case ShapeSpec::Kind::rectangle: {
        const double c = std::abs(std::cos(theta));
        const double s = std::abs(std::sin(theta));
        const double inf = std::numeric_limits<double>::infinity();
        const double rw = c > 1e-300 ? spec_.half_w / c : inf;
        const double rh = s > 1e-300 ? spec_.half_h / s : inf;
        return std::min(rw, rh);
      }
      case ShapeSpec::Kind::star:
        return spec_.base_radius +
               spec_.amplitude * std::cos(spec_.lobes * theta);
      case ShapeSpec::Kind::gp_sample: {
        // periodic linear interpolation on the precomputed grid
        const double step = 2.0 * kPi / kGpGridSize;
        double t = (wrap_angle(theta) + kPi) / step;
        int i0 = static_cast<int>(std::floor(t));
        if (i0 >= kGpGridSize) i0 = kGpGridSize - 1;
        const double frac = t - i0;
        const int i1 = (i0 + 1) % kGpGridSize;
        return (1.0 - frac) * gp_grid_[i0] + frac * gp_grid_[i1];
      }
    }
    return 0.0;
  }

 private:
  void sample_gp_grid() {
    std::vector<double> angles(kGpGridSize);
    for (int i = 0; i < kGpGridSize; ++i)
      angles[i] = -kPi + 2.0 * kPi * i / kGpGridSize;
    Eigen::MatrixXd k =
        detail::gram(detail::half_angle_sin_sq(angles), spec_.gp_hyper);
    k.diagonal().array() += 1e-8 * spec_.gp_hyper.signal_var;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success)
      throw NumericalError("gp_sample shape: prior Gram factorization failed");
    auto rng = make_rng(spec_.gp_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd xi(kGpGridSize);
    for (int i = 0; i < kGpGridSize; ++i) xi[i] = gauss(rng);
    const Eigen::VectorXd draw =
        Eigen::MatrixXd(llt.matrixL()) * xi;
    gp_grid_.resize(kGpGridSize);
    for (int i = 0; i < kGpGridSize; ++i)
      gp_grid_[i] =
          std::max(spec_.gp_hyper.mean_radius + draw[i], kMinRadius);
  }

  ShapeSpec spec_;
  std::vector<double> gp_grid_;
};

inline double radial_truth(const Shape& shape, double theta) {
  return shape.radial(theta);
}

enum class AngleSampling { equally_spaced, uniform_random };

/// Draws M noisy contour measurements of a shape: angles covering [-pi, pi)
/// and radii perturbed by N(0, noise_std^2), clamped at 0. The polar origin
/// is the shape center.
inline PolarTrainingSet sample_contour(
    const Shape& shape, int m, double noise_std, std::mt19937_64& rng,
    AngleSampling sampling = AngleSampling::equally_spaced) {
  if (m < 1) throw ConfigError("sample_contour: need at least one point");
  if (noise_std < 0.0)
    throw ConfigError("sample_contour: noise std must be non-negative");
  PolarTrainingSet out;
  out.origin = shape.spec().center;
  out.angles.reserve(m);
  out.radii.reserve(m);
  std::uniform_real_distribution<double> uni(-kPi, kPi);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < m; ++i) {
    const double theta = sampling == AngleSampling::equally_spaced
                             ? -kPi + 2.0 * kPi * i / m
                             : uni(rng);
    const double noise = noise_std > 0.0 ? noise_std * gauss(rng) : 0.0;
    out.angles.push_back(theta);
    out.radii.push_back(std::max(shape.radial(theta) + noise, 0.0));
  }
  return out;
}

inline PolarTrainingSet sample_contour(
    const Shape& shape, int m, double noise_std, std::uint64_t rng_seed,
    AngleSampling sampling = AngleSampling::equally_spaced) {
  auto rng = make_rng(rng_seed);
  return sample_contour(shape, m, noise_std, rng, sampling);
}

}  // namespace eoe
