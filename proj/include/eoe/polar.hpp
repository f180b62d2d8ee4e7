#pragma once

#include <Eigen/Dense>
#include <vector>

#include "eoe/common.hpp"

namespace eoe {

/// Per-cluster polar regression data: angles (rad) about `origin` and the
/// matching radial distances (m). The GP treats angles as inputs and radii
/// as observations.
struct PolarTrainingSet {
  std::vector<double> angles;
  std::vector<double> radii;
  Eigen::Vector2d origin{0.0, 0.0};
  int cluster_id = 0;

  std::size_t size() const { return angles.size(); }

  void validate() const {
    if (angles.size() != radii.size())
      throw ConfigError("PolarTrainingSet: angle/radius length mismatch");
    if (angles.empty())
      throw ConfigError("PolarTrainingSet: empty training set");
    for (double r : radii)
      if (!(r >= 0.0))
        throw ConfigError("PolarTrainingSet: radii must be non-negative");
    for (double a : angles)
      if (!(a >= -kPi - 1e-12 && a <= kPi + 1e-12))
        throw ConfigError("PolarTrainingSet: angle outside [-pi, pi]");
  }
};

}  // namespace eoe
