#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "eoe/common.hpp"
#include "eoe/geometry.hpp"
#include "eoe/shapes.hpp"

namespace eoe {

/// Synthetic-scene description: transmitter, (ground-truth) receiver, the
/// extended objects, and the measurement noise. Mirrors the scene JSON file.
struct SceneSpec {
  TxState tx;
  std::optional<RxState> rx;  // required for synthesis and mapping
  std::vector<ShapeSpec> objects;
  Vec3 noise_std{1e-9, deg_to_rad(1.0), deg_to_rad(1.0)};  // s, rad, rad
  int paths_per_object = 16;
  int outlier_count = 0;
  // multi-bounce surrogate: extra positive propagation delay range (s)
  double outlier_delay_min = 1e-8;
  double outlier_delay_max = 1e-7;
  std::uint64_t seed = 0;

  Vec3 noise_cov() const { return noise_std.cwiseProduct(noise_std); }
};

/// A synthesized path with its evaluation-only ground truth.
struct SyntheticMeasurement {
  PathMeasurement z;
  Vec2 truth_ip{0.0, 0.0};
  bool is_outlier = false;
};

/// Generates single-bounce measurements along each object contour plus
/// `outlier_count` multi-bounce/clutter surrogates (uniformly random fake
/// incidence points with an extra positive delay). Deterministic per seed.
inline std::vector<SyntheticMeasurement> synthesize_scene(
    const TxState& tx, const RxState& rx, const std::vector<ShapeSpec>& objects,
    int paths_per_object, int outlier_count, const Vec3& noise_cov,
    std::uint64_t rng_seed, double outlier_delay_min = 1e-8,
    double outlier_delay_max = 1e-7) {
  if (objects.empty()) throw ConfigError("synthesize_scene: no objects");
  if (paths_per_object < 1)
    throw ConfigError("synthesize_scene: paths_per_object must be >= 1");
  if (outlier_count < 0)
    throw ConfigError("synthesize_scene: outlier_count must be >= 0");

  auto rng = make_rng(rng_seed);
  std::vector<SyntheticMeasurement> out;
  out.reserve(objects.size() * paths_per_object + outlier_count);

  int path_id = 1;  // id 0 stays reserved for a LoS path
  double extent = 0.0;
  for (const auto& spec : objects) {
    const Shape shape(spec);
    const PolarTrainingSet contour =
        sample_contour(shape, paths_per_object, 0.0, rng);
    for (std::size_t i = 0; i < contour.size(); ++i) {
      const Vec2 ip =
          contour.origin + contour.radii[i] * Vec2(std::cos(contour.angles[i]),
                                                   std::sin(contour.angles[i]));
      SyntheticMeasurement m;
      m.z = synthesize_path(tx, rx, ip, noise_cov, rng, path_id++);
      m.truth_ip = ip;
      out.push_back(m);
      extent = std::max(extent, contour.radii[i]);
    }
  }

  // bounding box of the scene, padded, for fake incidence points
  Vec2 lo = tx.position.cwiseMin(rx.position);
  Vec2 hi = tx.position.cwiseMax(rx.position);
  for (const auto& spec : objects) {
    lo = lo.cwiseMin(spec.center);
    hi = hi.cwiseMax(spec.center);
  }
  const double pad = extent + 2.0;
  std::uniform_real_distribution<double> ux(lo.x() - pad, hi.x() + pad);
  std::uniform_real_distribution<double> uy(lo.y() - pad, hi.y() + pad);
  std::uniform_real_distribution<double> delay(outlier_delay_min,
                                               outlier_delay_max);
  for (int k = 0; k < outlier_count; ++k) {
    Vec2 fake;
    do {
      fake = Vec2(ux(rng), uy(rng));
    } while ((fake - tx.position).norm() < 1.0 ||
             (fake - rx.position).norm() < 1.0);
    SyntheticMeasurement m;
    m.z = synthesize_path(tx, rx, fake, noise_cov, rng, path_id++);
    m.z.toa += delay(rng);
    m.truth_ip = fake;
    m.is_outlier = true;
    out.push_back(m);
  }
  return out;
}

inline std::vector<SyntheticMeasurement> synthesize_scene(
    const SceneSpec& scene) {
  if (!scene.rx)
    throw ConfigError("synthesize_scene: scene has no receiver state");
  return synthesize_scene(scene.tx, *scene.rx, scene.objects,
                          scene.paths_per_object, scene.outlier_count,
                          scene.noise_cov(), scene.seed,
                          scene.outlier_delay_min, scene.outlier_delay_max);
}

}  // namespace eoe
