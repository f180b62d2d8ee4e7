#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>

#include "eoe/common.hpp"
#include "eoe/rng.hpp"

namespace eoe {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// Indices of the channel-parameter components in measurement vectors.
enum : int { kToa = 0, kAod = 1, kAoa = 2 };

enum class PathKind { unknown, los, nlos };

/// Transmitter pose; position in meters, orientation in [-pi, pi).
struct TxState {
  Vec2 position{0.0, 0.0};
  double orientation = 0.0;

  void normalize() { orientation = wrap_angle(orientation); }
};

/// Receiver state: position (m), heading (rad, [-pi, pi)) and the clock bias
/// (s) between the unsynchronized transmitter and receiver clocks.
struct RxState {
  Vec2 position{0.0, 0.0};
  double heading = 0.0;
  double clock_bias = 0.0;

  void normalize() { heading = wrap_angle(heading); }
};

/// One propagation path's (ToA, AoD, AoA) estimate with a diagonal noise
/// covariance (s^2, rad^2, rad^2).
struct PathMeasurement {
  double toa = 0.0;  // s
  double aod = 0.0;  // rad, [-pi, pi)
  double aoa = 0.0;  // rad, [-pi, pi)
  Vec3 noise_cov{1e-18, 1e-4, 1e-4};
  int path_id = 0;
  PathKind path_kind_hint = PathKind::unknown;

  Vec3 values() const { return Vec3(toa, aod, aoa); }

  /// Componentwise standard deviations.
  Vec3 noise_std() const { return noise_cov.cwiseSqrt(); }

  void validate() const {
    if (!(noise_cov.array() > 0.0).all() || !noise_cov.allFinite())
      throw ConfigError("PathMeasurement: noise covariance diagonal must be "
                        "strictly positive and finite");
    if (!std::isfinite(toa) || !std::isfinite(aod) || !std::isfinite(aoa))
      throw ConfigError("PathMeasurement: non-finite component");
  }
};

/// Default per-path noise covariance: standard deviations of 1 ns on ToA and
/// 1 degree on both angles, converted to SI and squared.
inline Vec3 default_noise_cov() {
  const double s_toa = 1e-9;
  const double s_ang = deg_to_rad(1.0);
  return Vec3(s_toa * s_toa, s_ang * s_ang, s_ang * s_ang);
}

/// Estimated single-bounce reflection point.
struct IncidencePoint {
  Vec2 position{0.0, 0.0};
  int source_path_id = 0;
  double residual_cost = 0.0;  // value of the weighted cost at the optimum
  bool converged = true;
};

constexpr double kDegenerateTol = 1e-9;  // m, coincident-point threshold

/// Channel parameters (toa, aod, aoa) of a single-bounce path reflecting at
/// `ip`. Angles are wrapped to [-pi, pi). Returns nullopt when `ip` coincides
/// with the transmitter or receiver position within 1e-9 m.
inline std::optional<Vec3> try_forward_model(const TxState& tx,
                                             const RxState& rx,
                                             const Vec2& ip) {
  const Vec2 d_tx = ip - tx.position;
  const Vec2 d_rx = ip - rx.position;
  const double r_tx = d_tx.norm();
  const double r_rx = d_rx.norm();
  if (r_tx < kDegenerateTol || r_rx < kDegenerateTol) return std::nullopt;
  Vec3 g;
  g[kToa] = r_tx / kSpeedOfLight + r_rx / kSpeedOfLight + rx.clock_bias;
  g[kAod] = wrap_angle(std::atan2(d_tx.y(), d_tx.x()) - tx.orientation);
  g[kAoa] = wrap_angle(std::atan2(d_rx.y(), d_rx.x()) - rx.heading);
  return g;
}

inline Vec3 forward_model(const TxState& tx, const RxState& rx,
                          const Vec2& ip) {
  auto g = try_forward_model(tx, rx, ip);
  if (!g)
    throw NumericalError(
        "forward_model: incidence point coincides with TX or RX");
  return *g;
}

/// Channel parameters of the line-of-sight path (no incidence point).
inline Vec3 forward_model_los(const TxState& tx, const RxState& rx) {
  const Vec2 d = rx.position - tx.position;
  const double r = d.norm();
  if (r < kDegenerateTol)
    throw NumericalError("forward_model_los: TX and RX coincide");
  Vec3 g;
  g[kToa] = r / kSpeedOfLight + rx.clock_bias;
  g[kAod] = wrap_angle(std::atan2(d.y(), d.x()) - tx.orientation);
  g[kAoa] = wrap_angle(std::atan2(-d.y(), -d.x()) - rx.heading);
  return g;
}

/// Jacobian of the forward model with respect to the incidence point (3x2).
inline Eigen::Matrix<double, 3, 2> forward_jacobian_ip(const TxState& tx,
                                                       const RxState& rx,
                                                       const Vec2& ip) {
  const Vec2 d_tx = ip - tx.position;
  const Vec2 d_rx = ip - rx.position;
  const double r_tx = d_tx.norm();
  const double r_rx = d_rx.norm();
  Eigen::Matrix<double, 3, 2> J;
  J.row(kToa) = (d_tx.transpose() / r_tx + d_rx.transpose() / r_rx) /
                kSpeedOfLight;
  J(kAod, 0) = -d_tx.y() / d_tx.squaredNorm();
  J(kAod, 1) = d_tx.x() / d_tx.squaredNorm();
  J(kAoa, 0) = -d_rx.y() / d_rx.squaredNorm();
  J(kAoa, 1) = d_rx.x() / d_rx.squaredNorm();
  return J;
}

/// Jacobian of the forward model with respect to the receiver state
/// [x, y, heading, clock_bias] (3x4, bias column in 1/seconds units).
inline Eigen::Matrix<double, 3, 4> forward_jacobian_rx(const TxState& tx,
                                                       const RxState& rx,
                                                       const Vec2& ip) {
  (void)tx;
  const Vec2 d_rx = ip - rx.position;
  const double r_rx = d_rx.norm();
  Eigen::Matrix<double, 3, 4> J = Eigen::Matrix<double, 3, 4>::Zero();
  J(kToa, 0) = -d_rx.x() / (r_rx * kSpeedOfLight);
  J(kToa, 1) = -d_rx.y() / (r_rx * kSpeedOfLight);
  J(kToa, 3) = 1.0;
  J(kAoa, 0) = d_rx.y() / d_rx.squaredNorm();
  J(kAoa, 1) = -d_rx.x() / d_rx.squaredNorm();
  J(kAoa, 2) = -1.0;
  return J;
}

/// Jacobian of the LoS forward model with respect to the receiver state.
inline Eigen::Matrix<double, 3, 4> forward_jacobian_rx_los(const TxState& tx,
                                                           const RxState& rx) {
  const Vec2 d = rx.position - tx.position;  // from TX toward RX
  const double r = d.norm();
  Eigen::Matrix<double, 3, 4> J = Eigen::Matrix<double, 3, 4>::Zero();
  J(kToa, 0) = d.x() / (r * kSpeedOfLight);
  J(kToa, 1) = d.y() / (r * kSpeedOfLight);
  J(kToa, 3) = 1.0;
  // aod = atan2(d.y, d.x) - a_tx with d = p_rx - p_tx
  J(kAod, 0) = -d.y() / d.squaredNorm();
  J(kAod, 1) = d.x() / d.squaredNorm();
  // aoa = atan2(-d.y, -d.x) - a_rx; the atan2 term shifts by the same
  // derivative as aod (direction reversal is a constant pi offset)
  J(kAoa, 0) = -d.y() / d.squaredNorm();
  J(kAoa, 1) = d.x() / d.squaredNorm();
  J(kAoa, 2) = -1.0;
  return J;
}

/// Samples a noisy path measurement from the single-bounce likelihood:
/// forward model plus independent zero-mean Gaussian noise per component.
inline PathMeasurement synthesize_path(const TxState& tx, const RxState& rx,
                                       const Vec2& ip, const Vec3& noise_cov,
                                       std::mt19937_64& rng, int path_id = 1) {
  if (!(noise_cov.array() > 0.0).all())
    throw ConfigError("synthesize_path: noise covariance must be positive");
  const Vec3 g = forward_model(tx, rx, ip);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PathMeasurement z;
  z.toa = g[kToa] + gauss(rng) * std::sqrt(noise_cov[kToa]);
  z.aod = wrap_angle(g[kAod] + gauss(rng) * std::sqrt(noise_cov[kAod]));
  z.aoa = wrap_angle(g[kAoa] + gauss(rng) * std::sqrt(noise_cov[kAoa]));
  z.noise_cov = noise_cov;
  z.path_id = path_id;
  z.path_kind_hint = PathKind::nlos;
  return z;
}

inline PathMeasurement synthesize_path(const TxState& tx, const RxState& rx,
                                       const Vec2& ip, const Vec3& noise_cov,
                                       std::uint64_t rng_seed,
                                       int path_id = 1) {
  auto rng = make_rng(rng_seed);
  return synthesize_path(tx, rx, ip, noise_cov, rng, path_id);
}

}  // namespace eoe
