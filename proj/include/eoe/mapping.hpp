#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include "eoe/common.hpp"
#include "eoe/geometry.hpp"
#include "eoe/levenberg_marquardt.hpp"

namespace eoe {

/// Controls for the per-path incidence-point solver.
struct MappingConfig {
  int max_iterations = 100;
  double gradient_tol = 1e-9;
  double step_damping_init = 1e-3;  // LM lambda_0
  int multistart_count = 3;         // geometric seeds to try

  void validate() const {
    if (max_iterations < 1)
      throw ConfigError("MappingConfig: max_iterations must be >= 1");
    if (!(gradient_tol > 0.0) || !(step_damping_init > 0.0))
      throw ConfigError("MappingConfig: tolerances must be > 0");
  }
};

/// Whitened measurement residual: componentwise (z - g)/sigma with the angle
/// components wrapped to the shortest arc. Empty optional on degenerate
/// geometry.
inline std::optional<Vec3> whitened_residual(const PathMeasurement& z,
                                             const RxState& rx,
                                             const TxState& tx,
                                             const Vec2& ip) {
  const auto g = try_forward_model(tx, rx, ip);
  if (!g) return std::nullopt;
  const Vec3 sigma = z.noise_std();
  Vec3 r;
  r[kToa] = (z.toa - (*g)[kToa]) / sigma[kToa];
  r[kAod] = wrap_angle(z.aod - (*g)[kAod]) / sigma[kAod];
  r[kAoa] = wrap_angle(z.aoa - (*g)[kAoa]) / sigma[kAoa];
  return r;
}

/// Quadratic mapping cost: (z - g)^T R^-1 (z - g) with wrapped angle
/// residuals.
inline double cost_J(const PathMeasurement& z, const RxState& rx,
                     const TxState& tx, const Vec2& ip) {
  const auto r = whitened_residual(z, rx, tx, ip);
  if (!r) throw NumericalError("cost_J: degenerate geometry");
  return r->squaredNorm();
}

namespace detail {

inline std::optional<Vec2> ray_intersection(const Vec2& origin_a, double dir_a,
                                            const Vec2& origin_b,
                                            double dir_b) {
  const Vec2 da(std::cos(dir_a), std::sin(dir_a));
  const Vec2 db(std::cos(dir_b), std::sin(dir_b));
  const double det = da.x() * (-db.y()) - (-db.x()) * da.y();
  if (std::abs(det) < 1e-12) return std::nullopt;  // parallel rays
  const Vec2 rhs = origin_b - origin_a;
  const double t = (rhs.x() * (-db.y()) - (-db.x()) * rhs.y()) / det;
  const double s = (da.x() * rhs.y() - da.y() * rhs.x()) / det;
  if (t <= 0.0 || s <= 0.0) return std::nullopt;  // behind an origin
  return origin_a + t * da;
}

/// Distance d >= 0 along a unit ray from `origin` such that the point at
/// distance d has bistatic range `rho` to the `anchor`:
///   ||anchor - p|| + d = rho. The quadratic collapses to a closed form.
inline std::optional<double> bistatic_ray_distance(const Vec2& origin,
                                                   const Vec2& dir,
                                                   const Vec2& anchor,
                                                   double rho) {
  if (rho <= 0.0) return std::nullopt;
  const Vec2 w = anchor - origin;
  const double denom = 2.0 * (rho - w.dot(dir));
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double d = (rho * rho - w.squaredNorm()) / denom;
  if (d < 0.0 || rho - d < 0.0) return std::nullopt;
  return d;
}

}  // namespace detail

/// Candidate initial points for the incidence-point search:
///   (a) AoD-ray x AoA-ray intersection,
///   (b) bistatic-range-consistent point on the AoA ray,
///   (c) TX/RX midpoint fallback.
inline std::vector<Vec2> geometric_seed(const PathMeasurement& z,
                                        const RxState& rx, const TxState& tx) {
  std::vector<Vec2> seeds;
  const double aod_dir = tx.orientation + z.aod;
  const double aoa_dir = rx.heading + z.aoa;
  if (auto p = detail::ray_intersection(tx.position, aod_dir, rx.position,
                                        aoa_dir))
    seeds.push_back(*p);

  const double rho = kSpeedOfLight * (z.toa - rx.clock_bias);
  const Vec2 aoa_unit(std::cos(aoa_dir), std::sin(aoa_dir));
  if (auto d = detail::bistatic_ray_distance(rx.position, aoa_unit,
                                             tx.position, rho))
    seeds.push_back(rx.position + *d * aoa_unit);

  seeds.push_back(0.5 * (tx.position + rx.position));
  return seeds;
}

namespace detail {

struct IpProblem {
  const PathMeasurement& z;
  const RxState& rx;
  const TxState& tx;

  bool residuals(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    const auto res = whitened_residual(z, rx, tx, Vec2(x[0], x[1]));
    if (!res) return false;
    r = *res;
    return true;
  }

  void jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& jac) const {
    const Vec3 inv_sigma = z.noise_std().cwiseInverse();
    jac = -(inv_sigma.asDiagonal() *
            forward_jacobian_ip(tx, rx, Vec2(x[0], x[1])));
  }
};

}  // namespace detail

/// Estimates the incidence point of one path under a known receiver state by
/// damped Gauss-Newton over the geometric seeds; the lowest-cost run wins.
inline IncidencePoint estimate_ip(const PathMeasurement& z, const RxState& rx,
                                  const TxState& tx,
                                  const MappingConfig& cfg = {}) {
  cfg.validate();
  z.validate();
  LmOptions opts;
  opts.max_iterations = cfg.max_iterations;
  opts.gradient_tol = cfg.gradient_tol;
  opts.initial_damping = cfg.step_damping_init;

  std::vector<Vec2> seeds = geometric_seed(z, rx, tx);
  if (cfg.multistart_count > 0 &&
      static_cast<int>(seeds.size()) > cfg.multistart_count)
    seeds.resize(cfg.multistart_count);

  detail::IpProblem problem{z, rx, tx};
  LmResult best;
  for (const Vec2& seed : seeds) {
    Eigen::VectorXd x0(2);
    // nudge seeds that coincide with an endpoint off the degeneracy
    Vec2 s = seed;
    if ((s - tx.position).norm() < 10 * kDegenerateTol ||
        (s - rx.position).norm() < 10 * kDegenerateTol)
      s += Vec2(1e-6, 1e-6);
    x0 << s.x(), s.y();
    const LmResult res = lm_minimize(problem, x0, opts);
    if (res.cost < best.cost) best = res;
  }
  if (!best.x.size())
    throw NumericalError("estimate_ip: no usable seed");

  IncidencePoint ip;
  ip.position = Vec2(best.x[0], best.x[1]);
  ip.source_path_id = z.path_id;
  ip.residual_cost = best.cost;
  ip.converged = best.converged;
  return ip;
}

}  // namespace eoe
