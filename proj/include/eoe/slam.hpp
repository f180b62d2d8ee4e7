#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <vector>

#include "eoe/common.hpp"
#include "eoe/geometry.hpp"
#include "eoe/levenberg_marquardt.hpp"
#include "eoe/mapping.hpp"
#include "eoe/parallel.hpp"
#include "eoe/rng.hpp"

namespace eoe {

/// Controls for the RANSAC-style snapshot SLAM solver.
struct SlamConfig {
  int minimal_subset_size = 4;
  int ransac_iterations = 200;
  double inlier_gate = kChi2Dof3Q99;  // on per-path profiled cost
  int refine_max_iters = 100;
  std::uint64_t rng_seed = 0;

  // Initial-candidate search region. Zero half-width derives a box around
  // the transmitter from the largest bistatic range in the snapshot.
  Vec2 search_center{0.0, 0.0};
  double search_half_width = 0.0;
  int position_grid = 7;    // grid points per axis
  int random_positions = 8;
  int heading_grid = 48;

  MappingConfig mapping;  // profiling / final IP solver controls

  void validate() const {
    if (minimal_subset_size < 2)
      throw ConfigError("SlamConfig: minimal_subset_size must be >= 2");
    if (ransac_iterations < 1)
      throw ConfigError("SlamConfig: ransac_iterations must be >= 1");
    if (!(inlier_gate > 0.0)) throw ConfigError("SlamConfig: gate must be > 0");
    mapping.validate();
  }
};

struct SlamResult {
  RxState rx_estimate;
  std::set<int> inlier_ids;
  std::set<int> outlier_ids;
  std::vector<IncidencePoint> incidence_points;  // NLoS inliers
  double total_cost = 0.0;
  double pre_refit_cost = 0.0;  // summed inlier cost of the winning candidate
  bool converged = true;
};

namespace detail {

inline bool is_los(const PathMeasurement& z) {
  return z.path_kind_hint == PathKind::los;
}

/// 3*n observations must cover 4 receiver unknowns plus 2 per NLoS path.
inline bool identifiable(const std::vector<PathMeasurement>& subset) {
  int n_nlos = 0;
  for (const auto& z : subset)
    if (!is_los(z)) ++n_nlos;
  return 3 * static_cast<int>(subset.size()) >= 4 + 2 * n_nlos;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

inline double direct_los_cost(const PathMeasurement& z, const RxState& rx,
                              const TxState& tx) {
  const Vec3 g = forward_model_los(tx, rx);
  const Vec3 sigma = z.noise_std();
  const double rt = (z.toa - g[kToa]) / sigma[kToa];
  const double rd = wrap_angle(z.aod - g[kAod]) / sigma[kAod];
  const double ra = wrap_angle(z.aoa - g[kAoa]) / sigma[kAoa];
  return rt * rt + rd * rd + ra * ra;
}

}  // namespace detail

/// Profiled per-path cost under a fixed receiver state: the incidence point
/// is optimized away for NLoS paths, LoS paths are evaluated directly.
inline double profiled_path_cost(const PathMeasurement& z, const RxState& rx,
                                 const TxState& tx,
                                 const MappingConfig& cfg = {}) {
  if (detail::is_los(z)) return detail::direct_los_cost(z, rx, tx);
  return estimate_ip(z, rx, tx, cfg).residual_cost;
}

/// Clock-bias estimate given a known position and heading: the median
/// bistatic-range residual over the paths whose AoD/AoA rays intersect.
inline double estimate_clock_bias(const std::vector<PathMeasurement>& zs,
                                  const TxState& tx, const Vec2& position,
                                  double heading) {
  std::vector<double> residuals;
  residuals.reserve(zs.size());
  for (const auto& z : zs) {
    if (detail::is_los(z)) {
      residuals.push_back(z.toa -
                          (tx.position - position).norm() / kSpeedOfLight);
      continue;
    }
    const auto ip = detail::ray_intersection(
        tx.position, tx.orientation + z.aod, position, heading + z.aoa);
    if (!ip) continue;
    const double range = (tx.position - *ip).norm() + (*ip - position).norm();
    residuals.push_back(z.toa - range / kSpeedOfLight);
  }
  return detail::median(std::move(residuals));
}

namespace detail {

/// Scores a fully specified candidate by the sum of per-path costs at the
/// cheap ray-intersection incidence-point proxies.
inline double proxy_candidate_cost(const std::vector<PathMeasurement>& zs,
                                   const TxState& tx, const RxState& rx) {
  constexpr double kMissPenalty = 1e12;
  double total = 0.0;
  for (const auto& z : zs) {
    if (is_los(z)) {
      total += direct_los_cost(z, rx, tx);
      continue;
    }
    const auto ip = ray_intersection(tx.position, tx.orientation + z.aod,
                                     rx.position, rx.heading + z.aoa);
    if (!ip) {
      total += kMissPenalty;
      continue;
    }
    total += cost_J(z, rx, tx, *ip);
  }
  return total;
}

/// Heading and bias for a hypothesized position via a coarse circular scan:
/// each heading implies incidence-point proxies and per-path bias samples;
/// the heading whose bias samples agree best wins.
inline std::optional<std::pair<double, double>> scan_heading_bias(
    const std::vector<PathMeasurement>& zs, const TxState& tx, const Vec2& p,
    int heading_grid) {
  constexpr double kMissPenalty = 1e12;
  double best_score = std::numeric_limits<double>::infinity();
  double best_heading = 0.0, best_bias = 0.0;
  for (int k = 0; k < heading_grid; ++k) {
    const double heading = -kPi + 2.0 * kPi * k / heading_grid;
    std::vector<double> bias_samples;
    double penalty = 0.0;
    for (const auto& z : zs) {
      if (is_los(z)) {
        bias_samples.push_back(
            z.toa - (tx.position - p).norm() / kSpeedOfLight);
        continue;
      }
      const auto ip = ray_intersection(tx.position, tx.orientation + z.aod, p,
                                       heading + z.aoa);
      if (!ip) {
        penalty += kMissPenalty;
        continue;
      }
      const double range = (tx.position - *ip).norm() + (*ip - p).norm();
      bias_samples.push_back(z.toa - range / kSpeedOfLight);
    }
    if (bias_samples.empty()) continue;
    const double med = median(bias_samples);
    double score = penalty;
    for (double b : bias_samples) {
      const double dev = (b - med) / 1e-9;  // ns-scale consistency
      score += dev * dev;
    }
    if (score < best_score) {
      best_score = score;
      best_heading = heading;
      best_bias = med;
    }
  }
  if (!std::isfinite(best_score)) return std::nullopt;
  return std::make_pair(best_heading, best_bias);
}

}  // namespace detail

/// Initial receiver-state hypothesis from a minimal subset: grid-plus-random
/// multistart over position, heading from the circular mean of the
/// AoA-implied directions at bistatic-range-consistent points on the AoD
/// rays, bias from the median bistatic-range residual. The best-scoring
/// candidate is returned.
inline RxState initial_candidate(const std::vector<PathMeasurement>& subset,
                                 const TxState& tx, const SlamConfig& cfg,
                                 std::mt19937_64& rng) {
  if (subset.empty()) throw ConfigError("initial_candidate: empty subset");

  Vec2 center = cfg.search_center;
  double half_width = cfg.search_half_width;
  if (half_width <= 0.0) {
    double rho_max = 0.0;
    for (const auto& z : subset)
      rho_max = std::max(rho_max, kSpeedOfLight * z.toa);
    center = tx.position;
    half_width = std::max(5.0, 0.75 * rho_max);
  }

  std::vector<Vec2> positions;
  const int g = std::max(cfg.position_grid, 1);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      const double fx = g == 1 ? 0.0 : -1.0 + 2.0 * i / (g - 1);
      const double fy = g == 1 ? 0.0 : -1.0 + 2.0 * j / (g - 1);
      positions.emplace_back(center.x() + fx * half_width,
                             center.y() + fy * half_width);
    }
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int i = 0; i < cfg.random_positions; ++i)
    positions.emplace_back(center.x() + uni(rng) * half_width,
                           center.y() + uni(rng) * half_width);

  RxState best;
  best.position = center;
  double best_score = std::numeric_limits<double>::infinity();

  for (const Vec2& p : positions) {
    const auto coarse =
        detail::scan_heading_bias(subset, tx, p, cfg.heading_grid);
    if (!coarse) continue;
    auto [heading, bias] = *coarse;

    // AoA-implied heading refinement: incidence-point proxies on the AoD
    // rays at the scanned bias, circular mean of (bearing - AoA)
    double sin_sum = 0.0, cos_sum = 0.0;
    for (const auto& z : subset) {
      std::optional<Vec2> proxy;
      if (detail::is_los(z)) {
        proxy = tx.position;
      } else {
        const double aod_dir = tx.orientation + z.aod;
        const Vec2 u(std::cos(aod_dir), std::sin(aod_dir));
        const double rho = kSpeedOfLight * (z.toa - bias);
        if (auto d = detail::bistatic_ray_distance(tx.position, u, p, rho))
          proxy = tx.position + *d * u;
      }
      if (!proxy || (*proxy - p).norm() < kDegenerateTol) continue;
      const Vec2 dir = *proxy - p;
      const double implied =
          wrap_angle(std::atan2(dir.y(), dir.x()) - z.aoa);
      sin_sum += std::sin(implied);
      cos_sum += std::cos(implied);
    }
    if (sin_sum != 0.0 || cos_sum != 0.0)
      heading = std::atan2(sin_sum, cos_sum);
    bias = estimate_clock_bias(subset, tx, p, heading);

    RxState cand;
    cand.position = p;
    cand.heading = wrap_angle(heading);
    cand.clock_bias = bias;
    const double score = detail::proxy_candidate_cost(subset, tx, cand);
    if (score < best_score) {
      best_score = score;
      best = cand;
    }
  }
  return best;
}

namespace detail {

/// Joint least-squares over [rx position, heading, clock bias, NLoS IPs].
/// The clock bias is carried in meters (c*b) so all parameters share a
/// comparable scale.
struct JointProblem {
  const std::vector<PathMeasurement>& zs;
  const TxState& tx;
  std::vector<int> nlos_param_index;  // per path: IP slot or -1 for LoS

  static RxState unpack_rx(const Eigen::VectorXd& x) {
    RxState rx;
    rx.position = Vec2(x[0], x[1]);
    rx.heading = x[2];
    rx.clock_bias = x[3] / kSpeedOfLight;
    return rx;
  }

  bool residuals(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    const RxState rx = unpack_rx(x);
    r.resize(3 * static_cast<long>(zs.size()));
    for (std::size_t i = 0; i < zs.size(); ++i) {
      const auto& z = zs[i];
      Vec3 res;
      if (nlos_param_index[i] < 0) {
        const Vec3 g = forward_model_los(tx, rx);
        const Vec3 sigma = z.noise_std();
        res[kToa] = (z.toa - g[kToa]) / sigma[kToa];
        res[kAod] = wrap_angle(z.aod - g[kAod]) / sigma[kAod];
        res[kAoa] = wrap_angle(z.aoa - g[kAoa]) / sigma[kAoa];
      } else {
        const int base = 4 + 2 * nlos_param_index[i];
        const auto wr = whitened_residual(z, rx, tx,
                                          Vec2(x[base], x[base + 1]));
        if (!wr) return false;
        res = *wr;
      }
      r.segment<3>(3 * static_cast<long>(i)) = res;
    }
    return true;
  }

  void jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& jac) const {
    const RxState rx = unpack_rx(x);
    const long rows = 3 * static_cast<long>(zs.size());
    jac = Eigen::MatrixXd::Zero(rows, x.size());
    for (std::size_t i = 0; i < zs.size(); ++i) {
      const auto& z = zs[i];
      const Vec3 inv_sigma = z.noise_std().cwiseInverse();
      const long row = 3 * static_cast<long>(i);
      Eigen::Matrix<double, 3, 4> j_rx;
      if (nlos_param_index[i] < 0) {
        j_rx = forward_jacobian_rx_los(tx, rx);
      } else {
        const int base = 4 + 2 * nlos_param_index[i];
        const Vec2 ip(x[base], x[base + 1]);
        j_rx = forward_jacobian_rx(tx, rx, ip);
        jac.block<3, 2>(row, base) =
            -(inv_sigma.asDiagonal() * forward_jacobian_ip(tx, rx, ip));
      }
      j_rx.col(3) /= kSpeedOfLight;  // bias parameter is in meters
      jac.block<3, 4>(row, 0) = -(inv_sigma.asDiagonal() * j_rx);
    }
  }
};

}  // namespace detail

struct JointRefineResult {
  RxState rx;
  std::vector<IncidencePoint> incidence_points;  // NLoS paths, input order
  double total_cost = 0.0;
  bool converged = true;
};

/// Refines receiver state and incidence points jointly over a path subset by
/// LM on the stacked whitened residuals. IPs are initialized by profiling
/// each path under the initial receiver state.
inline JointRefineResult joint_ls_refine(
    const std::vector<PathMeasurement>& subset, const TxState& tx,
    const RxState& rx_init, const SlamConfig& cfg = {}) {
  if (!detail::identifiable(subset))
    throw NumericalError("joint_ls_refine: subset does not satisfy the "
                         "identifiability count (need n >= 4 NLoS paths, "
                         "fewer with a LoS path)");

  detail::JointProblem problem{subset, tx, {}};
  problem.nlos_param_index.resize(subset.size(), -1);
  int n_nlos = 0;
  for (std::size_t i = 0; i < subset.size(); ++i)
    if (!detail::is_los(subset[i])) problem.nlos_param_index[i] = n_nlos++;

  Eigen::VectorXd x0(4 + 2 * n_nlos);
  x0[0] = rx_init.position.x();
  x0[1] = rx_init.position.y();
  x0[2] = rx_init.heading;
  x0[3] = rx_init.clock_bias * kSpeedOfLight;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (problem.nlos_param_index[i] < 0) continue;
    const IncidencePoint ip =
        estimate_ip(subset[i], rx_init, tx, cfg.mapping);
    const int base = 4 + 2 * problem.nlos_param_index[i];
    x0[base] = ip.position.x();
    x0[base + 1] = ip.position.y();
  }

  LmOptions opts;
  opts.max_iterations = cfg.refine_max_iters;
  opts.gradient_tol = cfg.mapping.gradient_tol;
  opts.initial_damping = cfg.mapping.step_damping_init;
  const LmResult res = lm_minimize(problem, x0, opts);

  JointRefineResult out;
  out.rx = detail::JointProblem::unpack_rx(res.x);
  out.rx.normalize();
  out.total_cost = res.cost;
  out.converged = res.converged;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (problem.nlos_param_index[i] < 0) continue;
    const int base = 4 + 2 * problem.nlos_param_index[i];
    IncidencePoint ip;
    ip.position = Vec2(res.x[base], res.x[base + 1]);
    ip.source_path_id = subset[i].path_id;
    ip.residual_cost = cost_J(subset[i], out.rx, tx, ip.position);
    ip.converged = res.converged;
    out.incidence_points.push_back(ip);
  }
  return out;
}

/// Robust snapshot SLAM: RANSAC rounds draw minimal subsets, each solved for
/// a receiver candidate by joint LS; all paths are scored by their profiled
/// cost and gated; the candidate with the most inliers (ties by summed
/// inlier cost) is refit on its full inlier set.
inline SlamResult snapshot_slam(const std::vector<PathMeasurement>& zs,
                                const TxState& tx, const SlamConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(zs.size());
  bool any_los = false;
  for (const auto& z : zs) {
    z.validate();
    if (detail::is_los(z)) any_los = true;
  }
  if (!any_los && cfg.minimal_subset_size < 4)
    throw ConfigError("SlamConfig: minimal_subset_size must be >= 4 without "
                      "a LoS hypothesis");
  if (n < cfg.minimal_subset_size)
    throw NumericalError("snapshot_slam: insufficient paths (" +
                         std::to_string(n) + " < " +
                         std::to_string(cfg.minimal_subset_size) + ")");

  struct Round {
    bool valid = false;
    RxState rx;
    std::vector<char> inlier;
    std::vector<double> costs;
    int inlier_count = 0;
    double inlier_cost_sum = 0.0;
  };
  std::vector<Round> rounds(cfg.ransac_iterations);

  parallel_for(rounds.size(), [&](std::size_t k) {
    auto rng = make_rng(derive_seed(cfg.rng_seed, k));
    // partial Fisher-Yates draw of a minimal subset
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::vector<PathMeasurement> subset;
    for (int i = 0; i < cfg.minimal_subset_size; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
      subset.push_back(zs[idx[i]]);
    }
    if (!detail::identifiable(subset)) return;

    Round& round = rounds[k];
    try {
      const RxState cand0 = initial_candidate(subset, tx, cfg, rng);
      const JointRefineResult refined =
          joint_ls_refine(subset, tx, cand0, cfg);
      round.rx = refined.rx;
      round.costs.resize(n);
      round.inlier.resize(n, 0);
      for (int i = 0; i < n; ++i) {
        round.costs[i] = profiled_path_cost(zs[i], refined.rx, tx,
                                            cfg.mapping);
        if (round.costs[i] <= cfg.inlier_gate) {
          round.inlier[i] = 1;
          ++round.inlier_count;
          round.inlier_cost_sum += round.costs[i];
        }
      }
      round.valid = true;
    } catch (const NumericalError&) {
      round.valid = false;  // degenerate subset; skip this round
    }
  });

  // deterministic reduction in round order
  const Round* best = nullptr;
  for (const Round& round : rounds) {
    if (!round.valid || round.inlier_count == 0) continue;
    if (!best || round.inlier_count > best->inlier_count ||
        (round.inlier_count == best->inlier_count &&
         round.inlier_cost_sum < best->inlier_cost_sum))
      best = &round;
  }
  if (!best || best->inlier_count < cfg.minimal_subset_size)
    throw NumericalError("snapshot_slam: no consensus (best inlier count "
                         "below the minimal subset size)");

  std::vector<PathMeasurement> inlier_set;
  for (int i = 0; i < n; ++i)
    if (best->inlier[i]) inlier_set.push_back(zs[i]);

  const JointRefineResult refit =
      joint_ls_refine(inlier_set, tx, best->rx, cfg);

  SlamResult result;
  result.rx_estimate = refit.rx;
  result.total_cost = refit.total_cost;
  result.pre_refit_cost = best->inlier_cost_sum;
  result.converged = refit.converged;
  for (int i = 0; i < n; ++i) {
    if (best->inlier[i])
      result.inlier_ids.insert(zs[i].path_id);
    else
      result.outlier_ids.insert(zs[i].path_id);
  }
  for (int i = 0; i < n; ++i) {
    if (!best->inlier[i] || detail::is_los(zs[i])) continue;
    result.incidence_points.push_back(
        estimate_ip(zs[i], refit.rx, tx, cfg.mapping));
  }
  return result;
}

}  // namespace eoe
