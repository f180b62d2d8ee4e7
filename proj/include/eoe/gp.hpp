#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "eoe/common.hpp"
#include "eoe/lbfgs.hpp"
#include "eoe/polar.hpp"

namespace eoe {

/// Hyperparameters of the periodic squared-exponential radial GP plus the
/// trainable mean radius. Variances are stored squared; positivity is
/// maintained by optimizing in log-space.
struct GpHyperParams {
  double signal_var = 4.0;       // sigma_f^2, m^2
  double length_scale_sq = 4.0;  // l^2
  double noise_var = 4.0;        // sigma_n^2, m^2
  double mean_radius = 0.0;      // mu, m

  void validate() const {
    if (!(signal_var > 0.0) || !(length_scale_sq > 0.0) || !(noise_var > 0.0))
      throw ConfigError("GpHyperParams: variances and length scale must be "
                        "strictly positive");
    if (!std::isfinite(mean_radius))
      throw ConfigError("GpHyperParams: mean radius must be finite");
  }
};

/// Periodic squared-exponential covariance with period 2*pi:
///   k(a, b) = sigma_f^2 * exp(-2 sin^2((a - b)/2) / l^2)
inline double kernel(double a, double b, const GpHyperParams& hyper) {
  const double s = std::sin(0.5 * (a - b));
  return hyper.signal_var * std::exp(-2.0 * s * s / hyper.length_scale_sq);
}

namespace detail {

/// Matrix of sin^2((theta_i - theta_j)/2); hyperparameter-independent, so a
/// fit computes it once and reuses it across optimizer evaluations.
inline Eigen::MatrixXd half_angle_sin_sq(const std::vector<double>& angles) {
  const int m = static_cast<int>(angles.size());
  Eigen::MatrixXd s2(m, m);
  for (int i = 0; i < m; ++i) {
    s2(i, i) = 0.0;
    for (int j = 0; j < i; ++j) {
      const double s = std::sin(0.5 * (angles[i] - angles[j]));
      s2(i, j) = s2(j, i) = s * s;
    }
  }
  return s2;
}

inline Eigen::MatrixXd gram(const Eigen::MatrixXd& s2,
                            const GpHyperParams& hyper) {
  return hyper.signal_var *
         (-2.0 / hyper.length_scale_sq * s2.array()).exp().matrix();
}

struct Factorization {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
  bool ok = false;
};

/// Cholesky of K + sigma_n^2 I, escalating a diagonal jitter of
/// 1e-12..1e-6 times sigma_f^2 if the plain factorization fails.
inline Factorization factorize_ky(const Eigen::MatrixXd& k,
                                  const GpHyperParams& hyper) {
  Factorization f;
  Eigen::MatrixXd ky = k;
  ky.diagonal().array() += hyper.noise_var;
  f.llt.compute(ky);
  if (f.llt.info() == Eigen::Success) {
    f.ok = true;
    return f;
  }
  for (double scale = 1e-12; scale <= 1.0001e-6; scale *= 10.0) {
    const double jitter = scale * hyper.signal_var;
    Eigen::MatrixXd kyj = ky;
    kyj.diagonal().array() += jitter;
    f.llt.compute(kyj);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = jitter;
      f.ok = true;
      return f;
    }
  }
  return f;
}

struct Evaluation {
  Factorization fac;
  Eigen::VectorXd eta;    // r - mu*1
  Eigen::VectorXd alpha;  // Ky^-1 eta
  double log_marginal = -std::numeric_limits<double>::infinity();
};

inline bool evaluate(const Eigen::MatrixXd& s2, const Eigen::VectorXd& radii,
                     const GpHyperParams& hyper, Evaluation& out) {
  const int m = static_cast<int>(radii.size());
  const Eigen::MatrixXd k = gram(s2, hyper);
  out.fac = factorize_ky(k, hyper);
  if (!out.fac.ok) return false;
  out.eta = radii.array() - hyper.mean_radius;
  out.alpha = out.fac.llt.solve(out.eta);
  double log_det = 0.0;
  for (int i = 0; i < m; ++i)
    log_det += std::log(out.fac.llt.matrixLLT()(i, i));
  log_det *= 2.0;
  out.log_marginal = -0.5 * out.eta.dot(out.alpha) - 0.5 * log_det -
                     0.5 * m * std::log(2.0 * kPi);
  return true;
}

/// Gradient of the log marginal likelihood w.r.t. (mu, sigma_f^2, l^2,
/// sigma_n^2) given a completed evaluation.
inline Eigen::Vector4d lml_gradient_raw(const Eigen::MatrixXd& s2,
                                        const GpHyperParams& hyper,
                                        const Evaluation& ev) {
  const int m = static_cast<int>(ev.alpha.size());
  const Eigen::MatrixXd k = gram(s2, hyper);
  const Eigen::MatrixXd ky_inv =
      ev.fac.llt.solve(Eigen::MatrixXd::Identity(m, m));
  const Eigen::MatrixXd s =
      ev.alpha * ev.alpha.transpose() - ky_inv;  // alpha alpha^T - Ky^-1

  Eigen::Vector4d grad;
  grad[0] = ev.alpha.sum();  // d/dmu = 1^T Ky^-1 eta
  // dK/dsigma_f^2 = K / sigma_f^2
  grad[1] = 0.5 * (s.array() * k.array()).sum() / hyper.signal_var;
  // dK/dl^2 = K * 2 sin^2(d/2) / l^4
  const double inv_l4 =
      1.0 / (hyper.length_scale_sq * hyper.length_scale_sq);
  grad[2] = 0.5 * (s.array() * k.array() * 2.0 * s2.array()).sum() * inv_l4;
  // dKy/dsigma_n^2 = I
  grad[3] = 0.5 * s.trace();
  return grad;
}

}  // namespace detail

/// Log marginal likelihood of the radii under the periodic-SE GP, via
/// Cholesky of Ky = K + sigma_n^2 I.
inline double log_marginal(const PolarTrainingSet& data,
                           const GpHyperParams& hyper) {
  data.validate();
  hyper.validate();
  const Eigen::MatrixXd s2 = detail::half_angle_sin_sq(data.angles);
  const Eigen::VectorXd radii = Eigen::Map<const Eigen::VectorXd>(
      data.radii.data(), static_cast<long>(data.radii.size()));
  detail::Evaluation ev;
  if (!detail::evaluate(s2, radii, hyper, ev))
    throw NumericalError("log_marginal: Gram matrix not positive definite "
                         "after maximum jitter");
  return ev.log_marginal;
}

/// Analytic gradient of the log marginal likelihood with respect to
/// (mu, sigma_f^2, l^2, sigma_n^2).
inline Eigen::Vector4d lml_gradient(const PolarTrainingSet& data,
                                    const GpHyperParams& hyper) {
  data.validate();
  hyper.validate();
  const Eigen::MatrixXd s2 = detail::half_angle_sin_sq(data.angles);
  const Eigen::VectorXd radii = Eigen::Map<const Eigen::VectorXd>(
      data.radii.data(), static_cast<long>(data.radii.size()));
  detail::Evaluation ev;
  if (!detail::evaluate(s2, radii, hyper, ev))
    throw NumericalError("lml_gradient: Gram matrix not positive definite "
                         "after maximum jitter");
  return detail::lml_gradient_raw(s2, hyper, ev);
}

/// Trained radial GP: hyperparameters plus the cached Cholesky factor and
/// weight vector that make prediction cheap. Immutable after fit.
struct GpModel {
  GpHyperParams hyper;
  std::vector<double> train_angles;
  std::vector<double> train_radii;
  Eigen::MatrixXd chol_ky;  // lower-triangular factor of Ky (+ jitter)
  Eigen::VectorXd alpha;    // Ky^-1 (r - mu*1)
  double log_marginal = 0.0;
  double jitter = 0.0;
  Eigen::Vector2d origin{0.0, 0.0};  // polar origin the angles refer to
  int cluster_id = 0;
  bool converged = true;
  int fit_iterations = 0;

  int size() const { return static_cast<int>(train_angles.size()); }
};

/// Prior-only model: predictions return (mu, sigma_f^2) everywhere.
inline GpModel make_prior_model(const GpHyperParams& hyper) {
  hyper.validate();
  GpModel model;
  model.hyper = hyper;
  model.log_marginal = 0.0;
  return model;
}

struct FitOptions {
  int max_iterations = 200;
  double gradient_tol = 1e-6;
};

namespace detail {

inline GpModel build_model(const PolarTrainingSet& data,
                           const GpHyperParams& hyper) {
  const Eigen::MatrixXd s2 = half_angle_sin_sq(data.angles);
  const Eigen::VectorXd radii = Eigen::Map<const Eigen::VectorXd>(
      data.radii.data(), static_cast<long>(data.radii.size()));
  Evaluation ev;
  if (!evaluate(s2, radii, hyper, ev))
    throw NumericalError("gp fit: Gram matrix not positive definite after "
                         "maximum jitter");
  // one step of iterative refinement tightens alpha near the
  // interpolation limit
  Eigen::MatrixXd ky = gram(s2, hyper);
  ky.diagonal().array() += hyper.noise_var + ev.fac.jitter;
  ev.alpha += ev.fac.llt.solve(ev.eta - ky * ev.alpha);
  GpModel model;
  model.hyper = hyper;
  model.train_angles = data.angles;
  model.train_radii = data.radii;
  model.chol_ky = ev.fac.llt.matrixL();
  model.alpha = ev.alpha;
  model.log_marginal = ev.log_marginal;
  model.jitter = ev.fac.jitter;
  model.origin = data.origin;
  model.cluster_id = data.cluster_id;
  return model;
}

}  // namespace detail

/// Trains the GP by maximizing the log marginal likelihood over
/// (mu, log sigma_f^2, log l^2, log sigma_n^2) with L-BFGS. The marginal
/// likelihood of oscillatory contours has a no-signal local maximum whose
/// basin contains generic inits, so the main run is followed by restarts
/// over a fixed ladder of length scales (variances seeded from the data)
/// plus a closed-form update of the mean; the best final likelihood wins.
/// The returned model never has a lower log marginal likelihood than the
/// initial point; if the optimizer stalls early the best iterate is
/// returned with `converged == false`.
inline GpModel fit(const PolarTrainingSet& data, const GpHyperParams& init,
                   const FitOptions& opts = {}) {
  data.validate();
  init.validate();
  if (data.size() < 2)
    throw ConfigError("gp fit: need at least 2 training points");

  const Eigen::MatrixXd s2 = detail::half_angle_sin_sq(data.angles);
  const Eigen::VectorXd radii = Eigen::Map<const Eigen::VectorXd>(
      data.radii.data(), static_cast<long>(data.radii.size()));

  auto unpack = [](const Eigen::VectorXd& x) {
    GpHyperParams h;
    h.mean_radius = x[0];
    h.signal_var = std::exp(x[1]);
    h.length_scale_sq = std::exp(x[2]);
    h.noise_var = std::exp(x[3]);
    return h;
  };

  auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const GpHyperParams h = unpack(x);
    detail::Evaluation ev;
    if (!detail::evaluate(s2, radii, h, ev))
      return std::numeric_limits<double>::infinity();
    if (grad) {
      const Eigen::Vector4d raw = detail::lml_gradient_raw(s2, h, ev);
      (*grad)[0] = -raw[0];
      (*grad)[1] = -raw[1] * h.signal_var;     // chain rule to log-space
      (*grad)[2] = -raw[2] * h.length_scale_sq;
      (*grad)[3] = -raw[3] * h.noise_var;
    }
    return -ev.log_marginal;
  };

  auto run = [&](const Eigen::VectorXd& x0, int budget) {
    LbfgsOptions lopts;
    lopts.max_iterations = budget;
    lopts.gradient_tol = opts.gradient_tol;
    return lbfgs_minimize(objective, x0, lopts);
  };

  Eigen::VectorXd x0(4);
  x0 << init.mean_radius, std::log(init.signal_var),
      std::log(init.length_scale_sq), std::log(init.noise_var);

  LbfgsResult best = run(x0, opts.max_iterations);
  if (!std::isfinite(best.f))
    throw NumericalError("gp fit: likelihood not evaluable at the initial "
                         "hyperparameters");

  double mean_r = 0.0, var_r = 0.0;
  for (double r : data.radii) mean_r += r;
  mean_r /= static_cast<double>(data.size());
  for (double r : data.radii) var_r += (r - mean_r) * (r - mean_r);
  var_r /= static_cast<double>(data.size());

  const int ladder_budget = std::min(opts.max_iterations, 60);
  for (const double l2 : {0.25, 1.0 / 16.0, 1.0 / 64.0}) {
    Eigen::VectorXd xr(4);
    xr << mean_r, std::log(std::max(var_r, 1e-8)), std::log(l2),
        std::log(std::max(0.25 * var_r, 1e-8));
    const LbfgsResult res = run(xr, ladder_budget);
    if (res.f < best.f) best = res;
  }

  // closed-form conditional optimum of the mean, then a short re-polish
  {
    const GpHyperParams h = unpack(best.x);
    detail::Evaluation ev;
    if (detail::evaluate(s2, radii, h, ev)) {
      const Eigen::VectorXd kinv_r = ev.fac.llt.solve(radii);
      const Eigen::VectorXd kinv_one =
          ev.fac.llt.solve(Eigen::VectorXd::Ones(radii.size()));
      const double denom = kinv_one.sum();
      if (std::abs(denom) > 1e-300) {
        Eigen::VectorXd xp = best.x;
        xp[0] = kinv_r.sum() / denom;
        const LbfgsResult res = run(xp, std::min(opts.max_iterations, 30));
        if (res.f < best.f) best = res;
      }
    }
  }

  GpModel model = detail::build_model(data, unpack(best.x));
  model.converged = best.converged;
  model.fit_iterations = best.iterations;
  return model;
}

/// Default initialization: l = sigma_f = sigma_n = 2 and mu set to the
/// empirical mean radius of the data.
inline GpHyperParams default_init(const PolarTrainingSet& data) {
  GpHyperParams h;
  h.signal_var = 4.0;
  h.length_scale_sq = 4.0;
  h.noise_var = 4.0;
  double sum = 0.0;
  for (double r : data.radii) sum += r;
  h.mean_radius = data.radii.empty() ? 0.0 : sum / data.radii.size();
  return h;
}

/// Predictive mean, variance, and 95% CI half-width (2 standard deviations)
/// of the radial function at the test angles.
struct RadialPrediction {
  std::vector<double> test_angles;
  std::vector<double> mean;      // m
  std::vector<double> variance;  // m^2
  std::vector<double> ci95_half_width;
};

inline RadialPrediction predict(const GpModel& model,
                                const std::vector<double>& test_angles) {
  const int m = model.size();
  RadialPrediction pred;
  pred.test_angles = test_angles;
  pred.mean.reserve(test_angles.size());
  pred.variance.reserve(test_angles.size());
  pred.ci95_half_width.reserve(test_angles.size());

  Eigen::VectorXd k_star(m);
  for (double theta : test_angles) {
    double mean = model.hyper.mean_radius;
    double var = model.hyper.signal_var;
    if (m > 0) {
      for (int i = 0; i < m; ++i)
        k_star[i] = kernel(theta, model.train_angles[i], model.hyper);
      mean += k_star.dot(model.alpha);
      const Eigen::VectorXd v =
          model.chol_ky.triangularView<Eigen::Lower>().solve(k_star);
      var -= v.squaredNorm();
    }
    if (var < -1e-10)
      throw NumericalError("predict: predictive variance below -1e-10; "
                           "factorization is inconsistent");
    pred.mean.push_back(mean);
    pred.variance.push_back(std::max(var, 0.0));
    pred.ci95_half_width.push_back(2.0 * std::sqrt(std::max(var, 0.0)));
  }
  return pred;
}

/// Cartesian contours from a radial prediction: the mean contour plus the
/// inner/outer 95% CI contours (inner radius clamped at 0).
struct ContourSet {
  std::vector<Eigen::Vector2d> mean;
  std::vector<Eigen::Vector2d> ci_lower;
  std::vector<Eigen::Vector2d> ci_upper;
};

inline ContourSet reconstruct_contour(const RadialPrediction& pred,
                                      const Eigen::Vector2d& origin) {
  ContourSet c;
  const std::size_t n = pred.test_angles.size();
  c.mean.reserve(n);
  c.ci_lower.reserve(n);
  c.ci_upper.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d dir(std::cos(pred.test_angles[i]),
                              std::sin(pred.test_angles[i]));
    c.mean.push_back(origin + pred.mean[i] * dir);
    c.ci_lower.push_back(
        origin + std::max(pred.mean[i] - pred.ci95_half_width[i], 0.0) * dir);
    c.ci_upper.push_back(origin +
                         (pred.mean[i] + pred.ci95_half_width[i]) * dir);
  }
  return c;
}

}  // namespace eoe
