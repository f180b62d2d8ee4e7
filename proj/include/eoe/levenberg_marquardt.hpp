#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace eoe {

struct LmOptions {
  int max_iterations = 100;
  double gradient_tol = 1e-9;     // on ||grad of r^T r||_2
  double initial_damping = 1e-3;  // lambda_0
};

struct LmResult {
  Eigen::VectorXd x;
  double cost = std::numeric_limits<double>::infinity();  // r^T r
  double gradient_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt on a whitened residual vector: minimizes r(x)^T r(x).
/// `problem` must provide
///   bool residuals(const VectorXd& x, VectorXd& r)   (false => infeasible x)
///   void jacobian(const VectorXd& x, MatrixXd& J)
/// Damping scales diag(J^T J), so mixed parameter units are tolerated.
/// Returns the best iterate; `converged` reflects the gradient test.
template <typename Problem>
LmResult lm_minimize(Problem&& problem, Eigen::VectorXd x0,
                     const LmOptions& opts = {}) {
  constexpr double kLambdaMax = 1e14;
  constexpr double kDiagFloor = 1e-12;

  LmResult out;
  Eigen::VectorXd x = std::move(x0);
  const int n = static_cast<int>(x.size());

  Eigen::VectorXd r;
  if (!problem.residuals(x, r)) {
    out.x = x;
    return out;  // infeasible start
  }
  double cost = r.squaredNorm();
  Eigen::MatrixXd jac;
  problem.jacobian(x, jac);
  Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::VectorXd g = jac.transpose() * r;  // half-gradient of cost

  double lambda = opts.initial_damping;
  out.x = x;
  out.cost = cost;
  out.gradient_norm = 2.0 * g.norm();

  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    if (out.gradient_norm <= opts.gradient_tol || cost <= 1e-30) break;

    Eigen::VectorXd diag = jtj.diagonal().cwiseMax(kDiagFloor);
    bool stepped = false;
    while (lambda <= kLambdaMax) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * diag;
      const Eigen::VectorXd step = a.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 4.0;
        continue;
      }
      const Eigen::VectorXd x_new = x + step;
      Eigen::VectorXd r_new;
      if (problem.residuals(x_new, r_new)) {
        const double cost_new = r_new.squaredNorm();
        if (cost_new < cost) {
          x = x_new;
          r = std::move(r_new);
          cost = cost_new;
          lambda = std::max(lambda / 3.0, 1e-12);
          stepped = true;
          break;
        }
      }
      lambda *= 4.0;
    }
    if (!stepped) break;  // damping exhausted

    problem.jacobian(x, jac);
    jtj = jac.transpose() * jac;
    g = jac.transpose() * r;
    out.x = x;
    out.cost = cost;
    out.gradient_norm = 2.0 * g.norm();
  }
  out.iterations = iter;
  out.converged = out.gradient_norm <= opts.gradient_tol || out.cost <= 1e-30;
  (void)n;
  return out;
}

}  // namespace eoe
