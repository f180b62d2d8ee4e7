#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <limits>
#include <utility>

namespace eoe {

struct LbfgsOptions {
  int max_iterations = 200;
  double gradient_tol = 1e-6;  // on ||g||_inf, scaled by max(1, |f|)
  int memory = 8;
  double min_step = 1e-20;
  double min_improvement = 1e-9;  // relative per-step progress floor
  // optional box constraints; trial points are projected onto the box
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Limited-memory BFGS with Armijo backtracking. `objective(x, grad)` returns
/// the function value and fills `grad` when non-null; it may return +inf to
/// reject infeasible points. Returns the best iterate seen, never one worse
/// than the start.
template <typename Objective>
LbfgsResult lbfgs_minimize(Objective&& objective, Eigen::VectorXd x0,
                           const LbfgsOptions& opts = {}) {
  const int n = static_cast<int>(x0.size());
  const bool boxed = opts.lower.size() == n && opts.upper.size() == n;
  auto project = [&](Eigen::VectorXd v) {
    if (boxed) v = v.cwiseMax(opts.lower).cwiseMin(opts.upper);
    return v;
  };
  Eigen::VectorXd x = project(std::move(x0));
  Eigen::VectorXd g(n), g_new(n);
  double f = objective(x, &g);

  LbfgsResult best;
  best.x = x;
  best.f = f;
  if (!std::isfinite(f)) return best;

  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> history;  // (s, y)

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    best.iterations = iter;
    if (g.lpNorm<Eigen::Infinity>() <=
        opts.gradient_tol * std::max(1.0, std::abs(f))) {
      best.converged = true;
      break;
    }

    // Two-loop recursion for d = -H*g.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(history.size());
    for (int i = static_cast<int>(history.size()) - 1; i >= 0; --i) {
      const auto& [s, y] = history[i];
      alpha[i] = s.dot(q) / y.dot(s);
      q -= alpha[i] * y;
    }
    if (!history.empty()) {
      const auto& [s, y] = history.back();
      q *= s.dot(y) / y.squaredNorm();
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
      const auto& [s, y] = history[i];
      q += (alpha[i] - y.dot(q) / y.dot(s)) * s;
    }
    Eigen::VectorXd d = -q;
    double dir_deriv = g.dot(d);
    if (!(dir_deriv < 0.0)) {  // not a descent direction; fall back
      d = -g;
      dir_deriv = g.dot(d);
    }

    // Armijo backtracking on the projected trial point.
    const double c1 = 1e-4;
    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    while (step >= opts.min_step) {
      x_new = project(x + step * d);
      const Eigen::VectorXd dx = x_new - x;
      if (dx.squaredNorm() == 0.0) break;  // pinned against the box
      f_new = objective(x_new, nullptr);
      // projected-step sufficient decrease: compare against g^T (x_new - x)
      const double decrease = g.dot(dx);
      if (std::isfinite(f_new) && decrease < 0.0 &&
          f_new <= f + c1 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // line search failed; best iterate stands
    (void)dir_deriv;

    f_new = objective(x_new, &g_new);
    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g_new - g;
    if (y.dot(s) > 1e-14 * y.norm() * s.norm()) {
      history.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(history.size()) > opts.memory)
        history.pop_front();
    }

    const double improvement = f - f_new;
    x = std::move(x_new);
    f = f_new;
    g = g_new;
    if (f < best.f) {
      best.f = f;
      best.x = x;
    }
    if (improvement <= opts.min_improvement * std::max(1.0, std::abs(f))) {
      best.converged = g.lpNorm<Eigen::Infinity>() <=
                       opts.gradient_tol * std::max(1.0, std::abs(f));
      break;
    }
  }
  if (!best.converged)
    best.converged = g.lpNorm<Eigen::Infinity>() <=
                     opts.gradient_tol * std::max(1.0, std::abs(f));
  return best;
}

}  // namespace eoe
