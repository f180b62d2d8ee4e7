#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "eoe/common.hpp"
#include "eoe/gp.hpp"
#include "eoe/parallel.hpp"
#include "eoe/rng.hpp"
#include "eoe/shapes.hpp"

namespace eoe {

/// Root-mean-square error between true and predicted radial values.
inline double rmse(const std::vector<double>& truth,
                   const std::vector<double>& predicted) {
  if (truth.size() != predicted.size())
    throw ConfigError("rmse: length mismatch");
  if (truth.empty()) throw ConfigError("rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - predicted[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(truth.size()));
}

struct MonteCarloReport {
  ShapeSpec::Kind shape_kind = ShapeSpec::Kind::circle;
  std::vector<int> m_values;
  std::vector<double> mean_rmse;  // per M, failures excluded
  std::vector<int> failures;     // per M
  int iterations = 0;
  std::uint64_t seed = 0;
  double noise_std = 0.1;
};

/// Monte Carlo contour-estimation study: per (M, iteration) sample M noisy
/// contour points, fit the GP from the standard init, predict at the
/// training angles, and record the RMSE against the true radial function.
/// Iterations run in parallel on derived RNG streams and reduce in iteration
/// order, so reports are deterministic for a given base seed.
inline MonteCarloReport monte_carlo(const Shape& shape,
                                    const std::vector<int>& m_grid,
                                    int iterations, std::uint64_t base_seed,
                                    double noise_std = 0.1,
                                    const FitOptions& fit_opts = {}) {
  if (iterations < 1)
    throw ConfigError("monte_carlo: iterations must be >= 1");
  if (m_grid.empty()) throw ConfigError("monte_carlo: empty M grid");

  MonteCarloReport report;
  report.shape_kind = shape.spec().kind;
  report.m_values = m_grid;
  report.iterations = iterations;
  report.seed = base_seed;
  report.noise_std = noise_std;

  for (std::size_t mi = 0; mi < m_grid.size(); ++mi) {
    const int m = m_grid[mi];
    if (m < 2) throw ConfigError("monte_carlo: M must be >= 2");
    std::vector<double> rmse_per_iter(iterations);
    std::vector<char> failed(iterations, 0);
    const std::uint64_t m_seed = derive_seed(base_seed, mi);

    parallel_for(static_cast<std::size_t>(iterations), [&](std::size_t it) {
      auto rng = make_rng(derive_seed(m_seed, it));
      try {
        const PolarTrainingSet data = sample_contour(shape, m, noise_std, rng);
        const GpModel model = fit(data, default_init(data), fit_opts);
        const RadialPrediction pred = predict(model, data.angles);
        std::vector<double> truth(data.angles.size());
        for (std::size_t i = 0; i < data.angles.size(); ++i)
          truth[i] = shape.radial(data.angles[i]);
        rmse_per_iter[it] = rmse(truth, pred.mean);
      } catch (const NumericalError&) {
        failed[it] = 1;
      }
    });

    double sum = 0.0;
    int ok = 0, bad = 0;
    for (int it = 0; it < iterations; ++it) {
      if (failed[it]) {
        ++bad;
        continue;
      }
      sum += rmse_per_iter[it];
      ++ok;
    }
    report.mean_rmse.push_back(ok > 0 ? sum / ok : 0.0);
    report.failures.push_back(bad);
  }
  return report;
}

}  // namespace eoe
