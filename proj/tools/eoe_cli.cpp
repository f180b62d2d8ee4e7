// Command-line front end: synth, map, slam, cluster, fit, eval, pipeline.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "eoe/eval.hpp"
#include "eoe/io.hpp"
#include "eoe/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalArgs {
  std::uint64_t seed = 0;
  bool seed_set = false;
  fs::path out = ".";
};

eoe::SceneSpec load_scene(const fs::path& path) {
  return eoe::read_scene_json(path);
}

int run_synth(const GlobalArgs& g, const fs::path& scene_path,
              const fs::path& out_csv) {
  eoe::SceneSpec scene = load_scene(scene_path);
  if (g.seed_set) scene.seed = g.seed;
  const auto ms = eoe::synthesize_scene(scene);
  eoe::atomic_write_file(out_csv, eoe::measurements_to_csv(ms));
  std::cout << "wrote " << ms.size() << " measurements to " << out_csv.string()
            << "\n";
  return 0;
}

int run_map(const fs::path& scene_path, const fs::path& meas_csv,
            const fs::path& out_csv) {
  const eoe::SceneSpec scene = load_scene(scene_path);
  if (!scene.rx)
    throw eoe::ConfigError("map: scene file has no receiver state");
  const auto ingest = eoe::read_measurements_csv(meas_csv, scene.noise_cov());
  std::vector<eoe::IncidencePoint> ips;
  ips.reserve(ingest.paths.size());
  for (const auto& z : ingest.paths)
    ips.push_back(eoe::estimate_ip(z, *scene.rx, scene.tx));
  eoe::atomic_write_file(out_csv, eoe::ips_to_csv(ips));
  std::cout << "wrote " << ips.size() << " incidence points to "
            << out_csv.string() << "\n";
  return 0;
}

int run_slam(const GlobalArgs& g, const fs::path& scene_path,
             const fs::path& meas_csv, const fs::path& out_json,
             const fs::path& out_csv) {
  const eoe::SceneSpec scene = load_scene(scene_path);
  const auto ingest = eoe::read_measurements_csv(meas_csv, scene.noise_cov());
  eoe::SlamConfig cfg;
  cfg.rng_seed = g.seed;
  const eoe::SlamResult result =
      eoe::snapshot_slam(ingest.paths, scene.tx, cfg);
  eoe::atomic_write_file(out_json,
                         eoe::slam_result_to_json(result).dump(2) + "\n");
  eoe::atomic_write_file(out_csv, eoe::ips_to_csv(result.incidence_points));
  std::cout << "rx estimate: (" << result.rx_estimate.position.x() << ", "
            << result.rx_estimate.position.y() << "), heading "
            << result.rx_estimate.heading << " rad, bias "
            << result.rx_estimate.clock_bias << " s; "
            << result.inlier_ids.size() << " inliers, "
            << result.outlier_ids.size() << " outliers\n";
  return 0;
}

int run_cluster(const fs::path& ips_csv, double eps, int min_pts,
                const fs::path& out_dir) {
  const auto ips = eoe::parse_ips_csv(eoe::read_file(ips_csv));
  std::vector<eoe::Vec2> points;
  points.reserve(ips.size());
  for (const auto& ip : ips) points.push_back(ip.position);
  eoe::DbscanParams params{eps, min_pts};
  const eoe::DbscanResult res = eoe::dbscan(points, params);
  eoe::atomic_write_file(out_dir / "clusters.json",
                         eoe::clusters_to_json(res, params).dump(2) + "\n");
  for (const auto& c : res.clusters) {
    const auto data = eoe::to_polar(c, points);
    eoe::atomic_write_file(
        out_dir / ("cluster_" + std::to_string(c.id) + "_training.csv"),
        eoe::training_to_csv(data));
  }
  std::cout << res.clusters.size() << " clusters, " << res.noise.size()
            << " noise points -> " << out_dir.string() << "\n";
  return 0;
}

int run_fit(const fs::path& training_csv, const fs::path& out_dir,
            double length_scale, double signal_std, double noise_std,
            int contour_grid) {
  eoe::PolarTrainingSet data =
      eoe::parse_training_csv(eoe::read_file(training_csv));
  eoe::GpInitSpec init{length_scale, signal_std, noise_std};
  double mean_r = 0.0;
  for (double r : data.radii) mean_r += r;
  mean_r /= static_cast<double>(data.size());
  const eoe::GpModel model = eoe::fit(data, init.to_hyper(mean_r));
  eoe::atomic_write_file(out_dir / "model.json",
                         eoe::model_to_json(model).dump(2) + "\n");
  const auto pred = eoe::predict(model, data.angles);
  eoe::atomic_write_file(out_dir / "prediction.csv",
                         eoe::prediction_to_csv(pred));
  std::vector<double> grid = data.angles;
  if (contour_grid > 0) {
    grid.resize(contour_grid);
    for (int i = 0; i < contour_grid; ++i)
      grid[i] = -eoe::kPi + 2.0 * eoe::kPi * i / contour_grid;
  }
  const auto contour =
      eoe::reconstruct_contour(eoe::predict(model, grid), data.origin);
  eoe::atomic_write_file(out_dir / "contour.csv",
                         eoe::contour_to_csv(contour));
  std::cout << "fit: log marginal " << model.log_marginal << ", sigma_f^2 "
            << model.hyper.signal_var << ", l^2 "
            << model.hyper.length_scale_sq << ", sigma_n^2 "
            << model.hyper.noise_var << ", mu " << model.hyper.mean_radius
            << (model.converged ? "" : " (not converged)") << "\n";
  return 0;
}

int run_eval(const GlobalArgs& g, const std::string& shape_kind,
             std::vector<int> m_grid, int iterations, double noise_std,
             const fs::path& out_dir, const fs::path& shape_json) {
  eoe::ShapeSpec spec;
  if (!shape_json.empty()) {
    spec = eoe::shape_from_json(eoe::json::parse(eoe::read_file(shape_json)));
  } else if (shape_kind == "circle") {
    spec.kind = eoe::ShapeSpec::Kind::circle;
    spec.radius = 2.0;
  } else if (shape_kind == "rectangle") {
    spec.kind = eoe::ShapeSpec::Kind::rectangle;
    spec.half_w = 2.0;
    spec.half_h = 1.0;
  } else if (shape_kind == "star") {
    spec.kind = eoe::ShapeSpec::Kind::star;
  } else {
    throw eoe::ConfigError("eval: unknown shape '" + shape_kind + "'");
  }
  if (m_grid.empty()) m_grid = {16, 32, 64, 128};
  const eoe::Shape shape(spec);
  const auto report =
      eoe::monte_carlo(shape, m_grid, iterations, g.seed, noise_std);
  eoe::atomic_write_file(out_dir / "mc_report.json",
                         eoe::report_to_json(report).dump(2) + "\n");
  eoe::atomic_write_file(out_dir / "rmse.csv", eoe::report_to_csv(report));
  for (std::size_t i = 0; i < report.m_values.size(); ++i)
    std::cout << "M=" << report.m_values[i] << ": mean RMSE "
              << report.mean_rmse[i] << " m (" << report.failures[i]
              << " failures)\n";
  return 0;
}

int run_pipeline_cmd(const GlobalArgs& g, const fs::path& config_path) {
  eoe::json j;
  try {
    j = eoe::json::parse(eoe::read_file(config_path));
  } catch (const eoe::json::exception& e) {
    throw eoe::IoError("pipeline config parse error: " + std::string(e.what()));
  }
  eoe::PipelineConfig cfg =
      eoe::pipeline_config_from_json(j, config_path.parent_path());
  if (g.seed_set) cfg.seed = g.seed;
  if (g.out != ".") cfg.out_dir = g.out;
  const eoe::PipelineResult result = eoe::run_pipeline(cfg);
  std::cout << result.cluster_count << " clusters fitted; manifest at "
            << result.manifest_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bistatic extended-object estimation: incidence points, "
               "clustering, and GP contour fitting"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--seed", g.seed, "base RNG seed")
      ->each([&g](const std::string&) { g.seed_set = true; });
  app.add_option("--out", g.out, "output directory");

  fs::path scene_path, meas_csv, ips_csv, training_csv, config_path,
      shape_json;
  fs::path out_file;
  double eps = 0.5;
  int min_pts = 4;
  double length_scale = 2.0, signal_std = 2.0, noise_std_init = 2.0;
  int contour_grid = 256;
  std::string shape_kind = "star";
  std::vector<int> m_grid;
  int iterations = 1000;
  double noise_std = 0.1;

  auto* synth = app.add_subcommand("synth", "synthesize measurements from a "
                                            "scene file");
  synth->add_option("--scene", scene_path, "scene JSON")->required();
  synth->add_option("--output", out_file, "measurement CSV")->required();

  auto* map = app.add_subcommand("map", "estimate incidence points with a "
                                        "known receiver state");
  map->add_option("--scene", scene_path, "scene JSON")->required();
  map->add_option("--measurements", meas_csv, "measurement CSV")->required();
  map->add_option("--output", out_file, "IP CSV")->required();

  auto* slam = app.add_subcommand("slam", "jointly estimate receiver state "
                                          "and incidence points");
  slam->add_option("--scene", scene_path, "scene JSON (transmitter pose)")
      ->required();
  slam->add_option("--measurements", meas_csv, "measurement CSV")->required();

  auto* cluster = app.add_subcommand("cluster", "DBSCAN incidence points "
                                                "into polar training sets");
  cluster->add_option("--ips", ips_csv, "IP CSV")->required();
  cluster->add_option("--eps", eps, "DBSCAN radius (m)");
  cluster->add_option("--min-pts", min_pts, "DBSCAN core threshold");

  auto* fit = app.add_subcommand("fit", "train the radial GP on a polar "
                                        "training set");
  fit->add_option("--training", training_csv, "training CSV")->required();
  fit->add_option("--length-scale", length_scale, "initial l");
  fit->add_option("--signal-std", signal_std, "initial sigma_f");
  fit->add_option("--noise-std", noise_std_init, "initial sigma_n");
  fit->add_option("--contour-grid", contour_grid,
                  "contour angles (0 = training angles)");

  auto* eval = app.add_subcommand("eval", "Monte Carlo RMSE study on "
                                          "synthetic shapes");
  eval->add_option("--shape", shape_kind, "circle|rectangle|star");
  eval->add_option("--shape-json", shape_json, "shape spec JSON (overrides "
                                               "--shape)");
  eval->add_option("--m", m_grid, "measurement counts");
  eval->add_option("--iterations", iterations, "Monte Carlo iterations");
  eval->add_option("--noise", noise_std, "contour noise std (m)");

  auto* pipeline = app.add_subcommand("pipeline", "run the full "
                                                  "measurements-to-contours "
                                                  "pipeline");
  pipeline->add_option("--config", config_path, "pipeline config JSON")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return run_synth(g, scene_path, out_file);
    if (map->parsed()) return run_map(scene_path, meas_csv, out_file);
    if (slam->parsed())
      return run_slam(g, scene_path, meas_csv, g.out / "slam_result.json",
                      g.out / "ips.csv");
    if (cluster->parsed()) return run_cluster(ips_csv, eps, min_pts, g.out);
    if (fit->parsed())
      return run_fit(training_csv, g.out, length_scale, signal_std,
                     noise_std_init, contour_grid);
    if (eval->parsed())
      return run_eval(g, shape_kind, m_grid, iterations, noise_std, g.out,
                      shape_json);
    if (pipeline->parsed()) return run_pipeline_cmd(g, config_path);
  } catch (const eoe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const eoe::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const eoe::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
