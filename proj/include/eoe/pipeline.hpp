#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eoe/io.hpp"
#include "eoe/mapping.hpp"

namespace eoe {

/// Hyperparameter initialization in non-squared units (l, sigma_f, sigma_n);
/// the mean radius is always initialized from the data.
struct GpInitSpec {
  double length_scale = 2.0;
  double signal_std = 2.0;
  double noise_std = 2.0;

  GpHyperParams to_hyper(double mean_radius) const {
    GpHyperParams h;
    h.length_scale_sq = length_scale * length_scale;
    h.signal_var = signal_std * signal_std;
    h.noise_var = noise_std * noise_std;
    h.mean_radius = mean_radius;
    return h;
  }
};

/// End-to-end pipeline configuration (mirrors the pipeline config JSON).
struct PipelineConfig {
  enum class Mode { mapping, slam };

  Mode mode = Mode::mapping;
  std::filesystem::path scene_path;
  std::optional<std::filesystem::path> measurements_path;  // else synthesize
  std::optional<std::filesystem::path> ips_path;  // skip estimation stages
  DbscanParams dbscan;
  std::map<int, Vec2> cluster_bias;  // keyed by cluster id
  GpInitSpec gp_init;
  SlamConfig slam;
  MappingConfig mapping;
  int contour_grid = 256;  // dense contour angles; 0 = training angles
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;

  void validate() const {
    if (scene_path.empty())
      throw ConfigError("pipeline: scene file path is required");
    dbscan.validate();
    if (contour_grid < 0)
      throw ConfigError("pipeline: contour_grid must be >= 0");
  }
};

inline PipelineConfig pipeline_config_from_json(
    const json& j, const std::filesystem::path& base_dir = {}) {
  PipelineConfig cfg;
  const std::string mode = j.value("mode", "mapping");
  if (mode == "mapping") cfg.mode = PipelineConfig::Mode::mapping;
  else if (mode == "slam") cfg.mode = PipelineConfig::Mode::slam;
  else throw ConfigError("pipeline: unknown mode '" + mode + "'");

  auto resolve = [&base_dir](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  if (!j.contains("scene")) throw ConfigError("pipeline: 'scene' is required");
  cfg.scene_path = resolve(j["scene"].get<std::string>());
  if (j.contains("measurements"))
    cfg.measurements_path = resolve(j["measurements"].get<std::string>());
  if (j.contains("ips")) cfg.ips_path = resolve(j["ips"].get<std::string>());
  if (j.contains("dbscan")) {
    cfg.dbscan.eps = j["dbscan"].value("eps", 0.5);
    cfg.dbscan.min_pts = j["dbscan"].value("min_pts", 4);
  }
  if (j.contains("cluster_bias"))
    for (const auto& [key, value] : j["cluster_bias"].items())
      cfg.cluster_bias[std::stoi(key)] =
          Vec2(value.at(0).get<double>(), value.at(1).get<double>());
  if (j.contains("gp_init")) {
    cfg.gp_init.length_scale = j["gp_init"].value("length_scale", 2.0);
    cfg.gp_init.signal_std = j["gp_init"].value("signal_std", 2.0);
    cfg.gp_init.noise_std = j["gp_init"].value("noise_std", 2.0);
  }
  if (j.contains("slam")) {
    const json& s = j["slam"];
    cfg.slam.minimal_subset_size =
        s.value("minimal_subset_size", cfg.slam.minimal_subset_size);
    cfg.slam.ransac_iterations =
        s.value("ransac_iterations", cfg.slam.ransac_iterations);
    cfg.slam.inlier_gate = s.value("inlier_gate", cfg.slam.inlier_gate);
    cfg.slam.refine_max_iters =
        s.value("refine_max_iters", cfg.slam.refine_max_iters);
    cfg.slam.search_half_width =
        s.value("search_half_width", cfg.slam.search_half_width);
    if (s.contains("search_center"))
      cfg.slam.search_center = Vec2(s["search_center"].at(0).get<double>(),
                                    s["search_center"].at(1).get<double>());
  }
  cfg.contour_grid = j.value("contour_grid", 256);
  if (j.contains("out_dir")) cfg.out_dir = resolve(j["out_dir"].get<std::string>());
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.validate();
  return cfg;
}

struct PipelineResult {
  std::filesystem::path manifest_path;
  json manifest;
  int cluster_count = 0;
};

/// Runs measurements -> incidence points -> clusters -> polar sets -> GP
/// fits -> contours, writing every intermediate as an explicit file plus a
/// manifest with content hashes. Deterministic for a fixed config and seed;
/// on a stage failure the partial manifest records the failing stage before
/// the error propagates.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  json manifest;
  manifest["seed"] = cfg.seed;
  manifest["mode"] =
      cfg.mode == PipelineConfig::Mode::mapping ? "mapping" : "slam";
  manifest["artifacts"] = json::array();
  manifest["stages"] = json::array();

  auto add_artifact = [&](const std::string& name, const std::string& content,
                          const std::filesystem::path& rel) {
    const std::filesystem::path path = cfg.out_dir / rel;
    atomic_write_file(path, content);
    manifest["artifacts"].push_back(
        {{"name", name}, {"path", rel.string()}, {"hash", fnv1a64_hex(content)}});
  };
  auto write_manifest = [&](const std::optional<std::string>& failed_stage) {
    if (failed_stage) manifest["failed_stage"] = *failed_stage;
    atomic_write_file(cfg.out_dir / "manifest.json", manifest.dump(2) + "\n");
  };

  std::string stage = "config";
  try {
    const SceneSpec scene = read_scene_json(cfg.scene_path);
    if (cfg.mode == PipelineConfig::Mode::mapping && !scene.rx)
      throw ConfigError(
          "mapping mode requires a receiver state in the scene file");

    // --- measurements ---
    stage = "measurements";
    manifest["stages"].push_back(stage);
    std::vector<PathMeasurement> paths;
    std::vector<IncidencePoint> ips;
    if (cfg.ips_path) {
      ips = parse_ips_csv(read_file(*cfg.ips_path));
    } else if (cfg.measurements_path) {
      paths = read_measurements_csv(*cfg.measurements_path,
                                    scene.noise_cov()).paths;
    } else {
      SceneSpec synth_scene = scene;
      synth_scene.seed = derive_seed(cfg.seed, 1);
      const auto synthetic = synthesize_scene(synth_scene);
      add_artifact("measurements", measurements_to_csv(synthetic),
                   "measurements.csv");
      paths.reserve(synthetic.size());
      for (const auto& m : synthetic) paths.push_back(m.z);
    }

    // --- incidence points ---
    if (ips.empty()) {
      stage = "estimate";
      manifest["stages"].push_back(stage);
      if (cfg.mode == PipelineConfig::Mode::mapping) {
        for (const auto& z : paths)
          ips.push_back(estimate_ip(z, *scene.rx, scene.tx, cfg.mapping));
      } else {
        SlamConfig slam_cfg = cfg.slam;
        slam_cfg.rng_seed = derive_seed(cfg.seed, 2);
        const SlamResult result = snapshot_slam(paths, scene.tx, slam_cfg);
        add_artifact("slam_result", slam_result_to_json(result).dump(2) + "\n",
                     "slam_result.json");
        ips = result.incidence_points;
      }
      add_artifact("incidence_points", ips_to_csv(ips), "ips.csv");
    }

    // --- clustering ---
    stage = "cluster";
    manifest["stages"].push_back(stage);
    std::vector<Vec2> points;
    points.reserve(ips.size());
    for (const auto& ip : ips) points.push_back(ip.position);
    DbscanResult clusters = dbscan(points, cfg.dbscan);
    for (auto& c : clusters.clusters) {
      const auto it = cfg.cluster_bias.find(c.id);
      if (it != cfg.cluster_bias.end()) c.bias = it->second;
    }
    add_artifact("clusters", clusters_to_json(clusters, cfg.dbscan).dump(2) + "\n",
                 "clusters.json");

    // --- polar conversion + GP fits ---
    for (const auto& cluster : clusters.clusters) {
      stage = "polar:cluster" + std::to_string(cluster.id);
      const PolarTrainingSet data = to_polar(cluster, points);
      const std::string tag = "cluster_" + std::to_string(cluster.id);
      add_artifact(tag + "_training", training_to_csv(data),
                   tag + "_training.csv");

      stage = "fit:cluster" + std::to_string(cluster.id);
      double mean_r = 0.0;
      for (double r : data.radii) mean_r += r;
      mean_r /= static_cast<double>(data.size());
      const GpModel model = fit(data, cfg.gp_init.to_hyper(mean_r));
      add_artifact(tag + "_model", model_to_json(model).dump(2) + "\n",
                   tag + "_model.json");

      const RadialPrediction pred = predict(model, data.angles);
      add_artifact(tag + "_prediction", prediction_to_csv(pred),
                   tag + "_prediction.csv");

      std::vector<double> contour_angles = data.angles;
      if (cfg.contour_grid > 0) {
        contour_angles.resize(cfg.contour_grid);
        for (int i = 0; i < cfg.contour_grid; ++i)
          contour_angles[i] = -kPi + 2.0 * kPi * i / cfg.contour_grid;
      }
      const ContourSet contour =
          reconstruct_contour(predict(model, contour_angles), data.origin);
      add_artifact(tag + "_contour", contour_to_csv(contour),
                   tag + "_contour.csv");
    }
    manifest["stages"].push_back("fit");

    stage = "manifest";
    write_manifest(std::nullopt);
    PipelineResult result;
    result.manifest_path = cfg.out_dir / "manifest.json";
    result.manifest = manifest;
    result.cluster_count = static_cast<int>(clusters.clusters.size());
    return result;
  } catch (const ConfigError& e) {
    write_manifest(stage);
    throw ConfigError("stage " + stage + ": " + e.what());
  } catch (const IoError& e) {
    write_manifest(stage);
    throw IoError("stage " + stage + ": " + e.what());
  } catch (const NumericalError& e) {
    write_manifest(stage);
    throw NumericalError("stage " + stage + ": " + e.what());
  }
}

}  // namespace eoe
