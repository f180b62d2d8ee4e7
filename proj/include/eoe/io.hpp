#pragma once

#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eoe/clustering.hpp"
#include "eoe/common.hpp"
#include "eoe/eval.hpp"
#include "eoe/geometry.hpp"
#include "eoe/gp.hpp"
#include "eoe/scene.hpp"
#include "eoe/slam.hpp"

namespace eoe {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// low-level helpers

/// FNV-1a 64-bit content hash, recorded in pipeline manifests to detect
/// artifact changes between runs.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string fnv1a64_hex(std::string_view data) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(data)));
  return std::string(buf);
}

/// Shortest round-trip decimal representation of a double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

/// Writes atomically: temp file in the same directory, then rename.
inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path(), ec);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline std::vector<std::string> split_csv_row(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_double(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw IoError("row " + std::to_string(line_no) +
                  ": cannot parse number '" + s + "'");
  }
}

inline long parse_int(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw IoError("row " + std::to_string(line_no) +
                  ": cannot parse integer '" + s + "'");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// measurement CSV

/// Schema: path_id,toa_s,aod_rad,aoa_rad,truth_x,truth_y,is_outlier
inline std::string measurements_to_csv(
    const std::vector<SyntheticMeasurement>& ms) {
  std::string out = "path_id,toa_s,aod_rad,aoa_rad,truth_x,truth_y,is_outlier\n";
  for (const auto& m : ms) {
    out += std::to_string(m.z.path_id) + ',' + format_double(m.z.toa) + ',' +
           format_double(m.z.aod) + ',' + format_double(m.z.aoa) + ',' +
           format_double(m.truth_ip.x()) + ',' +
           format_double(m.truth_ip.y()) + ',' + (m.is_outlier ? "1" : "0") +
           '\n';
  }
  return out;
}

struct IngestedMeasurements {
  std::vector<PathMeasurement> paths;
  std::vector<std::optional<Vec2>> truth;  // parallel to paths
  std::vector<bool> is_outlier;            // parallel; false when absent
};

/// Parses a measurement CSV. Values are SI (seconds/radians) unless the file
/// starts with `# units=deg,ns`, which converts angles by pi/180 and times
/// by 1e-9. Files without a units flag whose values look like degrees or
/// nanoseconds are rejected rather than guessed. Per-path noise sigmas are
/// taken from the optional sigma_* columns, else `default_cov`.
inline IngestedMeasurements parse_measurements_csv(
    const std::string& text, const Vec3& default_cov = default_noise_cov()) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool convert_units = false;

  // optional units flag line(s) / comments before the header
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') {
      if (line.find("units=deg,ns") != std::string::npos) convert_units = true;
      else if (line.find("units=") != std::string::npos &&
               line.find("units=rad,s") == std::string::npos)
        throw IoError("row " + std::to_string(line_no) +
                      ": unsupported units flag (expected deg,ns or rad,s)");
      continue;
    }
    break;
  }
  const auto header = detail::split_csv_row(line);
  std::map<std::string, int> col;
  for (std::size_t i = 0; i < header.size(); ++i)
    col[header[i]] = static_cast<int>(i);
  for (const char* required : {"path_id", "toa_s", "aod_rad", "aoa_rad"})
    if (!col.count(required))
      throw IoError(std::string("measurement CSV: missing column ") + required);

  const double ang_scale = convert_units ? kPi / 180.0 : 1.0;
  const double toa_scale = convert_units ? 1e-9 : 1.0;

  IngestedMeasurements out;
  const bool has_truth = col.count("truth_x") && col.count("truth_y");
  const bool has_outlier = col.count("is_outlier");
  const bool has_sigma = col.count("sigma_toa_s") && col.count("sigma_aod_rad") &&
                         col.count("sigma_aoa_rad");
  const bool has_kind = col.count("kind");

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split_csv_row(line);
    if (f.size() < header.size())
      throw IoError("row " + std::to_string(line_no) + ": expected " +
                    std::to_string(header.size()) + " fields, got " +
                    std::to_string(f.size()));
    PathMeasurement z;
    z.path_id = static_cast<int>(detail::parse_int(f[col["path_id"]], line_no));
    z.toa = detail::parse_double(f[col["toa_s"]], line_no) * toa_scale;
    z.aod =
        wrap_angle(detail::parse_double(f[col["aod_rad"]], line_no) * ang_scale);
    z.aoa =
        wrap_angle(detail::parse_double(f[col["aoa_rad"]], line_no) * ang_scale);
    if (has_sigma) {
      const double st =
          detail::parse_double(f[col["sigma_toa_s"]], line_no) * toa_scale;
      const double sd =
          detail::parse_double(f[col["sigma_aod_rad"]], line_no) * ang_scale;
      const double sa =
          detail::parse_double(f[col["sigma_aoa_rad"]], line_no) * ang_scale;
      z.noise_cov = Vec3(st * st, sd * sd, sa * sa);
    } else {
      z.noise_cov = default_cov;
    }
    if (has_kind) {
      const std::string& kind = f[col["kind"]];
      if (kind == "los") z.path_kind_hint = PathKind::los;
      else if (kind == "nlos") z.path_kind_hint = PathKind::nlos;
    }
    // unit sanity: raw radians never exceed pi, raw ToA stays sub-ms
    if (!convert_units) {
      const double raw_aod = detail::parse_double(f[col["aod_rad"]], line_no);
      const double raw_aoa = detail::parse_double(f[col["aoa_rad"]], line_no);
      const double raw_toa = detail::parse_double(f[col["toa_s"]], line_no);
      if (std::abs(raw_aod) > 2.0 * kPi || std::abs(raw_aoa) > 2.0 * kPi ||
          std::abs(raw_toa) > 1e-3)
        throw IoError("row " + std::to_string(line_no) +
                      ": values look like degrees/nanoseconds but no "
                      "'# units=deg,ns' flag is present");
    }
    z.validate();
    out.paths.push_back(z);
    if (has_truth && !f[col["truth_x"]].empty() && !f[col["truth_y"]].empty())
      out.truth.emplace_back(Vec2(detail::parse_double(f[col["truth_x"]], line_no),
                                  detail::parse_double(f[col["truth_y"]], line_no)));
    else
      out.truth.emplace_back(std::nullopt);
    out.is_outlier.push_back(
        has_outlier && detail::parse_int(f[col["is_outlier"]], line_no) != 0);
  }
  if (out.paths.empty()) throw IoError("measurement CSV: no data rows");
  return out;
}

inline IngestedMeasurements read_measurements_csv(
    const std::filesystem::path& path,
    const Vec3& default_cov = default_noise_cov()) {
  return parse_measurements_csv(read_file(path), default_cov);
}

// ---------------------------------------------------------------------------
// incidence point CSV

/// Schema: path_id,x,y,residual_cost,converged
inline std::string ips_to_csv(const std::vector<IncidencePoint>& ips) {
  std::string out = "path_id,x,y,residual_cost,converged\n";
  for (const auto& ip : ips) {
    out += std::to_string(ip.source_path_id) + ',' +
           format_double(ip.position.x()) + ',' +
           format_double(ip.position.y()) + ',' +
           format_double(ip.residual_cost) + ',' + (ip.converged ? "1" : "0") +
           '\n';
  }
  return out;
}

inline std::vector<IncidencePoint> parse_ips_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<IncidencePoint> out;
  bool header_seen = false;
  std::map<std::string, int> col;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split_csv_row(line);
    if (!header_seen) {
      for (std::size_t i = 0; i < f.size(); ++i)
        col[f[i]] = static_cast<int>(i);
      for (const char* required : {"path_id", "x", "y"})
        if (!col.count(required))
          throw IoError(std::string("IP CSV: missing column ") + required);
      header_seen = true;
      continue;
    }
    IncidencePoint ip;
    ip.source_path_id =
        static_cast<int>(detail::parse_int(f.at(col["path_id"]), line_no));
    ip.position =
        Vec2(detail::parse_double(f.at(col["x"]), line_no),
             detail::parse_double(f.at(col["y"]), line_no));
    if (col.count("residual_cost"))
      ip.residual_cost =
          detail::parse_double(f.at(col["residual_cost"]), line_no);
    if (col.count("converged"))
      ip.converged = detail::parse_int(f.at(col["converged"]), line_no) != 0;
    out.push_back(ip);
  }
  if (out.empty()) throw IoError("IP CSV: no data rows");
  return out;
}

// ---------------------------------------------------------------------------
// polar training / prediction / contour CSV

/// Schema: theta_rad,r_m
inline std::string training_to_csv(const PolarTrainingSet& data) {
  std::string out = "theta_rad,r_m\n";
  for (std::size_t i = 0; i < data.size(); ++i)
    out += format_double(data.angles[i]) + ',' + format_double(data.radii[i]) +
           '\n';
  return out;
}

inline PolarTrainingSet parse_training_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  PolarTrainingSet out;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto f = detail::split_csv_row(line);
    if (f.size() < 2)
      throw IoError("row " + std::to_string(line_no) + ": expected 2 fields");
    out.angles.push_back(detail::parse_double(f[0], line_no));
    out.radii.push_back(detail::parse_double(f[1], line_no));
  }
  out.validate();
  return out;
}

/// Schema: theta_rad,mean_m,var_m2,ci_lo,ci_hi
inline std::string prediction_to_csv(const RadialPrediction& pred) {
  std::string out = "theta_rad,mean_m,var_m2,ci_lo,ci_hi\n";
  for (std::size_t i = 0; i < pred.test_angles.size(); ++i) {
    out += format_double(pred.test_angles[i]) + ',' +
           format_double(pred.mean[i]) + ',' + format_double(pred.variance[i]) +
           ',' + format_double(pred.mean[i] - pred.ci95_half_width[i]) + ',' +
           format_double(pred.mean[i] + pred.ci95_half_width[i]) + '\n';
  }
  return out;
}

/// Schema: contour,x,y with contour in {mean, ci_lower, ci_upper}
inline std::string contour_to_csv(const ContourSet& contour) {
  std::string out = "contour,x,y\n";
  auto emit = [&out](const char* name,
                     const std::vector<Eigen::Vector2d>& pts) {
    for (const auto& p : pts)
      out += std::string(name) + ',' + format_double(p.x()) + ',' +
             format_double(p.y()) + '\n';
  };
  emit("mean", contour.mean);
  emit("ci_lower", contour.ci_lower);
  emit("ci_upper", contour.ci_upper);
  return out;
}

// ---------------------------------------------------------------------------
// JSON: shapes and scenes

inline json shape_to_json(const ShapeSpec& s) {
  json j;
  j["kind"] = to_string(s.kind);
  j["center"] = {s.center.x(), s.center.y()};
  switch (s.kind) {
    case ShapeSpec::Kind::circle:
      j["radius"] = s.radius;
      break;
    case ShapeSpec::Kind::rectangle:
      j["half_w"] = s.half_w;
      j["half_h"] = s.half_h;
      break;
    case ShapeSpec::Kind::star:
      j["base_radius"] = s.base_radius;
      j["amplitude"] = s.amplitude;
      j["lobes"] = s.lobes;
      break;
    case ShapeSpec::Kind::gp_sample:
      j["signal_var"] = s.gp_hyper.signal_var;
      j["length_scale_sq"] = s.gp_hyper.length_scale_sq;
      j["mean_radius"] = s.gp_hyper.mean_radius;
      j["seed"] = s.gp_seed;
      break;
  }
  return j;
}

inline ShapeSpec shape_from_json(const json& j) {
  ShapeSpec s;
  const std::string kind = j.at("kind").get<std::string>();
  if (j.contains("center"))
    s.center = Vec2(j["center"].at(0).get<double>(),
                    j["center"].at(1).get<double>());
  if (kind == "circle") {
    s.kind = ShapeSpec::Kind::circle;
    s.radius = j.at("radius").get<double>();
  } else if (kind == "rectangle") {
    s.kind = ShapeSpec::Kind::rectangle;
    s.half_w = j.at("half_w").get<double>();
    s.half_h = j.at("half_h").get<double>();
  } else if (kind == "star") {
    s.kind = ShapeSpec::Kind::star;
    s.base_radius = j.at("base_radius").get<double>();
    s.amplitude = j.at("amplitude").get<double>();
    s.lobes = j.at("lobes").get<int>();
  } else if (kind == "gp_sample") {
    s.kind = ShapeSpec::Kind::gp_sample;
    if (j.contains("signal_var"))
      s.gp_hyper.signal_var = j["signal_var"].get<double>();
    if (j.contains("length_scale_sq"))
      s.gp_hyper.length_scale_sq = j["length_scale_sq"].get<double>();
    if (j.contains("mean_radius"))
      s.gp_hyper.mean_radius = j["mean_radius"].get<double>();
    if (j.contains("seed")) s.gp_seed = j["seed"].get<std::uint64_t>();
  } else {
    throw ConfigError("shape: unknown kind '" + kind + "'");
  }
  s.validate();
  return s;
}

inline json scene_to_json(const SceneSpec& s) {
  json j;
  j["tx"] = {{"position", {s.tx.position.x(), s.tx.position.y()}},
             {"orientation", s.tx.orientation}};
  if (s.rx)
    j["rx"] = {{"position", {s.rx->position.x(), s.rx->position.y()}},
               {"heading", s.rx->heading},
               {"clock_bias", s.rx->clock_bias}};
  j["objects"] = json::array();
  for (const auto& o : s.objects) j["objects"].push_back(shape_to_json(o));
  j["noise_std"] = {{"toa_s", s.noise_std[kToa]},
                    {"aod_rad", s.noise_std[kAod]},
                    {"aoa_rad", s.noise_std[kAoa]}};
  j["paths_per_object"] = s.paths_per_object;
  j["outlier_count"] = s.outlier_count;
  j["outlier_delay_s"] = {s.outlier_delay_min, s.outlier_delay_max};
  j["seed"] = s.seed;
  return j;
}

inline SceneSpec scene_from_json(const json& j) {
  SceneSpec s;
  const json& tx = j.at("tx");
  s.tx.position = Vec2(tx.at("position").at(0).get<double>(),
                       tx.at("position").at(1).get<double>());
  s.tx.orientation = wrap_angle(tx.value("orientation", 0.0));
  if (j.contains("rx")) {
    RxState rx;
    rx.position = Vec2(j["rx"].at("position").at(0).get<double>(),
                       j["rx"].at("position").at(1).get<double>());
    rx.heading = wrap_angle(j["rx"].value("heading", 0.0));
    rx.clock_bias = j["rx"].value("clock_bias", 0.0);
    if (!std::isfinite(rx.clock_bias))
      throw ConfigError("scene: clock bias must be finite");
    s.rx = rx;
  }
  if (j.contains("objects"))
    for (const auto& o : j["objects"]) s.objects.push_back(shape_from_json(o));
  if (j.contains("noise_std")) {
    const json& n = j["noise_std"];
    s.noise_std = Vec3(n.value("toa_s", 1e-9),
                       n.value("aod_rad", deg_to_rad(1.0)),
                       n.value("aoa_rad", deg_to_rad(1.0)));
    if (!(s.noise_std.array() > 0.0).all())
      throw ConfigError("scene: noise stds must be > 0");
  }
  s.paths_per_object = j.value("paths_per_object", 16);
  s.outlier_count = j.value("outlier_count", 0);
  if (j.contains("outlier_delay_s")) {
    s.outlier_delay_min = j["outlier_delay_s"].at(0).get<double>();
    s.outlier_delay_max = j["outlier_delay_s"].at(1).get<double>();
  }
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

inline SceneSpec read_scene_json(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IoError("scene JSON parse error in " + path.string() + ": " +
                  e.what());
  }
  try {
    return scene_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError("scene JSON invalid in " + path.string() + ": " +
                      e.what());
  }
}

// ---------------------------------------------------------------------------
// JSON: clusters, GP models, SLAM results, reports

inline json clusters_to_json(const DbscanResult& res,
                             const DbscanParams& params) {
  json j;
  j["eps"] = params.eps;
  j["min_pts"] = params.min_pts;
  j["clusters"] = json::array();
  for (const auto& c : res.clusters) {
    json jc;
    jc["id"] = c.id;
    jc["members"] = c.indices;
    jc["centroid"] = {c.centroid.x(), c.centroid.y()};
    jc["bias"] = {c.bias.x(), c.bias.y()};
    jc["member_count"] = c.member_count;
    j["clusters"].push_back(jc);
  }
  j["noise"] = json::array();
  for (int i : res.noise) j["noise"].push_back(i);
  return j;
}

inline json model_to_json(const GpModel& model) {
  json j;
  j["hyper"] = {{"signal_var", model.hyper.signal_var},
                {"length_scale_sq", model.hyper.length_scale_sq},
                {"noise_var", model.hyper.noise_var},
                {"mean_radius", model.hyper.mean_radius}};
  j["log_marginal"] = model.log_marginal;
  j["jitter"] = model.jitter;
  j["m"] = model.size();
  j["converged"] = model.converged;
  j["fit_iterations"] = model.fit_iterations;
  j["origin"] = {model.origin.x(), model.origin.y()};
  j["cluster_id"] = model.cluster_id;
  return j;
}

inline json slam_result_to_json(const SlamResult& r) {
  json j;
  j["rx"] = {{"position", {r.rx_estimate.position.x(),
                           r.rx_estimate.position.y()}},
             {"heading", r.rx_estimate.heading},
             {"clock_bias", r.rx_estimate.clock_bias}};
  j["inlier_ids"] = json::array();
  for (int id : r.inlier_ids) j["inlier_ids"].push_back(id);
  j["outlier_ids"] = json::array();
  for (int id : r.outlier_ids) j["outlier_ids"].push_back(id);
  j["total_cost"] = r.total_cost;
  j["converged"] = r.converged;
  return j;
}

inline json report_to_json(const MonteCarloReport& r) {
  json j;
  j["shape"] = to_string(r.shape_kind);
  j["m_values"] = r.m_values;
  j["mean_rmse"] = r.mean_rmse;
  j["failures"] = r.failures;
  j["iterations"] = r.iterations;
  j["seed"] = r.seed;
  j["noise_std"] = r.noise_std;
  return j;
}

inline std::string report_to_csv(const MonteCarloReport& r) {
  std::string out = "m,mean_rmse_m\n";
  for (std::size_t i = 0; i < r.m_values.size(); ++i)
    out += std::to_string(r.m_values[i]) + ',' +
           format_double(r.mean_rmse[i]) + '\n';
  return out;
}

}  // namespace eoe
