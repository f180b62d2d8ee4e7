#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "eoe/common.hpp"
#include "eoe/polar.hpp"

namespace eoe {

struct DbscanParams {
  double eps = 0.5;  // m
  int min_pts = 4;

  void validate() const {
    if (!(eps > 0.0)) throw ConfigError("DbscanParams: eps must be > 0");
    if (min_pts < 1) throw ConfigError("DbscanParams: min_pts must be >= 1");
  }
};

/// One DBSCAN cluster of incidence points. The centroid is the arithmetic
/// mean of the members; `bias` shifts only the polar origin downstream and
/// never the stored centroid.
struct Cluster {
  int id = 0;
  std::vector<int> indices;  // ascending
  Eigen::Vector2d centroid{0.0, 0.0};
  Eigen::Vector2d bias{0.0, 0.0};
  int member_count = 0;
};

struct DbscanResult {
  std::vector<Cluster> clusters;
  std::set<int> noise;
};

/// DBSCAN with Euclidean metric. Core points are points with at least
/// min_pts neighbors within eps (the point itself counts); clusters are the
/// connected components of core points; non-core points within eps of a core
/// join the cluster of their nearest core (ties broken by lexicographic
/// position), making the partition independent of input order. Clusters are
/// ordered by their first core-point index.
inline DbscanResult dbscan(const std::vector<Eigen::Vector2d>& points,
                           const DbscanParams& params) {
  params.validate();
  if (points.empty()) throw ConfigError("dbscan: empty point set");
  const int n = static_cast<int>(points.size());
  const double eps_sq = params.eps * params.eps;

  std::vector<std::vector<int>> neighbors(n);
  for (int i = 0; i < n; ++i) {
    neighbors[i].push_back(i);
    for (int j = 0; j < i; ++j) {
      if ((points[i] - points[j]).squaredNorm() <= eps_sq) {
        neighbors[i].push_back(j);
        neighbors[j].push_back(i);
      }
    }
  }
  std::vector<char> core(n, 0);
  for (int i = 0; i < n; ++i)
    core[i] = static_cast<int>(neighbors[i].size()) >= params.min_pts;

  // union-find over core-core edges
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (int i = 0; i < n; ++i) {
    if (!core[i]) continue;
    for (int j : neighbors[i])
      if (core[j]) parent[find(i)] = find(j);
  }

  // component label = smallest core index in it, for deterministic ordering
  std::vector<int> first_core(n, -1);
  for (int i = 0; i < n; ++i) {
    if (!core[i]) continue;
    const int root = find(i);
    if (first_core[root] < 0) first_core[root] = i;
  }

  auto lex_less = [&](int a, int b) {
    if (points[a].x() != points[b].x()) return points[a].x() < points[b].x();
    return points[a].y() < points[b].y();
  };

  std::vector<int> assignment(n, -1);  // first-core index of the cluster
  DbscanResult out;
  for (int i = 0; i < n; ++i) {
    if (core[i]) {
      assignment[i] = first_core[find(i)];
      continue;
    }
    // border point: nearest core neighbor decides
    int chosen = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j : neighbors[i]) {
      if (!core[j]) continue;
      const double d = (points[i] - points[j]).squaredNorm();
      if (d < best_d || (d == best_d && chosen >= 0 && lex_less(j, chosen))) {
        best_d = d;
        chosen = j;
      }
    }
    if (chosen >= 0)
      assignment[i] = first_core[find(chosen)];
    else
      out.noise.insert(i);
  }

  std::vector<int> labels;  // distinct first-core indices, ascending
  for (int i = 0; i < n; ++i)
    if (core[i] && first_core[find(i)] == i) labels.push_back(i);
  std::sort(labels.begin(), labels.end());

  for (std::size_t c = 0; c < labels.size(); ++c) {
    Cluster cluster;
    cluster.id = static_cast<int>(c);
    Eigen::Vector2d sum(0.0, 0.0);
    for (int i = 0; i < n; ++i) {
      if (assignment[i] != labels[c]) continue;
      cluster.indices.push_back(i);
      sum += points[i];
    }
    cluster.member_count = static_cast<int>(cluster.indices.size());
    cluster.centroid = sum / cluster.member_count;
    out.clusters.push_back(std::move(cluster));
  }
  return out;
}

/// Converts a cluster to polar training data about origin = centroid + bias.
inline PolarTrainingSet to_polar(const Cluster& cluster,
                                 const std::vector<Eigen::Vector2d>& points,
                                 const Eigen::Vector2d& bias) {
  const Eigen::Vector2d origin = cluster.centroid + bias;
  PolarTrainingSet out;
  out.origin = origin;
  out.cluster_id = cluster.id;
  out.angles.reserve(cluster.indices.size());
  out.radii.reserve(cluster.indices.size());
  for (int i : cluster.indices) {
    const Eigen::Vector2d d = points.at(i) - origin;
    const double r = d.norm();
    if (r < 1e-9)
      throw NumericalError("to_polar: cluster member coincides with the "
                           "polar origin");
    out.angles.push_back(std::atan2(d.y(), d.x()));
    out.radii.push_back(r);
  }
  return out;
}

inline PolarTrainingSet to_polar(const Cluster& cluster,
                                 const std::vector<Eigen::Vector2d>& points) {
  return to_polar(cluster, points, cluster.bias);
}

}  // namespace eoe
