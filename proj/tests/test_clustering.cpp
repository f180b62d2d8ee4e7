#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "eoe/clustering.hpp"
#include "support/dbscan_reference.hpp"

using namespace eoe;

namespace {

using PointSet = std::vector<Eigen::Vector2d>;
using Partition = std::set<std::set<int>>;

Partition as_partition(const DbscanResult& res) {
  Partition p;
  for (const auto& c : res.clusters)
    p.insert(std::set<int>(c.indices.begin(), c.indices.end()));
  return p;
}

PointSet random_points(std::mt19937_64& rng, int n, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  PointSet pts;
  for (int i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng));
  return pts;
}

}  // namespace

TEST_CASE("two well-separated blobs form two clusters") {
  auto rng = std::mt19937_64(1);
  std::normal_distribution<double> gauss(0.0, 0.1);
  PointSet pts;
  for (int i = 0; i < 10; ++i)
    pts.emplace_back(gauss(rng), gauss(rng));
  for (int i = 0; i < 10; ++i)
    pts.emplace_back(8.0 + gauss(rng), gauss(rng));

  const DbscanResult res = dbscan(pts, {0.5, 4});
  REQUIRE(res.clusters.size() == 2);
  REQUIRE(res.noise.empty());
  REQUIRE(res.clusters[0].member_count == 10);
  REQUIRE(res.clusters[1].member_count == 10);
}

TEST_CASE("an isolated point is noise") {
  PointSet pts{{0.0, 0.0}};
  const DbscanResult res = dbscan(pts, {0.5, 3});
  REQUIRE(res.clusters.empty());
  REQUIRE(res.noise == std::set<int>{0});
}

TEST_CASE("partition matches the brute-force reference on random sets") {
  auto rng = std::mt19937_64(2);
  for (int trial = 0; trial < 60; ++trial) {
    const PointSet pts = random_points(rng, 50, 3.0);
    const DbscanParams params{0.7, 4};
    const DbscanResult res = dbscan(pts, params);
    const auto ref =
        eoe_test::reference_dbscan(pts, params.eps, params.min_pts);
    REQUIRE(as_partition(res) == ref.clusters);
    REQUIRE(res.noise == ref.noise);
  }
}

TEST_CASE("partition is invariant under input permutation") {
  auto rng = std::mt19937_64(3);
  for (int trial = 0; trial < 20; ++trial) {
    const PointSet pts = random_points(rng, 40, 2.5);
    std::vector<int> perm(pts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    PointSet shuffled;
    for (int i : perm) shuffled.push_back(pts[i]);

    const DbscanParams params{0.6, 3};
    const Partition a = as_partition(dbscan(pts, params));
    Partition b_mapped;
    for (const auto& cluster : as_partition(dbscan(shuffled, params))) {
      std::set<int> mapped;
      for (int i : cluster) mapped.insert(perm[i]);
      b_mapped.insert(mapped);
    }
    REQUIRE(a == b_mapped);
  }
}

TEST_CASE("centroid is the member mean and bias never moves it") {
  auto rng = std::mt19937_64(4);
  std::normal_distribution<double> gauss(0.0, 0.2);
  PointSet pts;
  for (int i = 0; i < 12; ++i)
    pts.emplace_back(1.0 + gauss(rng), -2.0 + gauss(rng));
  DbscanResult res = dbscan(pts, {1.0, 4});
  REQUIRE(res.clusters.size() == 1);
  Cluster& c = res.clusters[0];

  Eigen::Vector2d mean(0.0, 0.0);
  for (int i : c.indices) mean += pts[i];
  mean /= c.member_count;
  REQUIRE((c.centroid - mean).norm() < 1e-12);

  c.bias = Eigen::Vector2d(-1.0, 0.0);
  REQUIRE((c.centroid - mean).norm() < 1e-12);  // bias shifts origin only
}

TEST_CASE("polar conversion") {
  Cluster c;
  c.id = 0;
  c.centroid = Eigen::Vector2d(2.0, 3.0);

  SECTION("unit circle around the centroid") {
    PointSet pts;
    const int n = 8;
    for (int i = 0; i < n; ++i) {
      const double a = -kPi + 2.0 * kPi * i / n;
      pts.emplace_back(c.centroid + Eigen::Vector2d(std::cos(a), std::sin(a)));
      c.indices.push_back(i);
    }
    c.member_count = n;
    const PolarTrainingSet d = to_polar(c, pts, Eigen::Vector2d::Zero());
    for (int i = 0; i < n; ++i) {
      REQUIRE(d.radii[i] == Catch::Approx(1.0).epsilon(1e-12));
      REQUIRE(wrap_angle(d.angles[i] - (-kPi + 2.0 * kPi * i / n)) ==
              Catch::Approx(0.0).margin(1e-12));
    }
  }

  SECTION("a wall bias shifts the origin by exactly that vector") {
    PointSet pts{{3.0, 3.0}, {2.0, 4.0}, {1.2, 3.1}, {2.0, 2.0}};
    c.indices = {0, 1, 2, 3};
    c.member_count = 4;
    const Eigen::Vector2d bias(-1.0, 0.0);
    const PolarTrainingSet d = to_polar(c, pts, bias);
    REQUIRE(d.origin == c.centroid + bias);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Eigen::Vector2d rel = pts[i] - (c.centroid + bias);
      REQUIRE(d.radii[i] == Catch::Approx(rel.norm()).epsilon(1e-12));
    }
  }

  SECTION("round trip reproduces the points") {
    auto rng = std::mt19937_64(5);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    PointSet pts;
    for (int i = 0; i < 10; ++i) {
      pts.emplace_back(u(rng), u(rng));
      c.indices.push_back(i);
    }
    c.member_count = 10;
    c.centroid = Eigen::Vector2d(0.3, -0.4);
    const PolarTrainingSet d = to_polar(c, pts, Eigen::Vector2d(0.1, 0.2));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Eigen::Vector2d rebuilt =
          d.origin + d.radii[i] * Eigen::Vector2d(std::cos(d.angles[i]),
                                                  std::sin(d.angles[i]));
      REQUIRE((rebuilt - pts[i]).norm() < 1e-12);
    }
  }

  SECTION("a member on the origin is rejected") {
    PointSet pts{{2.0, 3.0}, {2.5, 3.0}};
    c.indices = {0, 1};
    c.member_count = 2;
    REQUIRE_THROWS_AS(to_polar(c, pts, Eigen::Vector2d::Zero()),
                      NumericalError);
  }
}

TEST_CASE("dbscan validates its inputs") {
  REQUIRE_THROWS_AS(dbscan({}, {0.5, 4}), ConfigError);
  PointSet pts{{0.0, 0.0}};
  REQUIRE_THROWS_AS(dbscan(pts, {-1.0, 4}), ConfigError);
  REQUIRE_THROWS_AS(dbscan(pts, {0.5, 0}), ConfigError);
}
