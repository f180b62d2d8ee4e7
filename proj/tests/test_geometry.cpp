#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "eoe/geometry.hpp"
#include "eoe/mapping.hpp"
#include "eoe/scene.hpp"

using namespace eoe;

namespace {

// Independent re-derivation of the forward model, component by component,
// using a different wrap implementation than the library.
double oracle_wrap(double a) {
  while (a >= kPi) a -= 2.0 * kPi;
  while (a < -kPi) a += 2.0 * kPi;
  return a;
}

Vec3 oracle_forward(const TxState& tx, const RxState& rx, const Vec2& ip) {
  const double d_tx =
      std::hypot(ip.x() - tx.position.x(), ip.y() - tx.position.y());
  const double d_rx =
      std::hypot(ip.x() - rx.position.x(), ip.y() - rx.position.y());
  Vec3 g;
  g[0] = d_tx / 299792458.0 + d_rx / 299792458.0 + rx.clock_bias;
  g[1] = oracle_wrap(std::atan2(ip.y() - tx.position.y(),
                                ip.x() - tx.position.x()) - tx.orientation);
  g[2] = oracle_wrap(std::atan2(ip.y() - rx.position.y(),
                                ip.x() - rx.position.x()) - rx.heading);
  return g;
}

struct RandomScene {
  TxState tx;
  RxState rx;
  Vec2 ip;
};

RandomScene random_scene(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-10.0, 10.0);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  std::uniform_real_distribution<double> bias(-1e-7, 1e-7);
  RandomScene s;
  s.tx.position = Vec2(pos(rng), pos(rng));
  s.tx.orientation = ang(rng);
  do {
    s.rx.position = Vec2(pos(rng), pos(rng));
  } while ((s.rx.position - s.tx.position).norm() < 1.0);
  s.rx.heading = ang(rng);
  s.rx.clock_bias = bias(rng);
  do {
    s.ip = Vec2(pos(rng), pos(rng));
  } while ((s.ip - s.tx.position).norm() < 1.0 ||
           (s.ip - s.rx.position).norm() < 1.0);
  return s;
}

}  // namespace

TEST_CASE("forward model on the symmetric isoceles scene") {
  TxState tx;
  RxState rx;
  rx.position = Vec2(10.0, 0.0);
  rx.heading = kPi;
  const Vec2 ip(5.0, 5.0);

  const Vec3 g = forward_model(tx, rx, ip);
  REQUIRE(g[kToa] == Catch::Approx(2.0 * std::sqrt(50.0) / kSpeedOfLight)
                         .epsilon(1e-14));
  REQUIRE(g[kAod] == Catch::Approx(kPi / 4.0).margin(1e-14));
  // atan2(5, -5) - pi = 3pi/4 - pi = -pi/4
  REQUIRE(g[kAoa] == Catch::Approx(-kPi / 4.0).margin(1e-14));
}

TEST_CASE("clock bias is exactly additive in the ToA") {
  TxState tx;
  RxState rx;
  rx.position = Vec2(10.0, 0.0);
  rx.heading = kPi;
  const Vec2 ip(5.0, 5.0);

  const Vec3 g0 = forward_model(tx, rx, ip);
  rx.clock_bias = 1e-7;
  const Vec3 g1 = forward_model(tx, rx, ip);
  REQUIRE(g1[kToa] - g0[kToa] == 1e-7);
  REQUIRE(g1[kAod] == g0[kAod]);
  REQUIRE(g1[kAoa] == g0[kAoa]);
}

TEST_CASE("forward model matches an independent scalar re-derivation") {
  auto rng = std::mt19937_64(42);
  for (int trial = 0; trial < 200; ++trial) {
    const RandomScene s = random_scene(rng);
    const Vec3 g = forward_model(s.tx, s.rx, s.ip);
    const Vec3 o = oracle_forward(s.tx, s.rx, s.ip);
    REQUIRE(g[kToa] == Catch::Approx(o[kToa]).epsilon(1e-13));
    REQUIRE(g[kAod] == Catch::Approx(o[kAod]).margin(1e-12));
    REQUIRE(g[kAoa] == Catch::Approx(o[kAoa]).margin(1e-12));
  }
}

TEST_CASE("angular outputs stay in [-pi, pi) and are 2pi-periodic in the "
          "orientations") {
  auto rng = std::mt19937_64(7);
  for (int trial = 0; trial < 200; ++trial) {
    RandomScene s = random_scene(rng);
    const Vec3 g = forward_model(s.tx, s.rx, s.ip);
    REQUIRE(g[kAod] >= -kPi);
    REQUIRE(g[kAod] < kPi);
    REQUIRE(g[kAoa] >= -kPi);
    REQUIRE(g[kAoa] < kPi);

    TxState tx2 = s.tx;
    tx2.orientation += 2.0 * kPi;
    RxState rx2 = s.rx;
    rx2.heading += 2.0 * kPi;
    const Vec3 g2 = forward_model(tx2, rx2, s.ip);
    REQUIRE(g2[kAod] == Catch::Approx(g[kAod]).margin(1e-12));
    REQUIRE(g2[kAoa] == Catch::Approx(g[kAoa]).margin(1e-12));
  }
}

TEST_CASE("translation equivariance and scene rotation invariance") {
  auto rng = std::mt19937_64(11);
  std::uniform_real_distribution<double> shift(-5.0, 5.0);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  for (int trial = 0; trial < 100; ++trial) {
    const RandomScene s = random_scene(rng);
    const Vec3 g = forward_model(s.tx, s.rx, s.ip);

    const Vec2 t(shift(rng), shift(rng));
    TxState tx2 = s.tx;
    RxState rx2 = s.rx;
    tx2.position += t;
    rx2.position += t;
    const Vec3 gt = forward_model(tx2, rx2, s.ip + t);
    REQUIRE(gt[kToa] == Catch::Approx(g[kToa]).epsilon(1e-12));
    REQUIRE(gt[kAod] == Catch::Approx(g[kAod]).margin(1e-10));
    REQUIRE(gt[kAoa] == Catch::Approx(g[kAoa]).margin(1e-10));

    const double gamma = ang(rng);
    const Eigen::Rotation2D<double> rot(gamma);
    TxState tx3 = s.tx;
    RxState rx3 = s.rx;
    tx3.position = rot * s.tx.position;
    tx3.orientation = s.tx.orientation + gamma;
    rx3.position = rot * s.rx.position;
    rx3.heading = s.rx.heading + gamma;
    const Vec3 gr = forward_model(tx3, rx3, rot * s.ip);
    REQUIRE(gr[kToa] == Catch::Approx(g[kToa]).epsilon(1e-12));
    REQUIRE(gr[kAod] == Catch::Approx(g[kAod]).margin(1e-9));
    REQUIRE(gr[kAoa] == Catch::Approx(g[kAoa]).margin(1e-9));
  }
}

TEST_CASE("degenerate geometry is rejected") {
  TxState tx;
  RxState rx;
  rx.position = Vec2(10.0, 0.0);
  REQUIRE_THROWS_AS(forward_model(tx, rx, tx.position), NumericalError);
  REQUIRE_THROWS_AS(forward_model(tx, rx, rx.position + Vec2(1e-10, 0.0)),
                    NumericalError);
}

TEST_CASE("synthesize_path approaches the forward model in the zero-noise "
          "limit") {
  TxState tx;
  RxState rx;
  rx.position = Vec2(10.0, 0.0);
  rx.heading = kPi;
  const Vec2 ip(5.0, 5.0);
  const Vec3 tiny = Vec3::Constant(1e-30);
  const PathMeasurement z = synthesize_path(tx, rx, ip, tiny, 123u);
  const Vec3 g = forward_model(tx, rx, ip);
  REQUIRE(z.toa == Catch::Approx(g[kToa]).margin(1e-12));
  REQUIRE(z.aod == Catch::Approx(g[kAod]).margin(1e-12));
  REQUIRE(z.aoa == Catch::Approx(g[kAoa]).margin(1e-12));
}

TEST_CASE("synthesize_path noise matches the default covariance") {
  TxState tx;
  RxState rx;
  rx.position = Vec2(10.0, 0.0);
  rx.heading = kPi;
  const Vec2 ip(5.0, 5.0);
  const Vec3 cov = default_noise_cov();
  const Vec3 g = forward_model(tx, rx, ip);

  const int n = 10000;
  Vec3 sum = Vec3::Zero(), sum_sq = Vec3::Zero();
  auto rng = make_rng(99);
  for (int i = 0; i < n; ++i) {
    const PathMeasurement z = synthesize_path(tx, rx, ip, cov, rng);
    const Vec3 d(z.toa - g[kToa], wrap_angle(z.aod - g[kAod]),
                 wrap_angle(z.aoa - g[kAoa]));
    sum += d;
    sum_sq += d.cwiseProduct(d);
  }
  for (int k = 0; k < 3; ++k) {
    const double mean = sum[k] / n;
    const double std = std::sqrt(sum_sq[k] / n - mean * mean);
    REQUIRE(std == Catch::Approx(std::sqrt(cov[k])).epsilon(0.05));
  }
}

TEST_CASE("synthesize_path is bit-deterministic for a fixed seed") {
  TxState tx;
  RxState rx;
  rx.position = Vec2(10.0, 0.0);
  const Vec2 ip(5.0, 5.0);
  const PathMeasurement a =
      synthesize_path(tx, rx, ip, default_noise_cov(), 2024u);
  const PathMeasurement b =
      synthesize_path(tx, rx, ip, default_noise_cov(), 2024u);
  REQUIRE(a.toa == b.toa);
  REQUIRE(a.aod == b.aod);
  REQUIRE(a.aoa == b.aoa);
}

TEST_CASE("synthesize_scene tags ground truth and counts outliers") {
  TxState tx;
  RxState rx;
  rx.position = Vec2(12.0, 0.0);
  rx.heading = kPi;
  ShapeSpec circle;
  circle.kind = ShapeSpec::Kind::circle;
  circle.radius = 1.0;
  circle.center = Vec2(6.0, 5.0);

  SECTION("noise-free forward model matches the tagged incidence points") {
    const auto ms = synthesize_scene(tx, rx, {circle}, 8, 0,
                                     Vec3::Constant(1e-30), 5u);
    REQUIRE(ms.size() == 8);
    for (const auto& m : ms) {
      REQUIRE_FALSE(m.is_outlier);
      const Vec3 g = forward_model(tx, rx, m.truth_ip);
      REQUIRE(m.z.toa == Catch::Approx(g[kToa]).margin(1e-12));
      REQUIRE(m.z.aod == Catch::Approx(g[kAod]).margin(1e-12));
      REQUIRE(m.z.aoa == Catch::Approx(g[kAoa]).margin(1e-12));
    }
  }

  SECTION("outlier bookkeeping") {
    const auto ms = synthesize_scene(tx, rx, {circle}, 8, 3,
                                     default_noise_cov(), 5u);
    REQUIRE(ms.size() == 11);
    int outliers = 0;
    for (const auto& m : ms) outliers += m.is_outlier ? 1 : 0;
    REQUIRE(outliers == 3);
  }

  SECTION("noiseless round trip through estimate_ip") {
    const auto ms = synthesize_scene(tx, rx, {circle}, 8, 0,
                                     Vec3::Constant(1e-30), 6u);
    for (const auto& m : ms) {
      PathMeasurement z = m.z;
      z.noise_cov = default_noise_cov();  // whitening metadata only
      const IncidencePoint ip = estimate_ip(z, rx, tx);
      REQUIRE((ip.position - m.truth_ip).norm() < 1e-6);
    }
  }

  SECTION("empty object list is an error") {
    REQUIRE_THROWS_AS(synthesize_scene(tx, rx, {}, 8, 0, default_noise_cov(),
                                       1u),
                      ConfigError);
  }
}
