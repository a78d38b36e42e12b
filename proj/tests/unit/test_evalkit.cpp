#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "msps/evalkit.hpp"
#include "msps/rng.hpp"

using namespace msps;

namespace {

NormalMap random_map(Rng& rng, std::size_t h, std::size_t w) {
  NormalMap m(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) m.set(y, x, Vec3(rng.normal(), rng.normal(), rng.normal()).normalized());
  return m;
}

NormalMap rotated(const NormalMap& m, const Eigen::Matrix3d& r) {
  NormalMap out = m;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) out.set(y, x, r * m.at(y, x));
  return out;
}

}  // namespace

TEST_CASE("error map examples") {
  Rng rng(1);
  const NormalMap a = random_map(rng, 6, 7);
  const ErrorMap same = angular_error_map(a, a);
  for (double d : same.degrees) CHECK(d == 0.0);
  CHECK(mean_angular_error(a, a) == 0.0);

  NormalMap flip = a;
  flip.set(2, 3, -a.at(2, 3));
  CHECK(angular_error_map(flip, a).degrees[2 * 7 + 3] == doctest::Approx(180.0));

  // Rotating every normal about an axis perpendicular to it by 10 degrees.
  NormalMap base(5, 5), turned(5, 5);
  for (std::size_t y = 0; y < 5; ++y) {
    for (std::size_t x = 0; x < 5; ++x) {
      const Vec3 n = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
      const Vec3 axis = n.cross(Vec3(rng.normal(), rng.normal(), rng.normal())).normalized();
      base.set(y, x, n);
      turned.set(y, x, Eigen::AngleAxisd(10.0 * std::numbers::pi / 180.0, axis) * n);
    }
  }
  for (double d : angular_error_map(turned, base).degrees) CHECK(std::abs(d - 10.0) <= 1e-6);
}

TEST_CASE("mean error uses the shared mask") {
  NormalMap gt = NormalMap::constant(2, 2, Vec3::UnitZ());
  NormalMap pred = gt;
  const double t = 10.0 * std::numbers::pi / 180.0;
  pred.set(0, 0, Vec3(std::sin(t), 0, std::cos(t)));
  pred.set(0, 1, Vec3(0, std::sin(t), std::cos(t)));
  CHECK(mean_angular_error(pred, gt) == doctest::Approx(5.0).epsilon(1e-12));
  pred.mask[2] = 0;
  gt.mask[3] = 0;
  CHECK(mean_angular_error(pred, gt) == doctest::Approx(10.0).epsilon(1e-12));
  const ErrorMap e = angular_error_map(pred, gt);
  CHECK(e.mask == Mask{1, 1, 0, 0});
  pred.mask = {0, 0, 0, 1};
  gt.mask = {1, 1, 1, 0};
  CHECK_THROWS_AS(mean_angular_error(pred, gt), Error);
  CHECK_THROWS_AS(mean_angular_error(NormalMap(2, 3), NormalMap(3, 2)), ShapeError);
}

TEST_CASE("mean error is symmetric, bounded and rotation invariant") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const NormalMap a = random_map(rng, 8, 8), b = random_map(rng, 8, 8);
    const double ab = mean_angular_error(a, b);
    CHECK(ab == mean_angular_error(b, a));
    for (double d : angular_error_map(a, b).degrees) {
      CHECK(d >= 0.0);
      CHECK(d <= 180.0);
    }
    const Eigen::Matrix3d r =
        Eigen::AngleAxisd(rng.uniform(0, 6.28), Vec3(rng.normal(), rng.normal(), rng.normal()).normalized()).toRotationMatrix();
    CHECK(std::abs(mean_angular_error(rotated(a, r), rotated(b, r)) - ab) <= 1e-9);
  }
}

TEST_CASE("benchmark report layout") {
  const BenchmarkReport one = benchmark_report({{"ball", {{"L2", 4.10}}}});
  CHECK(one.csv == "object,method,mae_deg\nball,L2,4.100000\naverage,L2,4.100000\n");
  CHECK(one.table.find("4.10") != std::string::npos);

  BenchmarkResults x, y;
  x["cat"]["ours"] = 6.5;
  x["cat"]["L2"] = 8.4;
  x["ball"]["L2"] = 4.1;
  x["ball"]["ours"] = 2.0;
  y["ball"]["ours"] = 2.0;
  y["ball"]["L2"] = 4.1;
  y["cat"]["L2"] = 8.4;
  y["cat"]["ours"] = 6.5;
  const auto rx = benchmark_report(x, {"L2", "ours"});
  const auto ry = benchmark_report(y, {"L2", "ours"});
  CHECK(rx.csv == ry.csv);
  CHECK(rx.table == ry.table);
  CHECK(rx.csv ==
        "object,method,mae_deg\nball,L2,4.100000\nball,ours,2.000000\ncat,L2,8.400000\ncat,ours,6.500000\n"
        "average,L2,6.250000\naverage,ours,4.250000\n");
  CHECK(parse_benchmark_csv(rx.csv) == x);
  // Default method order is lexicographic.
  CHECK(benchmark_report(x).csv == rx.csv);
  MESSAGE("\n" << rx.table);
}

TEST_CASE("benchmark report errors") {
  CHECK_THROWS(benchmark_report({}));
  BenchmarkResults r;
  r["ball"]["L2"] = 4.1;
  r["cat"]["ours"] = 6.5;
  try {
    benchmark_report(r);
    FAIL("ragged input accepted");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("ball/ours") != std::string::npos);
    CHECK(msg.find("cat/L2") != std::string::npos);
  }
  r["cat"]["L2"] = 1.0;
  r["ball"]["ours"] = 1.0;
  CHECK_THROWS(benchmark_report(r, {"L2"}));
  CHECK_THROWS(parse_benchmark_csv("a,b\n"));
}
