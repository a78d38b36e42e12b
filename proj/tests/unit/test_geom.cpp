#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "msps/geom.hpp"
#include "msps/rng.hpp"

using namespace msps;

namespace {

BlobField single_blob(double sigma, double iso) {
  BlobField f;
  f.centers = {Vec3::Zero()};
  f.amplitudes = {1.0};
  f.sigmas = {sigma};
  f.iso = iso;
  return f;
}

double degrees_between(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST_CASE("single blob iso-surface is the analytic sphere") {
  const double sigma = 0.3;
  const double radius = sigma * std::sqrt(2.0 * std::log(2.0));
  CHECK(radius == doctest::Approx(0.3536).epsilon(1e-3));
  const BlobField f = single_blob(sigma, 0.5);
  const int grid = 64;
  const double cell = 2.0 / grid;
  TriMesh m = marching_cubes(f, grid);
  REQUIRE(!m.empty());
  m.validate();
  double worst = 0.0, worst_normal = 0.0, mean_normal = 0.0;
  for (std::size_t v = 0; v < m.vertices.size(); ++v) {
    worst = std::max(worst, std::abs(m.vertices[v].norm() - radius));
    const double e = degrees_between(m.normals[v], m.vertices[v]);
    worst_normal = std::max(worst_normal, e);
    mean_normal += e;
  }
  mean_normal /= static_cast<double>(m.vertices.size());
  CHECK(worst <= 1.5 * cell);
  CHECK(worst_normal <= 2.0);
  CHECK(mean_normal < 0.5);
}

TEST_CASE("field above iso everywhere gives an empty mesh") {
  const BlobField f = single_blob(50.0, 0.5);
  CHECK(marching_cubes(f, 16).empty());
  const BlobField g = single_blob(0.3, 5.0);
  CHECK(marching_cubes(g, 16).empty());
  CHECK_THROWS(marching_cubes(f, 7));
}

TEST_CASE("cube configuration table") {
  CHECK(cube_triangles(0).empty());
  CHECK(cube_triangles(255).empty());
  const auto& one = cube_triangles(1);
  REQUIRE(one.size() == 3);
  CHECK(std::multiset<int>(one.begin(), one.end()) == std::multiset<int>{0, 3, 8});
  for (int c = 1; c < 255; ++c) {
    const auto& t = cube_triangles(static_cast<std::uint8_t>(c));
    CHECK(!t.empty());
    CHECK(t.size() % 3 == 0);
    // Every directed edge inside one cube's surface patch is unique.
    std::set<std::pair<int, int>> directed;
    for (std::size_t i = 0; i < t.size(); i += 3)
      for (int e = 0; e < 3; ++e) {
        CHECK(directed.insert({t[i + static_cast<std::size_t>(e)], t[i + static_cast<std::size_t>((e + 1) % 3)]}).second);
      }
  }
}

TEST_CASE("marching cubes meshes are closed and consistently oriented") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const BlobField f = sample_blob_field(seed);
    TriMesh m = marching_cubes(f, 40);
    REQUIRE(!m.empty());
    m.validate();
    for (const auto& [edge, uses] : edge_use_counts(m)) CHECK(uses == 2);
    std::set<std::pair<std::uint32_t, std::uint32_t>> directed;
    std::size_t agree = 0;
    for (const auto& face : m.faces) {
      for (int e = 0; e < 3; ++e) {
        CHECK(directed.insert({face[static_cast<std::size_t>(e)], face[static_cast<std::size_t>((e + 1) % 3)]}).second);
      }
      const Vec3 n = (m.vertices[face[1]] - m.vertices[face[0]]).cross(m.vertices[face[2]] - m.vertices[face[0]]);
      agree += n.dot(m.normals[face[0]] + m.normals[face[1]] + m.normals[face[2]]) > 0.0;
    }
    // Winding follows the outward (decreasing-field) direction.
    CHECK(static_cast<double>(agree) >= 0.99 * static_cast<double>(m.faces.size()));
  }
}

TEST_CASE("marching cubes is deterministic") {
  const BlobField f = sample_blob_field(42);
  const TriMesh a = marching_cubes(f, 32), b = marching_cubes(f, 32);
  REQUIRE(a.vertices.size() == b.vertices.size());
  CHECK(a.faces == b.faces);
  for (std::size_t i = 0; i < a.vertices.size(); ++i) CHECK(a.vertices[i] == b.vertices[i]);
}

TEST_CASE("analytic field gradient matches finite differences") {
  const BlobField f = sample_blob_field(9);
  Rng rng(4);
  const double h = 1e-6;
  for (int t = 0; t < 50; ++t) {
    const Vec3 x(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8));
    const Vec3 g = f.gradient(x);
    for (int a = 0; a < 3; ++a) {
      Vec3 up = x, dn = x;
      up[a] += h;
      dn[a] -= h;
      const double numeric = (f.value(up) - f.value(dn)) / (2 * h);
      CHECK(std::abs(g[a] - numeric) / std::max({std::abs(g[a]), std::abs(numeric), 1e-3}) <= 1e-6);
    }
  }
}

TEST_CASE("sample_blob_field") {
  const BlobField a = sample_blob_field(7), b = sample_blob_field(7);
  CHECK(a.centers == b.centers);
  CHECK(a.sigmas == b.sigmas);
  CHECK(a.amplitudes == b.amplitudes);
  CHECK(a.centers.size() >= 3);
  CHECK(a.centers.size() <= 12);

  BlobPolicy hopeless;
  hopeless.min_blobs = hopeless.max_blobs = 2;
  hopeless.min_amplitude = 0.1;
  hopeless.max_amplitude = 0.2;
  hopeless.iso = 0.8;
  hopeless.max_attempts = 5;
  int attempts = 0;
  CHECK_THROWS(sample_blob_field(1, hopeless, &attempts));
  CHECK(attempts == 5);

  // Centres near the box faces force some draws to be rejected.
  BlobPolicy edgy;
  edgy.center_extent = 0.95;
  edgy.max_attempts = 1000;
  int most = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    sample_blob_field(s, edgy, &attempts);
    most = std::max(most, attempts);
  }
  CHECK(most > 1);

  BlobPolicy empty_range;
  empty_range.min_blobs = 4;
  empty_range.max_blobs = 3;
  CHECK_THROWS(sample_blob_field(1, empty_range));
}

TEST_CASE("load_obj: planar quad gets +z normals") {
  std::istringstream in("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n\nf 1 2 3\nf 1 3 4\n");
  const TriMesh m = load_obj(in);
  REQUIRE(m.faces.size() == 2);
  for (const auto& n : m.normals) CHECK((n - Vec3::UnitZ()).norm() < 1e-15);
  m.validate();
}

TEST_CASE("load_obj: polygons are fanned") {
  std::istringstream in("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  const TriMesh m = load_obj(in);
  REQUIRE(m.faces.size() == 2);
  CHECK(m.faces[0] == std::array<std::uint32_t, 3>{0, 1, 2});
  CHECK(m.faces[1] == std::array<std::uint32_t, 3>{0, 2, 3});
}

TEST_CASE("load_obj: negative indices are relative") {
  std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n");
  const TriMesh m = load_obj(in);
  REQUIRE(m.faces.size() == 1);
  CHECK(m.faces[0] == std::array<std::uint32_t, 3>{0, 1, 2});
}

TEST_CASE("load_obj: slash forms and explicit normals") {
  std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 2\nf 1/1/1 2/1/1 3/1/1\nf 1//1 2//1 3//1\nf 1/1 2/1 3/1\n");
  const TriMesh m = load_obj(in);
  CHECK(m.faces.size() == 3);
  CHECK(m.faces[0] == m.faces[1]);
  for (auto v : m.faces[0]) CHECK(m.normals[v] == Vec3::UnitZ());
  CHECK(m.faces[2] == std::array<std::uint32_t, 3>{0, 1, 2});
}

TEST_CASE("load_obj: errors carry the line number") {
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      load_obj(in);
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("v 0 0 0\nv 1 0\nf 1 2 3\n").find("line 2") != std::string::npos);
  CHECK(message("v 0 0 0\nv 1 0 0\nl 1 2\n").find("line 3") != std::string::npos);
  CHECK(message("v 0 0 0\np 1\n").find("line 2") != std::string::npos);
  CHECK(message("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n").find("line 4") != std::string::npos);
  CHECK(message("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n").find("line 4") != std::string::npos);
  CHECK(message("v 0 0 0\nbogus 1\n").find("line 2") != std::string::npos);
}
