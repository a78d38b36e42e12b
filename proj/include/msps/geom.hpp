#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <utility>
#include <vector>

#include "msps/sample.hpp"

namespace msps {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;
  std::vector<std::array<std::uint32_t, 3>> faces;

  bool empty() const noexcept { return faces.empty(); }
  /// Throws on out-of-range indices, non-unit normals or zero-area faces.
  void validate() const;
};

/// Number of faces using each undirected edge, keyed by (min, max) vertex id.
std::map<std::pair<std::uint32_t, std::uint32_t>, int> edge_use_counts(const TriMesh& mesh);

/// Uniformly rescales and recentres so the bounding sphere of the vertex
/// bounding box has radius `radius` about the origin.
void fit_to_radius(TriMesh& mesh, double radius);

/// f(x) = sum_i a_i exp(-|x - c_i|^2 / (2 sigma_i^2)); the solid is f > iso.
struct BlobField {
  std::vector<Vec3> centers;
  std::vector<double> amplitudes;
  std::vector<double> sigmas;
  double iso = 0.8;

  double value(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const;
  void validate() const;
};

struct BlobPolicy {
  int min_blobs = 3;
  int max_blobs = 12;
  double center_extent = 0.5;
  double min_sigma = 0.15;
  double max_sigma = 0.45;
  double min_amplitude = 0.5;
  double max_amplitude = 1.5;
  double iso = 0.8;
  int max_attempts = 100;
};

struct Bounds {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);
};

/// Draws fields until one has a non-empty iso-surface strictly inside the
/// unit box [-1,1]^3; throws after `max_attempts`. `attempts` reports the
/// number of draws used.
BlobField sample_blob_field(std::uint64_t seed, const BlobPolicy& policy = {}, int* attempts = nullptr);

/// Iso-surface of `field` over `grid`^3 cells. Vertices sit on cell edges at
/// the linear crossing, shared between neighbouring cells; normals are
/// -grad f / |grad f|.
TriMesh marching_cubes(const BlobField& field, int grid = 96, const Bounds& bounds = {});

/// Triangle list of the iso-surface for one cube configuration: corners
/// follow the usual numbering (bit i set = corner i inside), entries are
/// cube edge ids, three per triangle.
const std::vector<std::uint8_t>& cube_triangles(std::uint8_t config);

/// ASCII OBJ subset: v, vn, f (polygons fanned), comments; vt, o, g, s,
/// usemtl and mtllib are skipped.
TriMesh load_obj(std::istream& in);

}  // namespace msps
