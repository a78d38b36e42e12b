#include <algorithm>
#include <cmath>

#include "msps/geom.hpp"

namespace msps {

void TriMesh::validate() const {
  if (normals.size() != vertices.size()) throw Error("mesh needs one normal per vertex");
  for (const auto& n : normals) {
    if (std::abs(n.norm() - 1.0) > 1e-6) throw Error("mesh normal is not unit length");
  }
  for (std::size_t i = 0; i < faces.size(); ++i) {
    for (auto v : faces[i]) {
      if (v >= vertices.size()) throw Error("face " + std::to_string(i) + " indexes past the vertex list");
    }
    const auto& f = faces[i];
    const Vec3 c = (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
    if (c.norm() == 0.0) throw Error("face " + std::to_string(i) + " has zero area");
  }
}

std::map<std::pair<std::uint32_t, std::uint32_t>, int> edge_use_counts(const TriMesh& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> uses;
  for (const auto& f : mesh.faces) {
    for (int e = 0; e < 3; ++e) {
      const auto a = f[static_cast<std::size_t>(e)], b = f[static_cast<std::size_t>((e + 1) % 3)];
      ++uses[{std::min(a, b), std::max(a, b)}];
    }
  }
  return uses;
}

void fit_to_radius(TriMesh& mesh, double radius) {
  if (mesh.vertices.empty()) throw Error("cannot fit an empty mesh");
  Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 centre = 0.5 * (lo + hi);
  const double half_diag = 0.5 * (hi - lo).norm();
  if (!(half_diag > 0.0)) throw Error("mesh has no spatial extent");
  const double s = radius / half_diag;
  for (auto& v : mesh.vertices) v = (v - centre) * s;
}

}  // namespace msps
