#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "msps/geom.hpp"

namespace msps {

namespace {

// Corner i of the unit cube.
constexpr std::array<std::array<int, 3>, 8> kCorner = {{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                                        {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};
constexpr std::array<std::array<int, 2>, 12> kEdge = {
    {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};

int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e) {
    if ((kEdge[e][0] == a && kEdge[e][1] == b) || (kEdge[e][0] == b && kEdge[e][1] == a)) return e;
  }
  return -1;
}

// Corners of each face in counter-clockwise order seen from outside.
std::array<std::array<int, 4>, 6> face_cycles() {
  std::array<std::array<int, 4>, 6> out{};
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      Vec3 n = Vec3::Zero();
      n[axis] = side == 0 ? -1.0 : 1.0;
      Vec3 u = Vec3::Zero();
      u[(axis + 1) % 3] = 1.0;
      const Vec3 v = n.cross(u);
      std::vector<std::pair<double, int>> ring;
      for (int c = 0; c < 8; ++c) {
        if (kCorner[c][axis] != side) continue;
        const Vec3 p(kCorner[c][0] - 0.5, kCorner[c][1] - 0.5, kCorner[c][2] - 0.5);
        ring.emplace_back(std::atan2(p.dot(v), p.dot(u)), c);
      }
      std::sort(ring.begin(), ring.end());
      for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(2 * axis + side)][static_cast<std::size_t>(i)] = ring[static_cast<std::size_t>(i)].second;
    }
  }
  return out;
}

// On every face each run of inside corners is cut off by one segment, from
// the edge where the counter-clockwise walk enters the solid to the edge
// where it leaves. Neighbouring cubes walk a shared face in opposite
// directions and pair its crossings identically, so the surface closes
// up. Segments chain into loops, which are fanned into triangles.
std::vector<std::uint8_t> build_config(int config) {
  static const auto faces = face_cycles();
  auto inside = [config](int c) { return (config >> c) & 1; };
  std::array<int, 12> next;
  next.fill(-1);
  for (const auto& f : faces) {
    for (int i = 0; i < 4; ++i) {
      const int a = f[static_cast<std::size_t>(i)];
      const int b = f[static_cast<std::size_t>((i + 1) % 4)];
      if (inside(a) || !inside(b)) continue;
      // a -> b enters the solid; walk until the run of inside corners ends.
      int j = (i + 1) % 4;
      while (inside(f[static_cast<std::size_t>((j + 1) % 4)])) j = (j + 1) % 4;
      const int enter = edge_between(a, b);
      const int leave = edge_between(f[static_cast<std::size_t>(j)], f[static_cast<std::size_t>((j + 1) % 4)]);
      next[static_cast<std::size_t>(enter)] = leave;
    }
  }
  std::vector<std::uint8_t> tris;
  std::array<bool, 12> used{};
  for (int start = 0; start < 12; ++start) {
    if (next[static_cast<std::size_t>(start)] < 0 || used[static_cast<std::size_t>(start)]) continue;
    std::vector<int> loop;
    for (int e = start; !used[static_cast<std::size_t>(e)]; e = next[static_cast<std::size_t>(e)]) {
      used[static_cast<std::size_t>(e)] = true;
      loop.push_back(e);
    }
    for (std::size_t k = 1; k + 1 < loop.size(); ++k) {
      tris.push_back(static_cast<std::uint8_t>(loop[0]));
      tris.push_back(static_cast<std::uint8_t>(loop[k]));
      tris.push_back(static_cast<std::uint8_t>(loop[k + 1]));
    }
  }
  return tris;
}

}  // namespace

const std::vector<std::uint8_t>& cube_triangles(std::uint8_t config) {
  static const auto table = [] {
    std::array<std::vector<std::uint8_t>, 256> t;
    for (int c = 0; c < 256; ++c) t[static_cast<std::size_t>(c)] = build_config(c);
    return t;
  }();
  return table[config];
}

TriMesh marching_cubes(const BlobField& field, int grid, const Bounds& bounds) {
  field.validate();
  if (grid < 8) throw Error("marching cubes needs at least 8 cells per axis");
  const auto n = static_cast<std::size_t>(grid);
  const std::size_t np = n + 1;
  const Vec3 step = (bounds.hi - bounds.lo) / static_cast<double>(grid);
  if (!(step.minCoeff() > 0.0)) throw Error("marching cubes bounds are empty");

  auto point = [&](std::size_t i, std::size_t j, std::size_t k) {
    return Vec3(bounds.lo.x() + step.x() * static_cast<double>(i), bounds.lo.y() + step.y() * static_cast<double>(j),
                bounds.lo.z() + step.z() * static_cast<double>(k));
  };
  auto idx = [np](std::size_t i, std::size_t j, std::size_t k) { return (k * np + j) * np + i; };
  std::vector<double> f(np * np * np);
  for (std::size_t k = 0; k < np; ++k)
    for (std::size_t j = 0; j < np; ++j)
      for (std::size_t i = 0; i < np; ++i) f[idx(i, j, k)] = field.value(point(i, j, k));

  TriMesh mesh;
  // Grid edges are keyed by their lower grid point and axis.
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
  std::vector<bool> degenerate_normal;
  auto vertex_on = [&](std::size_t i, std::size_t j, std::size_t k, int cube_edge) {
    const int a = kEdge[static_cast<std::size_t>(cube_edge)][0], b = kEdge[static_cast<std::size_t>(cube_edge)][1];
    const auto& ca = kCorner[static_cast<std::size_t>(a)];
    const auto& cb = kCorner[static_cast<std::size_t>(b)];
    int axis = 0;
    while (ca[static_cast<std::size_t>(axis)] == cb[static_cast<std::size_t>(axis)]) ++axis;
    const auto& lo = ca[static_cast<std::size_t>(axis)] < cb[static_cast<std::size_t>(axis)] ? ca : cb;
    const std::size_t gi = i + static_cast<std::size_t>(lo[0]);
    const std::size_t gj = j + static_cast<std::size_t>(lo[1]);
    const std::size_t gk = k + static_cast<std::size_t>(lo[2]);
    const std::uint64_t key = static_cast<std::uint64_t>(idx(gi, gj, gk)) * 3 + static_cast<std::uint64_t>(axis);
    auto [it, fresh] = edge_vertex.emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (!fresh) return it->second;
    std::array<std::size_t, 3> g1 = {gi, gj, gk};
    ++g1[static_cast<std::size_t>(axis)];
    const double f0 = f[idx(gi, gj, gk)], f1 = f[idx(g1[0], g1[1], g1[2])];
    const double t = std::clamp((field.iso - f0) / (f1 - f0), 1e-6, 1.0 - 1e-6);
    const Vec3 p0 = point(gi, gj, gk), p1 = point(g1[0], g1[1], g1[2]);
    const Vec3 p = p0 + t * (p1 - p0);
    mesh.vertices.push_back(p);
    const Vec3 grad = field.gradient(p);
    const double gn = grad.norm();
    mesh.normals.push_back(gn < 1e-12 ? Vec3::Zero() : Vec3(-grad / gn));
    degenerate_normal.push_back(gn < 1e-12);
    return it->second;
  };

  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& o = kCorner[static_cast<std::size_t>(c)];
          if (f[idx(i + static_cast<std::size_t>(o[0]), j + static_cast<std::size_t>(o[1]), k + static_cast<std::size_t>(o[2]))] > field.iso) {
            config |= 1 << c;
          }
        }
        const auto& tris = cube_triangles(static_cast<std::uint8_t>(config));
        for (std::size_t t = 0; t < tris.size(); t += 3) {
          std::array<std::uint32_t, 3> face{};
          for (std::size_t v = 0; v < 3; ++v) face[v] = vertex_on(i, j, k, tris[t + v]);
          mesh.faces.push_back(face);
        }
      }
    }
  }

  bool any_degenerate = std::find(degenerate_normal.begin(), degenerate_normal.end(), true) != degenerate_normal.end();
  if (any_degenerate) {
    std::vector<Vec3> acc(mesh.vertices.size(), Vec3::Zero());
    for (const auto& face : mesh.faces) {
      const Vec3 c = (mesh.vertices[face[1]] - mesh.vertices[face[0]]).cross(mesh.vertices[face[2]] - mesh.vertices[face[0]]);
      for (auto v : face) acc[v] += c;
    }
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
      if (!degenerate_normal[v]) continue;
      mesh.normals[v] = acc[v].norm() > 0.0 ? Vec3(acc[v].normalized()) : Vec3::UnitZ();
    }
  }
  return mesh;
}

}  // namespace msps
