#include <algorithm>
#include <cmath>
#include <numeric>

#include "msps/render.hpp"

namespace msps {

std::optional<Hit> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c, double t_min,
                                      double t_max) {
  const Vec3& d = ray.direction;
  // Shear into a frame where the ray runs along +z through the origin.
  int kz = 0;
  d.cwiseAbs().maxCoeff(&kz);
  int kx = (kz + 1) % 3, ky = (kx + 1) % 3;
  if (d[kz] < 0.0) std::swap(kx, ky);
  const double sx = d[kx] / d[kz], sy = d[ky] / d[kz], sz = 1.0 / d[kz];

  const Vec3 pa = a - ray.origin, pb = b - ray.origin, pc = c - ray.origin;
  const double ax = pa[kx] - sx * pa[kz], ay = pa[ky] - sy * pa[kz];
  const double bx = pb[kx] - sx * pb[kz], by = pb[ky] - sy * pb[kz];
  const double cx = pc[kx] - sx * pc[kz], cy = pc[ky] - sy * pc[kz];

  double u = cx * by - cy * bx;
  double v = ax * cy - ay * cx;
  double w = bx * ay - by * ax;
  if (u == 0.0 || v == 0.0 || w == 0.0) {
    using L = long double;
    u = static_cast<double>(L(cx) * L(by) - L(cy) * L(bx));
    v = static_cast<double>(L(ax) * L(cy) - L(ay) * L(cx));
    w = static_cast<double>(L(bx) * L(ay) - L(by) * L(ax));
  }
  if ((u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0)) return std::nullopt;
  const double det = u + v + w;
  if (det == 0.0) return std::nullopt;

  const double az = sz * pa[kz], bz = sz * pb[kz], cz = sz * pc[kz];
  const double t = (u * az + v * bz + w * cz) / det;
  if (!(t > t_min && t <= t_max)) return std::nullopt;
  Hit hit;
  hit.t = t;
  hit.bary = {u / det, v / det, w / det};
  return hit;
}

namespace {

// Entry distance of the ray into the box, or nullopt when it misses
// (t_min, t_max].
std::optional<double> slab(const Ray& ray, const Vec3& lo, const Vec3& hi, double t_min, double t_max) {
  double t0 = t_min, t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a], d = ray.direction[a];
    if (d == 0.0) {
      if (o < lo[a] || o > hi[a]) return std::nullopt;
      continue;
    }
    double n = (lo[a] - o) / d, f = (hi[a] - o) / d;
    if (n > f) std::swap(n, f);
    // Widen slightly so rounding never rejects a box the ray grazes.
    f *= 1.0 + 1e-12;
    t0 = std::max(t0, n);
    t1 = std::min(t1, f);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

bool nearer(const Hit& a, const Hit& b) { return a.t < b.t || (a.t == b.t && a.triangle < b.triangle); }

}  // namespace

Bvh::Bvh(const TriMesh& mesh) : mesh_(&mesh) {
  const std::size_t nf = mesh.faces.size();
  order_.resize(nf);
  std::iota(order_.begin(), order_.end(), 0u);
  std::vector<Vec3> centroid(nf), tlo(nf), thi(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    const auto& face = mesh.faces[f];
    const Vec3& a = mesh.vertices[face[0]];
    const Vec3& b = mesh.vertices[face[1]];
    const Vec3& c = mesh.vertices[face[2]];
    tlo[f] = a.cwiseMin(b).cwiseMin(c);
    thi[f] = a.cwiseMax(b).cwiseMax(c);
    centroid[f] = (a + b + c) / 3.0;
  }
  if (nf == 0) return;

  struct Task {
    std::uint32_t node, begin, end;
  };
  nodes_.push_back({});
  std::vector<Task> tasks{{0, 0, static_cast<std::uint32_t>(nf)}};
  while (!tasks.empty()) {
    const Task task = tasks.back();
    tasks.pop_back();
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    Vec3 clo = lo, chi = hi;
    for (std::uint32_t i = task.begin; i < task.end; ++i) {
      lo = lo.cwiseMin(tlo[order_[i]]);
      hi = hi.cwiseMax(thi[order_[i]]);
      clo = clo.cwiseMin(centroid[order_[i]]);
      chi = chi.cwiseMax(centroid[order_[i]]);
    }
    const Vec3 pad = Vec3::Constant(1e-9) + 1e-9 * (hi - lo);
    nodes_[task.node].lo = lo - pad;
    nodes_[task.node].hi = hi + pad;
    const std::uint32_t count = task.end - task.begin;
    int axis = 0;
    (chi - clo).maxCoeff(&axis);
    if (count <= 4 || chi[axis] - clo[axis] <= 0.0) {
      nodes_[task.node].first = task.begin;
      nodes_[task.node].count = count;
      continue;
    }
    const std::uint32_t mid = task.begin + count / 2;
    std::nth_element(order_.begin() + task.begin, order_.begin() + mid, order_.begin() + task.end,
                     [&](std::uint32_t x, std::uint32_t y) {
                       return centroid[x][axis] < centroid[y][axis] ||
                              (centroid[x][axis] == centroid[y][axis] && x < y);
                     });
    const auto left = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    nodes_.push_back({});
    nodes_[task.node].first = left;
    nodes_[task.node].count = 0;
    tasks.push_back({left, task.begin, mid});
    tasks.push_back({left + 1, mid, task.end});
  }
}

std::optional<Hit> Bvh::intersect(const Ray& ray, double t_min, double t_max) const {
  std::optional<Hit> best;
  if (nodes_.empty()) return best;
  double limit = t_max;
  std::uint32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (!slab(ray, node.lo, node.hi, t_min, limit)) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t f = order_[i];
        const auto& face = mesh_->faces[f];
        auto hit = intersect_triangle(ray, mesh_->vertices[face[0]], mesh_->vertices[face[1]],
                                      mesh_->vertices[face[2]], t_min, limit);
        if (!hit) continue;
        hit->triangle = f;
        if (!best || nearer(*hit, *best)) {
          best = hit;
          limit = hit->t;
        }
      }
      continue;
    }
    const auto l = slab(ray, nodes_[node.first].lo, nodes_[node.first].hi, t_min, limit);
    const auto r = slab(ray, nodes_[node.first + 1].lo, nodes_[node.first + 1].hi, t_min, limit);
    // Push the farther child first so the nearer one is visited next.
    if (l && r) {
      const bool left_first = *l <= *r;
      stack[top++] = left_first ? node.first + 1 : node.first;
      stack[top++] = left_first ? node.first : node.first + 1;
    } else if (l) {
      stack[top++] = node.first;
    } else if (r) {
      stack[top++] = node.first + 1;
    }
  }
  return best;
}

bool Bvh::occluded(const Ray& ray, double t_min, double t_max, std::uint32_t ignore) const {
  if (nodes_.empty()) return false;
  std::uint32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (!slab(ray, node.lo, node.hi, t_min, t_max)) continue;
    if (node.count == 0) {
      stack[top++] = node.first;
      stack[top++] = node.first + 1;
      continue;
    }
    for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
      const std::uint32_t f = order_[i];
      if (f == ignore) continue;
      const auto& face = mesh_->faces[f];
      if (intersect_triangle(ray, mesh_->vertices[face[0]], mesh_->vertices[face[1]], mesh_->vertices[face[2]],
                             t_min, t_max)) {
        return true;
      }
    }
  }
  return false;
}

std::optional<Hit> brute_force_intersect(const TriMesh& mesh, const Ray& ray, double t_min, double t_max) {
  std::optional<Hit> best;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    auto hit = intersect_triangle(ray, mesh.vertices[face[0]], mesh.vertices[face[1]], mesh.vertices[face[2]],
                                  t_min, t_max);
    if (!hit) continue;
    hit->triangle = static_cast<std::uint32_t>(f);
    if (!best || nearer(*hit, *best)) best = hit;
  }
  return best;
}

}  // namespace msps
