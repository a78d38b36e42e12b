#include <algorithm>
#include <cmath>

#include "msps/render.hpp"

namespace msps {

void RenderJob::validate() const {
  if (mesh.empty()) throw Error("cannot render an empty mesh");
  if (mesh.normals.size() != mesh.vertices.size()) throw Error("mesh needs one normal per vertex");
  if (lights.size() < 3) throw Error("render needs at least 3 lights");
  for (const auto& l : lights) l.validate();
  if (height < 8 || width < 8) throw Error("render resolution must be at least 8x8");
}

Ray camera_ray(std::size_t row, std::size_t col, std::size_t height, std::size_t width) {
  const double s = 2.0 / static_cast<double>(std::max(height, width));
  const double x = (static_cast<double>(col) + 0.5 - 0.5 * static_cast<double>(width)) * s;
  const double y = (0.5 * static_cast<double>(height) - static_cast<double>(row) - 0.5) * s;
  return {Vec3(x, y, 100.0), Vec3(0.0, 0.0, -1.0)};
}

PsSample render(const RenderJob& job) {
  job.validate();
  const std::size_t h = job.height, w = job.width, k = job.lights.size();
  const Bvh bvh(job.mesh);
  const Vec3 view = Vec3::UnitZ();

  std::vector<std::vector<double>> planes(k, std::vector<double>(3 * h * w, 0.0));
  NormalMap normals(h, w);
  std::fill(normals.values.begin(), normals.values.end(), 0.0);
  std::fill(normals.mask.begin(), normals.mask.end(), std::uint8_t{0});

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Ray ray = camera_ray(y, x, h, w);
      const auto hit = bvh.intersect(ray);
      if (!hit) continue;
      const auto& face = job.mesh.faces[hit->triangle];
      const Vec3& a = job.mesh.vertices[face[0]];
      const Vec3& b = job.mesh.vertices[face[1]];
      const Vec3& c = job.mesh.vertices[face[2]];
      const Vec3 p = hit->bary[0] * a + hit->bary[1] * b + hit->bary[2] * c;
      Vec3 n = hit->bary[0] * job.mesh.normals[face[0]] + hit->bary[1] * job.mesh.normals[face[1]] +
               hit->bary[2] * job.mesh.normals[face[2]];
      if (!(n.norm() > 0.0)) n = (b - a).cross(c - a);
      n.normalize();
      Vec3 geometric = (b - a).cross(c - a).normalized();
      if (geometric.dot(n) < 0.0) geometric = -geometric;

      normals.set(y, x, n);
      normals.mask[y * w + x] = 1;

      const MaterialPoint m = job.material.at(p);
      const Vec3 tangent = shading_tangent(n);
      const Vec3 origin = p + 1e-6 * geometric;
      for (std::size_t j = 0; j < k; ++j) {
        const LightSample& light = job.lights[j];
        const double nl = n.dot(light.direction);
        if (nl <= 0.0) continue;
        if (bvh.occluded({origin, light.direction}, 0.0, std::numeric_limits<double>::infinity(), hit->triangle)) {
          continue;
        }
        const Vec3 f = brdf_eval(m, n, light.direction, view, tangent);
        for (std::size_t ch = 0; ch < 3; ++ch) {
          planes[j][(ch * h + y) * w + x] = light.intensity[ch] * f[static_cast<Eigen::Index>(ch)] * nl;
        }
      }
    }
  }

  PsSample out;
  out.images.reserve(k);
  for (auto& plane : planes) out.images.emplace_back(Shape{3, h, w}, std::move(plane));
  out.lights = job.lights;
  out.mask = normals.mask;
  out.gt_normals = std::move(normals);
  out.metadata.seed = job.seed;
  out.metadata.material_category = category_name(job.material.category);
  out.metadata.mesh_source = job.mesh_source;
  return out;
}

}  // namespace msps
