#include <algorithm>
#include <cmath>
#include <numbers>

#include "msps/render.hpp"

namespace msps {

namespace {

double smith_g1(double wt, double wb, double wn, double ax, double ay) {
  const double lambda = 0.5 * (-1.0 + std::sqrt(1.0 + (ax * ax * wt * wt + ay * ay * wb * wb) / (wn * wn)));
  return 1.0 / (1.0 + lambda);
}

}  // namespace

Vec3 shading_tangent(const Vec3& n) {
  Vec3 t = Vec3::UnitX() - n * n.x();
  if (t.norm() < 1e-6) t = Vec3::UnitY() - n * n.y();
  return t.normalized();
}

Vec3 brdf_eval(const MaterialPoint& m, const Vec3& n, const Vec3& l, const Vec3& v, const Vec3& tangent) {
  const double nl = n.dot(l), nv = n.dot(v);
  if (nv <= 1e-6 || nl <= 0.0) return Vec3::Zero();

  Vec3 f = (1.0 - m.metallic) * m.base_color / std::numbers::pi;

  const Vec3 bitangent = n.cross(tangent);
  const double aspect = std::sqrt(1.0 - 0.9 * m.anisotropy);
  const double a = m.roughness * m.roughness;
  const double ax = std::max(1e-3, a / aspect), ay = std::max(1e-3, a * aspect);

  const Vec3 h = (l + v).normalized();
  const double ht = h.dot(tangent) / ax, hb = h.dot(bitangent) / ay, hn = h.dot(n);
  const double denom = ht * ht + hb * hb + hn * hn;
  const double d = 1.0 / (std::numbers::pi * ax * ay * denom * denom);
  const double g = smith_g1(l.dot(tangent), l.dot(bitangent), nl, ax, ay) *
                   smith_g1(v.dot(tangent), v.dot(bitangent), nv, ax, ay);
  const Vec3 f0 = (1.0 - m.metallic) * Vec3::Constant(0.08 * m.specular) + m.metallic * m.base_color;
  const double schlick = std::pow(1.0 - std::clamp(l.dot(h), 0.0, 1.0), 5.0);
  // Grazing reflectance fades out for tiny F0 so specular 0 is purely diffuse.
  const double f90 = std::min(1.0, 50.0 * f0.mean());
  const Vec3 fresnel = f0 + (Vec3::Constant(f90) - f0) * schlick;
  f += fresnel * (d * g / (4.0 * nl * nv));
  return f;
}

}  // namespace msps
