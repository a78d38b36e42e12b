#include <algorithm>
#include <cmath>
#include <numbers>

#include "msps/render.hpp"

namespace msps {

namespace {

double lattice(std::uint64_t seed, std::int64_t x, std::int64_t y, std::int64_t z) {
  std::uint64_t h = Rng::derive(seed, static_cast<std::uint64_t>(x));
  h = Rng::derive(h, static_cast<std::uint64_t>(y));
  h = Rng::derive(h, static_cast<std::uint64_t>(z));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, const Vec3& p) {
  const Vec3 f = p.array().floor();
  const auto ix = static_cast<std::int64_t>(f.x()), iy = static_cast<std::int64_t>(f.y()),
             iz = static_cast<std::int64_t>(f.z());
  const double tx = smooth(p.x() - f.x()), ty = smooth(p.y() - f.y()), tz = smooth(p.z() - f.z());
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
    acc += w * lattice(seed, ix + dx, iy + dy, iz + dz);
  }
  return acc;
}

NoiseMap draw_map(Rng& rng, double lo, double hi) {
  double a = rng.uniform(lo, hi), b = rng.uniform(lo, hi);
  if (a > b) std::swap(a, b);
  return NoiseMap{rng.next(), rng.uniform(2.0, 8.0), a, b};
}

Vec3 draw_color(Rng& rng, double lo, double hi) {
  const double r = rng.uniform(lo, hi);
  const double g = rng.uniform(lo, hi);
  const double b = rng.uniform(lo, hi);
  return {r, g, b};
}

}  // namespace

double NoiseMap::at(const Vec3& p) const {
  const Vec3 q = p * frequency;
  const double n = (value_noise(seed, q) + 0.5 * value_noise(seed ^ 0x9e3779b97f4a7c15ULL, 2.0 * q)) / 1.5;
  return lo + (hi - lo) * n;
}

Vec3 ColorParam::at(const Vec3& p) const {
  if (!map) return constant;
  const double t = std::clamp(map->at(p), 0.0, 1.0);
  return (1.0 - t) * constant + t * other;
}

const char* category_name(MaterialCategory c) {
  switch (c) {
    case MaterialCategory::Textured: return "textured";
    case MaterialCategory::GlassLike: return "glass_like";
    case MaterialCategory::Metal: return "metal";
    case MaterialCategory::Random: return "random";
  }
  return "unknown";
}

MaterialPoint MaterialSpec::at(const Vec3& p) const {
  MaterialPoint m;
  m.base_color = base_color.at(p).cwiseMax(0.0).cwiseMin(1.0);
  m.metallic = std::clamp(metallic.at(p), 0.0, 1.0);
  m.roughness = std::clamp(roughness.at(p), 0.02, 1.0);
  m.specular = std::clamp(specular.at(p), 0.0, 1.0);
  m.anisotropy = std::clamp(anisotropy.at(p), 0.0, 1.0);
  return m;
}

MaterialSpec MaterialSpec::lambertian(const Vec3& albedo) {
  MaterialSpec m;
  m.category = MaterialCategory::Random;
  m.base_color.constant = albedo;
  m.base_color.other = albedo;
  m.metallic.constant = 0.0;
  m.specular.constant = 0.0;
  m.roughness.constant = 1.0;
  m.anisotropy.constant = 0.0;
  return m;
}

void MaterialPolicy::validate() const {
  double sum = 0.0;
  for (double p : category_probabilities) {
    if (!(p >= 0.0)) throw Error("material category probabilities must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("material category probabilities must sum to 1");
  if (!(spatial_variation >= 0.0 && spatial_variation <= 1.0)) {
    throw Error("spatial variation probability must lie in [0, 1]");
  }
}

MaterialSpec sample_material(Rng& rng, const MaterialPolicy& policy) {
  policy.validate();
  const double u = rng.uniform();
  MaterialCategory category = MaterialCategory::Random;
  double cum = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    cum += policy.category_probabilities[c];
    if (u < cum) {
      category = static_cast<MaterialCategory>(c);
      break;
    }
  }

  MaterialSpec m;
  m.category = category;
  // Scalars that may become a spatial map, with the range each may span.
  struct Slot {
    ScalarParam* param;
    double lo, hi;
  };
  std::vector<Slot> slots;
  switch (category) {
    case MaterialCategory::Textured: {
      m.base_color.constant = draw_color(rng, 0.0, 1.0);
      m.base_color.other = draw_color(rng, 0.0, 1.0);
      m.base_color.map = NoiseMap{rng.next(), rng.uniform(2.0, 8.0), 0.0, 1.0};
      m.roughness.map = draw_map(rng, 0.02, 1.0);
      m.metallic.constant = 0.0;
      m.specular.constant = rng.uniform();
      m.anisotropy.constant = 0.0;
      slots = {{&m.specular, 0.0, 1.0}};
      break;
    }
    case MaterialCategory::GlassLike: {
      m.base_color.constant = m.base_color.other = draw_color(rng, 0.0, 0.1);
      m.metallic.constant = 0.0;
      m.specular.constant = 1.0;
      m.roughness.constant = rng.uniform(0.02, 0.1);
      m.anisotropy.constant = 0.0;
      slots = {{&m.roughness, 0.02, 0.1}};
      break;
    }
    case MaterialCategory::Metal: {
      m.base_color.constant = m.base_color.other = draw_color(rng, 0.3, 1.0);
      m.metallic.constant = 1.0;
      m.roughness.constant = rng.uniform(0.05, 0.5);
      m.specular.constant = rng.uniform();
      m.anisotropy.constant = rng.uniform() < 0.5 ? rng.uniform() : 0.0;
      slots = {{&m.roughness, 0.05, 0.5}, {&m.anisotropy, 0.0, 1.0}};
      break;
    }
    case MaterialCategory::Random: {
      m.base_color.constant = m.base_color.other = draw_color(rng, 0.0, 1.0);
      m.metallic.constant = rng.uniform();
      m.roughness.constant = rng.uniform(0.02, 1.0);
      m.specular.constant = rng.uniform();
      m.anisotropy.constant = rng.uniform();
      slots = {{&m.metallic, 0.0, 1.0}, {&m.roughness, 0.02, 1.0}, {&m.specular, 0.0, 1.0}, {&m.anisotropy, 0.0, 1.0}};
      break;
    }
  }
  if (rng.uniform() < policy.spatial_variation) {
    const Slot& s = slots[rng.index(slots.size())];
    s.param->map = draw_map(rng, s.lo, s.hi);
  }
  return m;
}

std::vector<LightSample> sample_lights(Rng& rng, std::size_t count, const LightPolicy& policy) {
  if (count < 3) throw Error("at least 3 lights are required");
  if (!(policy.max_polar_degrees > 0.0 && policy.max_polar_degrees < 90.0)) {
    throw Error("light cap angle must lie in (0, 90) degrees");
  }
  if (!(policy.min_intensity > 0.0 && policy.max_intensity >= policy.min_intensity)) {
    throw Error("light intensity range must be positive and ordered");
  }
  const double zmin = std::cos(policy.max_polar_degrees * std::numbers::pi / 180.0);
  std::vector<LightSample> out(count);
  for (auto& l : out) {
    // Uniform on the cap: z uniform in [zmin, 1], azimuth uniform.
    const double z = rng.uniform(zmin, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    l.direction = Vec3(r * std::cos(phi), r * std::sin(phi), z).normalized();
    const double e = rng.uniform(policy.min_intensity, policy.max_intensity);
    l.intensity = {e, e, e};
  }
  return out;
}

}  // namespace msps
