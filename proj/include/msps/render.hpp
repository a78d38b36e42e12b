#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msps/geom.hpp"
#include "msps/rng.hpp"
#include "msps/sample.hpp"

namespace msps {

/// Smooth value noise over 3-D surface position, two octaves, mapped to
/// [lo, hi].
struct NoiseMap {
  std::uint64_t seed = 0;
  double frequency = 4.0;
  double lo = 0.0;
  double hi = 1.0;

  double at(const Vec3& p) const;
};

struct ScalarParam {
  double constant = 0.0;
  std::optional<NoiseMap> map;

  double at(const Vec3& p) const { return map ? map->at(p) : constant; }
  bool varying() const noexcept { return map.has_value(); }
};

/// Constant colour, or a blend from `constant` to `other` driven by `map`.
struct ColorParam {
  Vec3 constant = Vec3::Constant(0.5);
  Vec3 other = Vec3::Constant(0.5);
  std::optional<NoiseMap> map;

  Vec3 at(const Vec3& p) const;
  bool varying() const noexcept { return map.has_value(); }
};

/// Reflectance parameters resolved at one surface point.
struct MaterialPoint {
  Vec3 base_color = Vec3::Constant(0.5);
  double metallic = 0.0;
  double roughness = 0.5;
  double specular = 0.5;
  double anisotropy = 0.0;
};

enum class MaterialCategory { Textured, GlassLike, Metal, Random };
const char* category_name(MaterialCategory c);

struct MaterialSpec {
  MaterialCategory category = MaterialCategory::Random;
  ColorParam base_color;
  ScalarParam metallic;
  ScalarParam roughness{0.5, std::nullopt};
  ScalarParam specular{0.5, std::nullopt};
  ScalarParam anisotropy;

  /// Parameters at `p`, clamped to their legal ranges (roughness >= 0.02).
  MaterialPoint at(const Vec3& p) const;
  static MaterialSpec lambertian(const Vec3& albedo);
};

struct MaterialPolicy {
  /// Textured, glass-like, metal, random.
  std::array<double, 4> category_probabilities{0.50, 0.17, 0.17, 0.16};
  double spatial_variation = 0.50;

  void validate() const;
};

MaterialSpec sample_material(Rng& rng, const MaterialPolicy& policy = {});

struct LightPolicy {
  double max_polar_degrees = 75.0;
  double min_intensity = 0.3;
  double max_intensity = 2.0;
};

/// Directions uniform on the cap z >= cos(max polar angle); one intensity
/// per light, shared by the three channels.
std::vector<LightSample> sample_lights(Rng& rng, std::size_t count, const LightPolicy& policy = {});

/// RGB reflectance factor: (1-metallic) base/pi plus anisotropic GGX with
/// separable Smith masking and Schlick Fresnel. `tangent` fixes the
/// anisotropy axis and must be orthogonal to n. Returns 0 when n.v <= 1e-6
/// or n.l <= 0.
Vec3 brdf_eval(const MaterialPoint& m, const Vec3& n, const Vec3& l, const Vec3& v, const Vec3& tangent);
/// Tangent used for shading: the world x axis projected onto the tangent plane.
Vec3 shading_tangent(const Vec3& n);

struct Ray {
  Vec3 origin;
  Vec3 direction;
};

struct Hit {
  double t = 0.0;
  std::uint32_t triangle = 0;
  /// Weights of the triangle's three vertices.
  std::array<double, 3> bary{};
};

/// Watertight ray/triangle test; hits with t in (t_min, t_max] only.
std::optional<Hit> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c, double t_min,
                                      double t_max);

/// Bounding-volume hierarchy over a mesh. Nearest hits break ties in t by
/// the lowest triangle index, so results equal a brute-force scan.
class Bvh {
 public:
  explicit Bvh(const TriMesh& mesh);

  std::optional<Hit> intersect(const Ray& ray, double t_min = 0.0,
                               double t_max = std::numeric_limits<double>::infinity()) const;
  /// True when any triangle other than `ignore` is hit in (t_min, t_max].
  bool occluded(const Ray& ray, double t_min, double t_max, std::uint32_t ignore) const;
  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Vec3 lo, hi;
    std::uint32_t first = 0;  // child index (inner) or first triangle slot (leaf)
    std::uint32_t count = 0;  // 0 for inner nodes
  };

  const TriMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

std::optional<Hit> brute_force_intersect(const TriMesh& mesh, const Ray& ray, double t_min = 0.0,
                                         double t_max = std::numeric_limits<double>::infinity());

struct RenderJob {
  TriMesh mesh;
  MaterialSpec material;
  std::vector<LightSample> lights;
  std::size_t height = 128;
  std::size_t width = 128;
  std::uint64_t seed = 0;
  std::string mesh_source = "blob";

  void validate() const;
};

/// Orthographic camera looking down -z over [-1,1] in the longer image axis;
/// row 0 is the top (y = +1). Direct lighting with cast shadows.
PsSample render(const RenderJob& job);

struct GenerateOptions {
  std::size_t lights = 100;
  std::size_t resolution = 128;
  int grid = 96;
  /// Fixed mesh (already fitted to the view); a random blob when unset.
  std::optional<TriMesh> mesh;
  std::string mesh_source = "blob";
  MaterialPolicy materials;
  LightPolicy light_policy;
  BlobPolicy blobs;
};

/// One rendered training sample, a pure function of `seed` and `options`.
PsSample generate_sample(std::uint64_t seed, const GenerateOptions& options = {});

/// Camera ray through the centre of pixel (row, col).
Ray camera_ray(std::size_t row, std::size_t col, std::size_t height, std::size_t width);

}  // namespace msps
