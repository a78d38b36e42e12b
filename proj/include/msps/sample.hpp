#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msps/tensor.hpp"

namespace msps {

using Vec3 = Eigen::Vector3d;
/// Row-major H x W mask, nonzero = pixel in.
using Mask = std::vector<std::uint8_t>;

/// Calibrated directional light. z points from the surface toward the camera.
struct LightSample {
  Vec3 direction = Vec3::UnitZ();
  std::array<double, 3> intensity{1.0, 1.0, 1.0};

  /// Throws unless the direction is unit (1e-9) with z > 0 and every intensity is positive.
  void validate() const;
};

/// Per-pixel unit normals over a masked H x W grid (values interleaved xyz).
struct NormalMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  Mask mask;

  NormalMap() = default;
  NormalMap(std::size_t h, std::size_t w);
  static NormalMap constant(std::size_t h, std::size_t w, const Vec3& n);

  Vec3 at(std::size_t y, std::size_t x) const;
  void set(std::size_t y, std::size_t x, const Vec3& n);
  bool in_mask(std::size_t y, std::size_t x) const { return mask[y * width + x] != 0; }
  std::size_t masked_count() const;

  /// [1,3,H,W] tensor of the values.
  Tensor to_tensor() const;
  /// From a [1,3,H,W] or [3,H,W] tensor; mask defaults to all-in.
  static NormalMap from_tensor(const Tensor& t, Mask mask = {});

  /// Throws when a masked-in pixel is not unit length within `tolerance`.
  void validate(double tolerance = 1e-5) const;
};

struct SampleMetadata {
  std::uint64_t seed = 0;
  std::string material_category;
  std::string mesh_source;
};

/// One photometric-stereo observation set: K linear-radiance images [C,H,W]
/// under K calibrated lights, a mask, optional ground-truth normals.
struct PsSample {
  std::vector<Tensor> images;
  std::vector<LightSample> lights;
  Mask mask;
  std::optional<NormalMap> gt_normals;
  SampleMetadata metadata;

  std::size_t count() const noexcept { return images.size(); }
  std::size_t channels() const { return images.at(0).dim(0); }
  std::size_t height() const { return images.at(0).dim(1); }
  std::size_t width() const { return images.at(0).dim(2); }

  /// Enforces K >= 3, equal image shapes, mask and normal extents, valid lights.
  void validate() const;
  /// Sub-window [y0, y0+h) x [x0, x0+w), sharing lights and metadata.
  PsSample crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const;
};

}  // namespace msps
