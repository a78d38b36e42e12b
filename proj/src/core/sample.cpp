#include "msps/sample.hpp"

#include <cmath>
#include <string>

namespace msps {

void LightSample::validate() const {
  if (!direction.allFinite() || std::abs(direction.norm() - 1.0) > 1e-9) {
    throw Error("light direction must be unit length");
  }
  if (direction.z() <= 0.0) throw Error("light direction must point toward the camera (z > 0)");
  for (double i : intensity) {
    if (!(i > 0.0) || !std::isfinite(i)) throw Error("light intensity must be positive");
  }
}

NormalMap::NormalMap(std::size_t h, std::size_t w)
    : height(h), width(w), values(h * w * 3, 0.0), mask(h * w, 1) {}

NormalMap NormalMap::constant(std::size_t h, std::size_t w, const Vec3& n) {
  NormalMap m(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    m.values[3 * i] = n.x();
    m.values[3 * i + 1] = n.y();
    m.values[3 * i + 2] = n.z();
  }
  return m;
}

Vec3 NormalMap::at(std::size_t y, std::size_t x) const {
  const std::size_t i = 3 * (y * width + x);
  return {values[i], values[i + 1], values[i + 2]};
}

void NormalMap::set(std::size_t y, std::size_t x, const Vec3& n) {
  const std::size_t i = 3 * (y * width + x);
  values[i] = n.x();
  values[i + 1] = n.y();
  values[i + 2] = n.z();
}

std::size_t NormalMap::masked_count() const {
  std::size_t c = 0;
  for (auto m : mask) c += m != 0;
  return c;
}

Tensor NormalMap::to_tensor() const {
  const std::size_t hw = height * width;
  std::vector<double> data(3 * hw);
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) data[c * hw + p] = values[3 * p + c];
  return Tensor({1, 3, height, width}, std::move(data));
}

NormalMap NormalMap::from_tensor(const Tensor& t, Mask mask) {
  Tensor v = t;
  if (v.rank() == 3) v = v.reshape({1, v.dim(0), v.dim(1), v.dim(2)});
  if (v.rank() != 4 || v.dim(0) != 1 || v.dim(1) != 3) throw ShapeError("normal tensor", {1, 3, 0, 0}, t.shape());
  NormalMap m(v.dim(2), v.dim(3));
  const std::size_t hw = m.height * m.width;
  auto src = v.values();
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) m.values[3 * p + c] = src[c * hw + p];
  if (!mask.empty()) {
    if (mask.size() != hw) throw ShapeError("normal map mask", {m.height, m.width}, {mask.size()});
    m.mask = std::move(mask);
  }
  return m;
}

void NormalMap::validate(double tolerance) const {
  if (values.size() != height * width * 3 || mask.size() != height * width) {
    throw ShapeError("normal map storage", {height, width, 3}, {values.size()});
  }
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (!in_mask(y, x)) continue;
      if (std::abs(at(y, x).norm() - 1.0) > tolerance) {
        throw Error("normal map pixel (" + std::to_string(y) + "," + std::to_string(x) + ") is not unit length");
      }
    }
  }
}

void PsSample::validate() const {
  if (images.size() < 3) throw Error("a sample needs at least 3 images, got " + std::to_string(images.size()));
  if (lights.size() != images.size()) {
    throw Error("image/light count mismatch: " + std::to_string(images.size()) + " images, " +
                std::to_string(lights.size()) + " lights");
  }
  const Shape ref = images[0].shape();
  if (ref.size() != 3) throw ShapeError("sample image", {3, 0, 0}, ref);
  for (const auto& im : images) {
    if (im.shape() != ref) throw ShapeError("sample image", ref, im.shape());
  }
  for (const auto& l : lights) l.validate();
  if (mask.size() != ref[1] * ref[2]) throw ShapeError("sample mask", {ref[1], ref[2]}, {mask.size()});
  if (gt_normals) {
    if (gt_normals->height != ref[1] || gt_normals->width != ref[2]) {
      throw ShapeError("ground-truth normals", {ref[1], ref[2]}, {gt_normals->height, gt_normals->width});
    }
  }
}

PsSample PsSample::crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const {
  const std::size_t H = height(), W = width(), C = channels();
  if (y0 + h > H || x0 + w > W) throw ShapeError("crop window", {H, W}, {y0 + h, x0 + w});
  PsSample out;
  out.lights = lights;
  out.metadata = metadata;
  for (const auto& im : images) {
    std::vector<double> data(C * h * w);
    auto src = im.values();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) data[(c * h + y) * w + x] = src[(c * H + y0 + y) * W + x0 + x];
    out.images.emplace_back(Shape{C, h, w}, std::move(data));
  }
  out.mask.resize(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.mask[y * w + x] = mask[(y0 + y) * W + x0 + x];
  if (gt_normals) {
    NormalMap n(h, w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        n.set(y, x, gt_normals->at(y0 + y, x0 + x));
        n.mask[y * w + x] = gt_normals->mask[(y0 + y) * W + x0 + x];
      }
    }
    out.gt_normals = std::move(n);
  }
  return out;
}

}  // namespace msps
