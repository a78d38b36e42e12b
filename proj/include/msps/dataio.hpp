#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "msps/sample.hpp"

namespace msps {

/// Row-major image, row 0 at the top, channels interleaved.
struct FloatImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<float> data;

  float at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * channels + c]; }
};

/// PFM bytes ("PF" colour, "Pf" gray, little-endian, rows bottom to top).
std::string encode_pfm(const FloatImage& image);
FloatImage decode_pfm(std::string_view bytes);
void write_pfm(const std::filesystem::path& path, const FloatImage& image);
FloatImage read_pfm(const std::filesystem::path& path);

/// Binary PGM (P5), 0 / 255.
std::string encode_pgm(const Mask& mask, std::size_t height, std::size_t width);
/// Nonzero samples are in the mask.
Mask decode_pgm(std::string_view bytes, std::size_t& height, std::size_t& width);

/// PNG decoded to linear values in [0,1]: 16-bit data is taken as linear,
/// 8-bit data as sRGB (unless the file states its gamma).
FloatImage read_png(const std::filesystem::path& path);
/// 16-bit linear PNG; values are clamped to [0,1].
void write_png16(const std::filesystem::path& path, const FloatImage& image);

FloatImage image_from_tensor(const Tensor& chw);
Tensor tensor_from_image(const FloatImage& image);
FloatImage image_from_normals(const NormalMap& normals);
NormalMap normals_from_image(const FloatImage& image, const Mask& mask);

inline constexpr int kManifestVersion = 1;

/// Writes PFM images, mask.pgm, optional normals.pfm and manifest.json. The
/// directory is assembled beside the target and renamed into place.
void write_sample(const std::filesystem::path& dir, const PsSample& sample);
PsSample read_sample(const std::filesystem::path& dir);

/// Reads a DiLiGenT-style object directory: numbered images (or
/// filenames.txt), light_directions.txt, light_intensities.txt, mask.png
/// and optionally Normal_gt.pfm.
PsSample import_diligent(const std::filesystem::path& dir);

}  // namespace msps
