#include <png.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "msps/dataio.hpp"

namespace msps {

FloatImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  // Linear 16-bit output: libpng decodes sRGB/gamma-encoded data and keeps
  // 16-bit files without a gamma chunk as linear.
  image.format = color ? PNG_FORMAT_LINEAR_RGB : PNG_FORMAT_LINEAR_Y;
  std::vector<png_uint_16> buffer(PNG_IMAGE_SIZE(image) / sizeof(png_uint_16));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(path.string() + ": " + msg);
  }
  FloatImage out;
  out.height = image.height;
  out.width = image.width;
  out.channels = color ? 3 : 1;
  out.data.resize(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) out.data[i] = static_cast<float>(buffer[i] / 65535.0);
  return out;
}

void write_png16(const std::filesystem::path& path, const FloatImage& img) {
  if (img.channels != 1 && img.channels != 3) throw Error("PNG images have 1 or 3 channels");
  std::vector<png_uint_16> buffer(img.data.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    buffer[i] = static_cast<png_uint_16>(std::lround(std::clamp(static_cast<double>(img.data[i]), 0.0, 1.0) * 65535.0));
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_LINEAR_RGB : PNG_FORMAT_LINEAR_Y;
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  if (!png_image_write_to_file(&image, tmp.c_str(), 0, buffer.data(), 0, nullptr)) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw Error(path.string() + ": " + image.message);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace msps
