#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "msps/dataio.hpp"
#include "msps/fsutil.hpp"

namespace msps {

namespace {

// Reads one whitespace-delimited header token starting at `pos`.
std::string token(std::string_view bytes, std::size_t& pos, const char* what) {
  while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw FormatError(std::string("truncated header: missing ") + what);
  return std::string(bytes.substr(start, pos - start));
}

std::size_t positive(const std::string& tok, const char* what) {
  std::size_t used = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size() || v == 0) throw FormatError(std::string("bad ") + what + " '" + tok + "'");
  return v;
}

std::uint32_t swap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace

std::string encode_pfm(const FloatImage& image) {
  if (image.channels != 1 && image.channels != 3) throw Error("PFM images have 1 or 3 channels");
  const std::size_t n = image.height * image.width * image.channels;
  if (image.height == 0 || image.width == 0 || image.data.size() != n) throw Error("PFM image size mismatch");
  for (float v : image.data) {
    if (!std::isfinite(v)) throw NumericError("refusing to write a non-finite PFM value");
  }
  std::string out = image.channels == 3 ? "PF\n" : "Pf\n";
  out += std::to_string(image.width) + " " + std::to_string(image.height) + "\n-1.0\n";
  const std::size_t row = image.width * image.channels;
  const std::size_t header = out.size();
  out.resize(header + n * 4);
  char* dst = out.data() + header;
  for (std::size_t y = image.height; y-- > 0;) {
    for (std::size_t i = 0; i < row; ++i) {
      auto bits = std::bit_cast<std::uint32_t>(image.data[y * row + i]);
      if constexpr (std::endian::native == std::endian::big) bits = swap32(bits);
      std::memcpy(dst, &bits, 4);
      dst += 4;
    }
  }
  return out;
}

FloatImage decode_pfm(std::string_view bytes) {
  std::size_t pos = 0;
  const std::string magic = token(bytes, pos, "magic");
  FloatImage img;
  if (magic == "PF") {
    img.channels = 3;
  } else if (magic == "Pf") {
    img.channels = 1;
  } else {
    throw FormatError("bad PFM magic '" + magic + "'");
  }
  img.width = positive(token(bytes, pos, "width"), "PFM width");
  img.height = positive(token(bytes, pos, "height"), "PFM height");
  const std::string scale_tok = token(bytes, pos, "scale");
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw FormatError("bad PFM scale '" + scale_tok + "'");
  }
  if (scale == 0.0 || !std::isfinite(scale)) throw FormatError("bad PFM scale '" + scale_tok + "'");
  if (pos >= bytes.size()) throw FormatError("truncated PFM payload");
  ++pos;  // the single whitespace byte ending the header
  const bool little = scale < 0.0;
  const std::size_t n = img.width * img.height * img.channels;
  if (bytes.size() - pos != n * 4) {
    throw FormatError("PFM payload holds " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                      std::to_string(n * 4));
  }
  img.data.resize(n);
  const std::size_t row = img.width * img.channels;
  const char* src = bytes.data() + pos;
  const bool swap = little != (std::endian::native == std::endian::little);
  for (std::size_t y = img.height; y-- > 0;) {
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, src, 4);
      src += 4;
      if (swap) bits = swap32(bits);
      img.data[y * row + i] = std::bit_cast<float>(bits);
    }
  }
  return img;
}

void write_pfm(const std::filesystem::path& path, const FloatImage& image) { atomic_write(path, encode_pfm(image)); }

FloatImage read_pfm(const std::filesystem::path& path) {
  try {
    return decode_pfm(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string encode_pgm(const Mask& mask, std::size_t height, std::size_t width) {
  if (mask.size() != height * width || height == 0 || width == 0) throw Error("PGM mask size mismatch");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (auto m : mask) out.push_back(m ? static_cast<char>(255) : '\0');
  return out;
}

Mask decode_pgm(std::string_view bytes, std::size_t& height, std::size_t& width) {
  std::size_t pos = 0;
  auto next = [&](const char* what) {
    // PGM headers may carry comments.
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      return token(bytes, pos, what);
    }
  };
  if (next("magic") != "P5") throw FormatError("mask is not a binary PGM (P5)");
  width = positive(next("width"), "PGM width");
  height = positive(next("height"), "PGM height");
  const std::size_t maxval = positive(next("maxval"), "PGM maxval");
  if (maxval > 255) throw FormatError("16-bit PGM masks are not supported");
  ++pos;
  if (pos > bytes.size() || bytes.size() - pos != width * height) throw FormatError("PGM payload size mismatch");
  Mask mask(width * height);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = bytes[pos + i] != 0 ? 1 : 0;
  return mask;
}

FloatImage image_from_tensor(const Tensor& chw) {
  if (chw.rank() != 3) throw ShapeError("image tensor", {3, 0, 0}, chw.shape());
  FloatImage img;
  img.channels = chw.dim(0);
  img.height = chw.dim(1);
  img.width = chw.dim(2);
  const std::size_t hw = img.height * img.width;
  img.data.resize(hw * img.channels);
  const auto v = chw.values();
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t i = 0; i < hw; ++i) img.data[i * img.channels + c] = static_cast<float>(v[c * hw + i]);
  return img;
}

Tensor tensor_from_image(const FloatImage& image) {
  const std::size_t hw = image.height * image.width;
  std::vector<double> v(hw * image.channels);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t i = 0; i < hw; ++i) v[c * hw + i] = image.data[i * image.channels + c];
  return Tensor({image.channels, image.height, image.width}, std::move(v));
}

FloatImage image_from_normals(const NormalMap& normals) {
  FloatImage img;
  img.channels = 3;
  img.height = normals.height;
  img.width = normals.width;
  img.data.assign(normals.values.size(), 0.0f);
  for (std::size_t i = 0; i < normals.height * normals.width; ++i) {
    if (!normals.mask[i]) continue;
    for (std::size_t c = 0; c < 3; ++c) img.data[3 * i + c] = static_cast<float>(normals.values[3 * i + c]);
  }
  return img;
}

NormalMap normals_from_image(const FloatImage& image, const Mask& mask) {
  if (image.channels != 3) throw FormatError("normal maps need 3 channels");
  if (mask.size() != image.height * image.width) throw Error("normal map and mask sizes differ");
  NormalMap n(image.height, image.width);
  n.mask = mask;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const Vec3 v(image.data[3 * i], image.data[3 * i + 1], image.data[3 * i + 2]);
    // Pixels without a usable normal leave the normal map's own mask.
    if (!(v.norm() > 0.5)) {
      n.mask[i] = 0;
      continue;
    }
    // float32 storage loses unit length at the 1e-7 level.
    n.set(i / image.width, i % image.width, v.normalized());
  }
  return n;
}

}  // namespace msps
