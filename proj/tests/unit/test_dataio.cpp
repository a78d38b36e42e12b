#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "msps/dataio.hpp"
#include "msps/fsutil.hpp"
#include "msps/geom.hpp"
#include "msps/render.hpp"
#include <json.hpp>
#include <unistd.h>
#include "support/samples.hpp"

using namespace msps;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("msps_dataio_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

FloatImage random_image(Rng& rng, std::size_t h, std::size_t w, std::size_t c) {
  FloatImage img{h, w, c, {}};
  for (std::size_t i = 0; i < h * w * c; ++i) img.data.push_back(static_cast<float>(rng.uniform(-10, 10)));
  return img;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("pfm bytes for a single gray pixel") {
  const std::string bytes = encode_pfm(FloatImage{1, 1, 1, {0.5f}});
  std::string expect = "Pf\n1 1\n-1.0\n";
  const unsigned char half[4] = {0x00, 0x00, 0x00, 0x3f};
  expect.append(reinterpret_cast<const char*>(half), 4);
  CHECK(bytes == expect);
  const FloatImage back = decode_pfm(bytes);
  CHECK(back.channels == 1);
  CHECK(back.data == std::vector<float>{0.5f});
}

TEST_CASE("pfm round trip keeps rows in order") {
  Rng rng(4);
  const FloatImage img = random_image(rng, 16, 13, 3);
  const FloatImage back = decode_pfm(encode_pfm(img));
  CHECK(back.height == 16);
  CHECK(back.width == 13);
  CHECK(back.data == img.data);
  // Bottom row is stored first.
  const std::string bytes = encode_pfm(img);
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + bytes.size() - 16 * 13 * 3 * 4, 4);
  CHECK(first == img.at(15, 0, 0));

  // Tensor conversion is exact to float precision.
  Tensor t({3, 4, 5});
  auto v = t.mutable_values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(0, 3);
  const Tensor u = tensor_from_image(decode_pfm(encode_pfm(image_from_tensor(t))));
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(u.values()[i] - v[i]) <= std::abs(v[i]) * 0x1.0p-24);
}

TEST_CASE("pfm rejects malformed input") {
  const std::string gray = encode_pfm(FloatImage{2, 2, 1, {1, 2, 3, 4}});
  std::string bad = gray;
  bad[1] = 'F';  // claims colour, payload is gray
  CHECK_THROWS_AS(decode_pfm(bad), FormatError);
  CHECK_THROWS_AS(decode_pfm(gray.substr(0, gray.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_pfm("P6\n1 1\n255\n"), FormatError);
  CHECK_THROWS_AS(decode_pfm("Pf\n1"), FormatError);
  CHECK_THROWS_AS(decode_pfm("Pf\n0 1\n-1.0\n"), FormatError);
  CHECK_THROWS_AS(encode_pfm(FloatImage{1, 1, 1, {NAN}}), NumericError);
  CHECK_THROWS(encode_pfm(FloatImage{1, 1, 2, {1, 2}}));

  // Big-endian files (positive scale) are accepted.
  std::string be = "Pf\n1 1\n1.0\n";
  const unsigned char half[4] = {0x3f, 0x00, 0x00, 0x00};
  be.append(reinterpret_cast<const char*>(half), 4);
  CHECK(decode_pfm(be).data[0] == 0.5f);
}

TEST_CASE("pgm masks") {
  const Mask m = {1, 0, 0, 1, 1, 0};
  const std::string bytes = encode_pgm(m, 2, 3);
  CHECK(bytes.substr(0, 11) == "P5\n3 2\n255\n");
  std::size_t h = 0, w = 0;
  CHECK(decode_pgm(bytes, h, w) == m);
  CHECK(h == 2);
  CHECK(w == 3);
  std::string commented = "P5\n# made by hand\n3 2\n255\n" + bytes.substr(11);
  CHECK(decode_pgm(commented, h, w) == m);
  CHECK_THROWS(decode_pgm("P2\n1 1\n255\n1", h, w));
  CHECK_THROWS(decode_pgm(bytes.substr(0, bytes.size() - 1), h, w));
}

TEST_CASE("sample round trip") {
  Rng rng(12);
  PsSample s = testing::random_sample(rng, 9, 11, 4);
  s.metadata = {0xfedcba9876543210ULL, "metal", "blob"};
  TempDir tmp;
  const fs::path dir = tmp.path / "sample";
  write_sample(dir, s);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "mask.pgm"));
  const PsSample r = read_sample(dir);
  REQUIRE(r.count() == s.count());
  for (std::size_t k = 0; k < s.count(); ++k) {
    CHECK(r.lights[k].direction == s.lights[k].direction);
    CHECK(r.lights[k].intensity == s.lights[k].intensity);
    const auto a = s.images[k].values(), b = r.images[k].values();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= std::abs(a[i]) * 0x1.0p-24);
  }
  CHECK(r.mask == s.mask);
  REQUIRE(r.gt_normals);
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 11; ++x)
      if (s.mask[y * 11 + x]) CHECK((r.gt_normals->at(y, x) - s.gt_normals->at(y, x)).norm() < 1e-6);
  CHECK(r.metadata.seed == s.metadata.seed);
  CHECK(r.metadata.material_category == "metal");
  CHECK(r.metadata.mesh_source == "blob");

  // Writing again replaces the directory and leaves no staging folders.
  write_sample(dir, s);
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(tmp.path)) ++entries;
  CHECK(entries == 1);
  // Byte-stable output.
  const std::string manifest = read_file(dir / "manifest.json");
  write_sample(tmp.path / "again", s);
  CHECK(read_file(tmp.path / "again" / "manifest.json") == manifest);
  CHECK(read_file(tmp.path / "again" / "image_002.pfm") == read_file(dir / "image_002.pfm"));

  s.gt_normals.reset();
  write_sample(tmp.path / "nogt", s);
  CHECK(!read_sample(tmp.path / "nogt").gt_normals);
}

TEST_CASE("sample reading errors") {
  Rng rng(2);
  const PsSample s = testing::random_sample(rng, 8, 8, 3);
  TempDir tmp;
  const fs::path dir = tmp.path / "s";
  write_sample(dir, s);
  const std::string manifest = read_file(dir / "manifest.json");

  auto with_manifest = [&](const std::string& text) {
    write_text(dir / "manifest.json", text);
    return dir;
  };
  auto replace = [&](std::string text, const std::string& from, const std::string& to) {
    text.replace(text.find(from), from.size(), to);
    return text;
  };

  CHECK_THROWS_WITH_AS(read_sample(with_manifest(replace(manifest, "\"version\": 1", "\"version\": 2"))),
                       doctest::Contains("version 2"), FormatError);
  {
    // Drop the last light so only two remain.
    auto j = nlohmann::json::parse(manifest);
    j["lights"].erase(2);
    CHECK_THROWS_WITH(read_sample(with_manifest(j.dump())), doctest::Contains("at least 3"));
  }
  with_manifest(manifest);
  fs::remove(dir / "image_001.pfm");
  CHECK_THROWS_WITH(read_sample(dir), doctest::Contains("image_001.pfm"));
  CHECK_THROWS_WITH(read_sample(tmp.path / "nowhere"), doctest::Contains("manifest.json"));
  CHECK_THROWS_AS(read_sample(with_manifest("{not json")), FormatError);
}

TEST_CASE("png decoding") {
  TempDir tmp;
  FloatImage img{3, 2, 3, {0.0f, 0.25f, 0.5f, 0.75f, 1.0f, 0.1f, 0.2f, 0.3f, 0.4f, 0.6f, 0.7f, 0.8f,
                           0.9f, 0.05f, 0.15f, 0.35f, 0.45f, 0.55f}};
  write_png16(tmp.path / "a.png", img);
  const FloatImage back = read_png(tmp.path / "a.png");
  REQUIRE(back.channels == 3);
  REQUIRE(back.height == 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5f / 65535.0f + 1e-7f);
  CHECK_THROWS_AS(read_png(tmp.path / "missing.png"), FormatError);
  write_text(tmp.path / "junk.png", "not a png");
  CHECK_THROWS_AS(read_png(tmp.path / "junk.png"), FormatError);
}

TEST_CASE("diligent import") {
  TempDir tmp;
  const fs::path obj = tmp.path / "ballPNG";
  fs::create_directories(obj);
  Rng rng(5);
  const std::size_t k = 5, h = 6, w = 7;
  std::string dirs, ints;
  std::vector<FloatImage> images;
  for (std::size_t i = 0; i < k; ++i) {
    FloatImage img = random_image(rng, h, w, 3);
    for (float& v : img.data) v = std::abs(v) / 10.0f;
    char name[16];
    std::snprintf(name, sizeof name, "%03zu.png", i + 1);
    write_png16(obj / name, img);
    images.push_back(read_png(obj / name));
    const Vec3 d = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1).normalized();
    // Rounded like published files.
    char row[96];
    std::snprintf(row, sizeof row, "%.6f %.6f %.6f\n", d.x(), d.y(), d.z());
    dirs += row;
    std::snprintf(row, sizeof row, "%.3f %.3f %.3f\n", 1.0 + i, 1.5, 2.0);
    ints += row;
  }
  write_text(obj / "light_directions.txt", dirs);
  write_text(obj / "light_intensities.txt", ints);
  FloatImage mask{h, w, 1, std::vector<float>(h * w, 0.0f)};
  for (std::size_t i = 0; i < h * w; i += 2) mask.data[i] = 1.0f;
  write_png16(obj / "mask.png", mask);
  FloatImage normals{h, w, 3, std::vector<float>(h * w * 3, 0.0f)};
  for (std::size_t i = 0; i < h * w; ++i) normals.data[3 * i + 2] = 1.0f;
  write_pfm(obj / "Normal_gt.pfm", normals);

  const PsSample s = import_diligent(obj);
  CHECK(s.count() == k);
  CHECK(s.height() == h);
  CHECK(s.width() == w);
  for (std::size_t i = 0; i < k; ++i) {
    CHECK(std::abs(s.lights[i].direction.norm() - 1.0) < 1e-12);
    CHECK(s.lights[i].intensity[0] == 1.0 + static_cast<double>(i));
    const FloatImage back = image_from_tensor(s.images[i]);
    CHECK(back.data == images[i].data);
  }
  CHECK(s.mask[0] == 1);
  CHECK(s.mask[1] == 0);
  REQUIRE(s.gt_normals);
  CHECK(s.gt_normals->at(0, 0) == Vec3(0, 0, 1));
  CHECK(s.metadata.mesh_source == "diligent:ballPNG");

  // An explicit file list wins over numbering.
  write_text(obj / "filenames.txt", "005.png\n004.png\n003.png\n002.png\n001.png\n");
  const PsSample rev = import_diligent(obj);
  CHECK(image_from_tensor(rev.images[0]).data == images[4].data);
  fs::remove(obj / "filenames.txt");

  // Count mismatch names both counts.
  write_text(obj / "light_directions.txt", dirs + "0 0 1\n");
  CHECK_THROWS_WITH(import_diligent(obj), doctest::Contains("found 5 images but 6 light directions"));
  write_text(obj / "light_directions.txt", dirs);
  write_text(obj / "light_directions.txt", "0 0 1.1\n0 0 1\n0 0 1\n0 0 1\n0 0 1\n");
  CHECK_THROWS_WITH(import_diligent(obj), doctest::Contains("unit length"));
  write_text(obj / "light_directions.txt", dirs);
  fs::remove(obj / "light_intensities.txt");
  CHECK_THROWS_WITH(import_diligent(obj), doctest::Contains("light_intensities.txt"));
}

TEST_CASE("rendered sample survives the disk") {
  BlobField f = sample_blob_field(3);
  RenderJob job;
  job.mesh = marching_cubes(f, 40);
  Rng rng(3);
  job.material = sample_material(rng);
  job.lights = sample_lights(rng, 4);
  job.height = job.width = 16;
  job.seed = 3;
  const PsSample s = render(job);
  TempDir tmp;
  write_sample(tmp.path / "r", s);
  const PsSample r = read_sample(tmp.path / "r");
  CHECK(r.metadata.material_category == s.metadata.material_category);
  CHECK(r.mask == s.mask);
}
