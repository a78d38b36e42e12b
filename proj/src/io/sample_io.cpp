#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "msps/dataio.hpp"
#include "msps/fsutil.hpp"

namespace msps {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

std::string image_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "image_%03zu.pfm", k);
  return buf;
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("manifest lacks '") + key + "'");
  return j.at(key);
}

Vec3 vec3(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw FormatError(std::string("manifest ") + what + " must have 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

fs::path existing(const fs::path& dir, const std::string& name) {
  const fs::path p = dir / name;
  if (!fs::is_regular_file(p)) throw Error("sample file missing: " + p.string());
  return p;
}

}  // namespace

void write_sample(const fs::path& dir, const PsSample& sample) {
  sample.validate();
  const std::size_t h = sample.height(), w = sample.width();
  fs::path target = fs::absolute(dir).lexically_normal();
  if (target.filename().empty()) target = target.parent_path();
  const fs::path staging = target.string() + ".staging" + std::to_string(::getpid());
  fs::remove_all(staging);
  fs::create_directories(staging);
  try {
    Json manifest;
    manifest["version"] = kManifestVersion;
    manifest["height"] = h;
    manifest["width"] = w;
    manifest["channels"] = sample.channels();
    Json lights = Json::array();
    for (std::size_t k = 0; k < sample.count(); ++k) {
      write_pfm(staging / image_name(k), image_from_tensor(sample.images[k]));
      const auto& l = sample.lights[k];
      lights.push_back({{"image", image_name(k)},
                        {"direction", {l.direction.x(), l.direction.y(), l.direction.z()}},
                        {"intensity", {l.intensity[0], l.intensity[1], l.intensity[2]}}});
    }
    manifest["lights"] = lights;
    atomic_write(staging / "mask.pgm", encode_pgm(sample.mask, h, w));
    manifest["mask"] = "mask.pgm";
    if (sample.gt_normals) {
      write_pfm(staging / "normals.pfm", image_from_normals(*sample.gt_normals));
      manifest["normal_gt"] = "normals.pfm";
    } else {
      manifest["normal_gt"] = nullptr;
    }
    manifest["metadata"] = {{"seed", sample.metadata.seed},
                            {"material_category", sample.metadata.material_category},
                            {"mesh_source", sample.metadata.mesh_source}};
    atomic_write(staging / "manifest.json", manifest.dump(2) + "\n");

    // Swap the finished directory into place.
    if (fs::exists(target)) {
      const fs::path old = target.string() + ".old" + std::to_string(::getpid());
      fs::remove_all(old);
      fs::rename(target, old);
      fs::rename(staging, target);
      fs::remove_all(old);
    } else {
      if (target.has_parent_path()) fs::create_directories(target.parent_path());
      fs::rename(staging, target);
    }
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
}

PsSample read_sample(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) throw Error("sample file missing: " + manifest_path.string());
  Json m;
  try {
    m = Json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  try {
    const int version = field(m, "version").get<int>();
    if (version != kManifestVersion) {
      throw FormatError("unsupported manifest version " + std::to_string(version));
    }
    const auto h = field(m, "height").get<std::size_t>();
    const auto w = field(m, "width").get<std::size_t>();
    const auto c = field(m, "channels").get<std::size_t>();
    const Json& lights = field(m, "lights");
    if (!lights.is_array() || lights.size() < 3) {
      throw FormatError("manifest lists " + std::to_string(lights.is_array() ? lights.size() : 0) +
                        " lights; at least 3 are required");
    }
    PsSample s;
    for (const auto& entry : lights) {
      LightSample l;
      l.direction = vec3(field(entry, "direction"), "direction");
      const Vec3 e = vec3(field(entry, "intensity"), "intensity");
      l.intensity = {e.x(), e.y(), e.z()};
      l.validate();
      const FloatImage img = read_pfm(existing(dir, field(entry, "image").get<std::string>()));
      if (img.height != h || img.width != w || img.channels != c) {
        throw ShapeError("sample image", {c, h, w}, {img.channels, img.height, img.width});
      }
      s.images.push_back(tensor_from_image(img));
      s.lights.push_back(l);
    }
    std::size_t mh = 0, mw = 0;
    const fs::path mask_path = existing(dir, field(m, "mask").get<std::string>());
    s.mask = decode_pgm(read_file(mask_path), mh, mw);
    if (mh != h || mw != w) throw ShapeError("sample mask", {h, w}, {mh, mw});
    const Json& gt = field(m, "normal_gt");
    if (!gt.is_null()) {
      const FloatImage n = read_pfm(existing(dir, gt.get<std::string>()));
      if (n.height != h || n.width != w) throw ShapeError("sample normals", {3, h, w}, {n.channels, n.height, n.width});
      s.gt_normals = normals_from_image(n, s.mask);
    }
    const Json& meta = field(m, "metadata");
    s.metadata.seed = field(meta, "seed").get<std::uint64_t>();
    s.metadata.material_category = field(meta, "material_category").get<std::string>();
    s.metadata.mesh_source = field(meta, "mesh_source").get<std::string>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
}

namespace {

std::vector<std::array<double, 3>> read_rows(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw Error("missing " + path.filename().string() + " in " + path.parent_path().string());
  std::istringstream in(read_file(path));
  std::vector<std::array<double, 3>> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream ls(line);
    std::array<double, 3> r{};
    if (!(ls >> r[0])) continue;  // blank line
    if (!(ls >> r[1] >> r[2])) {
      throw FormatError(path.filename().string() + " line " + std::to_string(n) + ": expected 3 numbers");
    }
    rows.push_back(r);
  }
  return rows;
}

bool numbered(const fs::path& p) {
  const std::string ext = p.extension().string();
  if (ext != ".png" && ext != ".pfm") return false;
  const std::string stem = p.stem().string();
  return !stem.empty() && std::all_of(stem.begin(), stem.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
}

FloatImage load_any(const fs::path& p) { return p.extension() == ".pfm" ? read_pfm(p) : read_png(p); }

}  // namespace

PsSample import_diligent(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  const auto directions = read_rows(dir / "light_directions.txt");
  const auto intensities = read_rows(dir / "light_intensities.txt");

  std::vector<fs::path> files;
  if (fs::is_regular_file(dir / "filenames.txt")) {
    std::istringstream in(read_file(dir / "filenames.txt"));
    for (std::string name; in >> name;) files.push_back(dir / name);
  } else {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && numbered(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
      const std::string sa = a.stem().string(), sb = b.stem().string();
      return sa.size() != sb.size() ? sa.size() < sb.size() : sa < sb;
    });
  }
  if (files.size() != directions.size() || files.size() != intensities.size()) {
    throw Error("found " + std::to_string(files.size()) + " images but " + std::to_string(directions.size()) +
                " light directions and " + std::to_string(intensities.size()) + " light intensities");
  }
  if (files.size() < 3) throw Error("DiLiGenT directory holds fewer than 3 images");

  PsSample s;
  for (std::size_t k = 0; k < files.size(); ++k) {
    if (!fs::is_regular_file(files[k])) throw Error("image missing: " + files[k].string());
    const FloatImage img = load_any(files[k]);
    if (k > 0 && (img.height != s.height() || img.width != s.width() || img.channels != s.channels())) {
      throw ShapeError(files[k].filename().string(), {s.channels(), s.height(), s.width()},
                       {img.channels, img.height, img.width});
    }
    s.images.push_back(tensor_from_image(img));
    LightSample l;
    Vec3 d(directions[k][0], directions[k][1], directions[k][2]);
    if (std::abs(d.norm() - 1.0) > 1e-3) {
      throw FormatError("light direction " + std::to_string(k + 1) + " is not unit length");
    }
    l.direction = d.normalized();
    l.intensity = intensities[k];
    l.validate();
    s.lights.push_back(l);
  }

  fs::path mask_path;
  for (const char* name : {"mask.png", "mask.pgm"}) {
    if (fs::is_regular_file(dir / name)) {
      mask_path = dir / name;
      break;
    }
  }
  if (mask_path.empty()) throw Error("missing mask.png in " + dir.string());
  if (mask_path.extension() == ".pgm") {
    std::size_t mh = 0, mw = 0;
    s.mask = decode_pgm(read_file(mask_path), mh, mw);
    if (mh != s.height() || mw != s.width()) throw ShapeError("mask", {s.height(), s.width()}, {mh, mw});
  } else {
    const FloatImage m = read_png(mask_path);
    if (m.height != s.height() || m.width != s.width()) {
      throw ShapeError("mask", {s.height(), s.width()}, {m.height, m.width});
    }
    s.mask.assign(m.height * m.width, 0);
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
      for (std::size_t c = 0; c < m.channels; ++c) s.mask[i] |= m.data[i * m.channels + c] > 0.0f ? 1 : 0;
    }
  }
  for (const char* name : {"Normal_gt.pfm", "normal_gt.pfm"}) {
    if (!fs::is_regular_file(dir / name)) continue;
    const FloatImage n = read_pfm(dir / name);
    if (n.height != s.height() || n.width != s.width()) {
      throw ShapeError("ground-truth normals", {3, s.height(), s.width()}, {n.channels, n.height, n.width});
    }
    s.gt_normals = normals_from_image(n, s.mask);
    break;
  }
  s.metadata.material_category = "real";
  fs::path name = fs::absolute(dir).lexically_normal();
  if (name.filename().empty()) name = name.parent_path();
  s.metadata.mesh_source = "diligent:" + name.filename().string();
  s.validate();
  return s;
}

}  // namespace msps
