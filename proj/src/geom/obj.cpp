#include <charconv>
#include <cmath>
#include <sstream>
#include <string>

#include "msps/geom.hpp"

namespace msps {

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw FormatError("OBJ line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& tok, std::size_t line) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || end != tok.data() + tok.size() || !std::isfinite(v)) fail(line, "bad number '" + tok + "'");
  return v;
}

// Resolves a 1-based or negative (relative) OBJ index against `count` items.
std::size_t resolve_index(const std::string& tok, std::size_t count, std::size_t line) {
  long v = 0;
  const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || end != tok.data() + tok.size() || v == 0) fail(line, "bad index '" + tok + "'");
  const long resolved = v > 0 ? v - 1 : static_cast<long>(count) + v;
  if (resolved < 0 || resolved >= static_cast<long>(count)) fail(line, "index " + tok + " out of range");
  return static_cast<std::size_t>(resolved);
}

}  // namespace

TriMesh load_obj(std::istream& in) {
  std::vector<Vec3> positions, normals;
  // Face corners as (position, normal or npos).
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> polygons;
  constexpr std::size_t none = static_cast<std::size_t>(-1);

  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    std::string key;
    if (!(ls >> key)) continue;
    std::vector<std::string> args;
    for (std::string t; ls >> t;) args.push_back(t);

    if (key == "v") {
      if (args.size() < 3 || args.size() > 4) fail(line, "vertex needs 3 coordinates");
      positions.emplace_back(parse_double(args[0], line), parse_double(args[1], line), parse_double(args[2], line));
    } else if (key == "vn") {
      if (args.size() != 3) fail(line, "normal needs 3 components");
      Vec3 n(parse_double(args[0], line), parse_double(args[1], line), parse_double(args[2], line));
      if (!(n.norm() > 0.0)) fail(line, "zero-length normal");
      normals.push_back(n.normalized());
    } else if (key == "f") {
      if (args.size() < 3) fail(line, "face needs at least 3 vertices");
      std::vector<std::pair<std::size_t, std::size_t>> poly;
      for (const auto& a : args) {
        std::vector<std::string> parts;
        std::size_t start = 0;
        for (std::size_t slash; (slash = a.find('/', start)) != std::string::npos; start = slash + 1) {
          parts.push_back(a.substr(start, slash - start));
        }
        parts.push_back(a.substr(start));
        if (parts.size() > 3) fail(line, "bad face entry '" + a + "'");
        const std::size_t p = resolve_index(parts[0], positions.size(), line);
        std::size_t n = none;
        if (parts.size() == 3 && !parts[2].empty()) n = resolve_index(parts[2], normals.size(), line);
        poly.emplace_back(p, n);
      }
      polygons.push_back(std::move(poly));
    } else if (key == "l" || key == "p") {
      fail(line, "non-polygonal primitive '" + key + "'");
    } else if (key == "vt" || key == "o" || key == "g" || key == "s" || key == "usemtl" || key == "mtllib" ||
               key == "vp") {
      continue;
    } else {
      fail(line, "unknown statement '" + key + "'");
    }
  }

  TriMesh mesh;
  mesh.vertices = positions;
  mesh.normals.assign(positions.size(), Vec3::Zero());
  // Corners carrying an explicit normal become their own vertex per
  // distinct (position, normal) pair.
  std::map<std::pair<std::size_t, std::size_t>, std::uint32_t> split;
  auto vertex_for = [&](const std::pair<std::size_t, std::size_t>& c) -> std::uint32_t {
    if (c.second == none) return static_cast<std::uint32_t>(c.first);
    auto [it, fresh] = split.emplace(c, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (fresh) {
      mesh.vertices.push_back(positions[c.first]);
      mesh.normals.push_back(normals[c.second]);
    }
    return it->second;
  };

  std::vector<Vec3> acc(positions.size(), Vec3::Zero());
  for (const auto& poly : polygons) {
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
      std::array<std::uint32_t, 3> face = {vertex_for(poly[0]), vertex_for(poly[k]), vertex_for(poly[k + 1])};
      const Vec3 c = (mesh.vertices[face[1]] - mesh.vertices[face[0]]).cross(mesh.vertices[face[2]] - mesh.vertices[face[0]]);
      if (c.norm() == 0.0) continue;
      // Twice the area, so the sum weights by area.
      for (auto v : {poly[0].first, poly[k].first, poly[k + 1].first}) acc[v] += c;
      mesh.faces.push_back(face);
    }
  }
  for (std::size_t v = 0; v < positions.size(); ++v) {
    mesh.normals[v] = acc[v].norm() > 0.0 ? Vec3(acc[v].normalized()) : Vec3::UnitZ();
  }
  return mesh;
}

}  // namespace msps
