#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

#include "msps/evalkit.hpp"

namespace msps {

ErrorMap angular_error_map(const NormalMap& pred, const NormalMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("angular error maps", {gt.height, gt.width}, {pred.height, pred.width});
  }
  ErrorMap out;
  out.height = gt.height;
  out.width = gt.width;
  const std::size_t hw = gt.height * gt.width;
  out.degrees.assign(hw, 0.0);
  out.mask.assign(hw, 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < hw; ++i) {
    if (!pred.mask[i] || !gt.mask[i]) continue;
    const std::size_t y = i / gt.width, x = i % gt.width;
    // atan2 of sine and cosine: exactly 0 for identical vectors, and well
    // conditioned near 0 and 180 degrees where acos loses digits.
    const Vec3 a = pred.at(y, x), b = gt.at(y, x);
    out.degrees[i] = std::atan2(a.cross(b).norm(), a.dot(b)) * 180.0 / std::numbers::pi;
    out.mask[i] = 1;
    ++count;
  }
  if (count == 0) throw Error("normal maps share no masked pixel");
  return out;
}

double mean_angular_error(const NormalMap& pred, const NormalMap& gt) {
  const ErrorMap e = angular_error_map(pred, gt);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < e.degrees.size(); ++i) {
    if (!e.mask[i]) continue;
    sum += e.degrees[i];
    ++count;
  }
  return sum / static_cast<double>(count);
}

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

BenchmarkReport benchmark_report(const BenchmarkResults& results, std::vector<std::string> method_order) {
  if (results.empty()) throw Error("benchmark report needs at least one result");
  std::set<std::string> all_methods;
  for (const auto& [object, row] : results) {
    for (const auto& [method, mae] : row) {
      all_methods.insert(method);
      if (!std::isfinite(mae)) throw Error("non-finite error for " + object + "/" + method);
    }
  }
  if (method_order.empty()) {
    method_order.assign(all_methods.begin(), all_methods.end());
  } else {
    for (const auto& m : all_methods) {
      if (std::find(method_order.begin(), method_order.end(), m) == method_order.end()) {
        throw Error("method '" + m + "' missing from the declared method order");
      }
    }
  }
  std::string missing;
  for (const auto& [object, row] : results) {
    for (const auto& m : method_order) {
      if (!row.count(m)) missing += (missing.empty() ? "" : ", ") + object + "/" + m;
    }
  }
  if (!missing.empty()) throw Error("benchmark results are ragged; missing " + missing);

  std::vector<double> averages;
  for (const auto& m : method_order) {
    double sum = 0.0;
    for (const auto& [object, row] : results) sum += row.at(m);
    averages.push_back(sum / static_cast<double>(results.size()));
  }

  std::string csv = "object,method,mae_deg\n";
  for (const auto& [object, row] : results) {
    for (const auto& m : method_order) csv += object + "," + m + "," + fixed(row.at(m), 6) + "\n";
  }
  for (std::size_t j = 0; j < method_order.size(); ++j) {
    csv += "average," + method_order[j] + "," + fixed(averages[j], 6) + "\n";
  }

  std::size_t first = std::string("average").size();
  for (const auto& [object, row] : results) first = std::max(first, object.size());
  std::vector<std::size_t> widths;
  for (const auto& m : method_order) widths.push_back(std::max<std::size_t>(m.size(), 8));
  std::ostringstream t;
  auto cell = [&t](const std::string& s, std::size_t width, bool left) {
    t << (left ? std::left : std::right) << std::setw(static_cast<int>(width)) << s;
  };
  cell("object", first, true);
  for (std::size_t j = 0; j < method_order.size(); ++j) {
    t << "  ";
    cell(method_order[j], widths[j], false);
  }
  t << "\n";
  for (const auto& [object, row] : results) {
    cell(object, first, true);
    for (std::size_t j = 0; j < method_order.size(); ++j) {
      t << "  ";
      cell(fixed(row.at(method_order[j]), 2), widths[j], false);
    }
    t << "\n";
  }
  cell("average", first, true);
  for (std::size_t j = 0; j < method_order.size(); ++j) {
    t << "  ";
    cell(fixed(averages[j], 2), widths[j], false);
  }
  t << "\n";
  return {csv, t.str()};
}

BenchmarkResults parse_benchmark_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "object,method,mae_deg") throw FormatError("bad benchmark CSV header");
  BenchmarkResults out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b) throw FormatError("benchmark CSV line " + std::to_string(n) + " is malformed");
    const std::string object = line.substr(0, a);
    if (object == "average") continue;
    try {
      out[object][line.substr(a + 1, b - a - 1)] = std::stod(line.substr(b + 1));
    } catch (const std::exception&) {
      throw FormatError("benchmark CSV line " + std::to_string(n) + " has a bad number");
    }
  }
  return out;
}

}  // namespace msps
