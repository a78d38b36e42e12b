#pragma once

#include <map>
#include <string>
#include <vector>

#include "msps/sample.hpp"

namespace msps {

struct ErrorMap {
  std::size_t height = 0;
  std::size_t width = 0;
  /// Degrees, row-major; 0 outside the mask.
  std::vector<double> degrees;
  /// Intersection of the two input masks.
  Mask mask;
};

/// Per-pixel angle between unit normals over the shared mask.
ErrorMap angular_error_map(const NormalMap& pred, const NormalMap& gt);
double mean_angular_error(const NormalMap& pred, const NormalMap& gt);

/// object -> method -> mean angular error in degrees.
using BenchmarkResults = std::map<std::string, std::map<std::string, double>>;

struct BenchmarkReport {
  std::string csv;
  std::string table;
};

/// Objects sorted lexicographically; methods in `method_order` (default:
/// sorted). Every object must report every method. Per-method averages
/// close both outputs.
BenchmarkReport benchmark_report(const BenchmarkResults& results, std::vector<std::string> method_order = {});

/// Parses the CSV written by benchmark_report (average rows are skipped).
BenchmarkResults parse_benchmark_csv(const std::string& csv);

}  // namespace msps
