#pragma once

#include <optional>
#include <vector>

#include "msps/sample.hpp"

namespace msps {

struct ClassicResult {
  NormalMap normals;
  /// Row-major H x W, 0 outside the mask and on flagged pixels.
  std::vector<double> albedo;
  /// Masked-in pixels whose solution vanished; their normal is (0,0,1).
  Mask flagged;
};

/// Least-squares b minimising |L b - i| for rows L = directions; nullopt
/// when L^T L is singular (determinant <= 1e-12).
std::optional<Vec3> l2_solve(const std::vector<Vec3>& directions, const std::vector<double>& observations);

/// Woodham least squares per masked pixel on the intensity-normalised,
/// channel-averaged observations.
ClassicResult l2_normals(const PsSample& sample);

}  // namespace msps
