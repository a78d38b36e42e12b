#include <Eigen/LU>

#include "msps/classic.hpp"
#include "msps/msnet.hpp"

namespace msps {

std::optional<Vec3> l2_solve(const std::vector<Vec3>& directions, const std::vector<double>& observations) {
  if (directions.size() != observations.size()) throw Error("one observation per light is required");
  Eigen::Matrix3d gram = Eigen::Matrix3d::Zero();
  Vec3 rhs = Vec3::Zero();
  for (std::size_t k = 0; k < directions.size(); ++k) {
    gram += directions[k] * directions[k].transpose();
    rhs += observations[k] * directions[k];
  }
  if (!(std::abs(gram.determinant()) > 1e-12)) return std::nullopt;
  return Vec3(gram.inverse() * rhs);
}

ClassicResult l2_normals(const PsSample& sample) {
  sample.validate();
  const std::size_t k = sample.count(), h = sample.height(), w = sample.width(), hw = h * w;

  Eigen::MatrixXd lights(static_cast<Eigen::Index>(k), 3);
  for (std::size_t j = 0; j < k; ++j) lights.row(static_cast<Eigen::Index>(j)) = sample.lights[j].direction.transpose();
  const Eigen::Matrix3d gram = lights.transpose() * lights;
  const double det = gram.determinant();
  if (!(std::abs(det) > 1e-12)) throw Error("light directions do not span three dimensions");
  const Eigen::Matrix3d inv = gram.inverse();
  // Rows of the pseudo-inverse, applied to every pixel.
  const Eigen::MatrixXd pinv = inv * lights.transpose();

  // Grayscale observation per light and pixel.
  Eigen::MatrixXd obs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
  for (std::size_t j = 0; j < k; ++j) {
    const Tensor p = prepare_input(sample.images[j], sample.lights[j]);
    const auto v = p.values();
    for (std::size_t i = 0; i < hw; ++i) {
      obs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = (v[i] + v[hw + i] + v[2 * hw + i]) / 3.0;
    }
  }

  ClassicResult out;
  out.normals = NormalMap(h, w);
  out.normals.mask = sample.mask;
  out.albedo.assign(hw, 0.0);
  out.flagged.assign(hw, 0);
  for (std::size_t i = 0; i < hw; ++i) {
    if (!sample.mask[i]) continue;
    const Vec3 b = pinv * obs.col(static_cast<Eigen::Index>(i));
    const double rho = b.norm();
    if (!(rho > 0.0) || !std::isfinite(rho)) {
      out.flagged[i] = 1;
      out.normals.set(i / w, i % w, Vec3::UnitZ());
      continue;
    }
    out.albedo[i] = rho;
    out.normals.set(i / w, i % w, b / rho);
  }
  return out;
}

}  // namespace msps
