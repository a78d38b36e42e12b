#include <cmath>

#include "msps/geom.hpp"
#include "msps/rng.hpp"

namespace msps {

double BlobField::value(const Vec3& x) const {
  double f = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double s2 = sigmas[i] * sigmas[i];
    f += amplitudes[i] * std::exp(-(x - centers[i]).squaredNorm() / (2.0 * s2));
  }
  return f;
}

Vec3 BlobField::gradient(const Vec3& x) const {
  Vec3 g = Vec3::Zero();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double s2 = sigmas[i] * sigmas[i];
    const Vec3 d = x - centers[i];
    g -= amplitudes[i] * std::exp(-d.squaredNorm() / (2.0 * s2)) / s2 * d;
  }
  return g;
}

void BlobField::validate() const {
  if (centers.empty()) throw Error("a blob field needs at least one blob");
  if (amplitudes.size() != centers.size() || sigmas.size() != centers.size()) {
    throw Error("blob field arrays differ in length");
  }
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (!(sigmas[i] > 0.0)) throw Error("blob sigma must be positive");
    if (!(amplitudes[i] > 0.0)) throw Error("blob amplitude must be positive");
  }
}

namespace {

// Coarse scan: some sample inside the solid, and the whole box boundary
// outside it, so the surface is closed and lies within the box.
bool surface_inside_unit_box(const BlobField& f) {
  constexpr int n = 32;
  bool any_inside = false;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      for (int k = 0; k <= n; ++k) {
        const Vec3 p(-1.0 + 2.0 * i / n, -1.0 + 2.0 * j / n, -1.0 + 2.0 * k / n);
        const bool boundary = i == 0 || j == 0 || k == 0 || i == n || j == n || k == n;
        const bool inside = f.value(p) > f.iso;
        if (boundary && inside) return false;
        any_inside = any_inside || inside;
      }
    }
  }
  return any_inside;
}

}  // namespace

BlobField sample_blob_field(std::uint64_t seed, const BlobPolicy& policy, int* attempts) {
  if (policy.min_blobs < 1 || policy.max_blobs < policy.min_blobs) throw Error("blob count range is empty");
  if (!(policy.min_sigma > 0.0) || policy.max_sigma < policy.min_sigma) throw Error("blob sigma range is empty");
  if (!(policy.min_amplitude > 0.0) || policy.max_amplitude < policy.min_amplitude) {
    throw Error("blob amplitude range is empty");
  }
  if (policy.max_attempts < 1) throw Error("max_attempts must be positive");
  Rng rng(seed);
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    BlobField f;
    f.iso = policy.iso;
    const auto span = static_cast<std::size_t>(policy.max_blobs - policy.min_blobs + 1);
    const int count = policy.min_blobs + static_cast<int>(rng.index(span));
    for (int b = 0; b < count; ++b) {
      const double e = policy.center_extent;
      f.centers.emplace_back(rng.uniform(-e, e), rng.uniform(-e, e), rng.uniform(-e, e));
      f.sigmas.push_back(rng.uniform(policy.min_sigma, policy.max_sigma));
      f.amplitudes.push_back(rng.uniform(policy.min_amplitude, policy.max_amplitude));
    }
    if (surface_inside_unit_box(f)) {
      if (attempts) *attempts = attempt;
      return f;
    }
  }
  if (attempts) *attempts = policy.max_attempts;
  throw Error("no blob field with a surface inside the unit box after " + std::to_string(policy.max_attempts) +
              " attempts");
}

}  // namespace msps
