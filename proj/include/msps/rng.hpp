#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace msps {

/// Seeded 64-bit generator. Floating-point draws are built from raw engine
/// bits so sequences do not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Standard normal via Box-Muller.
  double normal();

  /// Independent seed for sub-stream `stream` of `seed` (splitmix64 finaliser).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

}  // namespace msps
