#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "msps/tensor.hpp"

namespace msps {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates plus the step counter.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(std::span<const Tensor> params);
};

/// One bias-corrected Adam update, applied in place to the parameter storage.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               const AdamOptions& options);

}  // namespace msps
