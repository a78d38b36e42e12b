#include "msps/adam.hpp"

#include <cmath>

namespace msps {

AdamState AdamState::zeros_like(std::span<const Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               const AdamOptions& options) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step parameter count", {params.size()}, {grads.size(), state.m.size()});
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape()) throw ShapeError("adam_step gradient", params[i].shape(), grads[i].shape());
    if (state.m[i].size() != params[i].numel() || state.v[i].size() != params[i].numel()) {
      throw ShapeError("adam_step state", params[i].shape(), {state.m[i].size()});
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_values();
    auto g = grads[i].values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * g[j];
      v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= options.lr * mhat / (std::sqrt(vhat) + options.eps);
    }
  }
}

}  // namespace msps
