#include <algorithm>
#include <cmath>
#include <numeric>

#include "msps/adam.hpp"
#include "msps/msnet.hpp"
#include "msps/ops.hpp"

namespace msps {

namespace {

std::size_t coverage(const Mask& mask, std::size_t width, std::size_t y0, std::size_t x0, std::size_t h,
                     std::size_t w) {
  std::size_t n = 0;
  for (std::size_t y = y0; y < y0 + h; ++y)
    for (std::size_t x = x0; x < x0 + w; ++x) n += mask[y * width + x] != 0;
  return n;
}

PsSample subset_lights(const PsSample& s, std::size_t count, Rng& rng) {
  if (count == 0 || count >= s.count()) return s;
  std::vector<std::size_t> idx(s.count());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
  PsSample out;
  out.mask = s.mask;
  out.gt_normals = s.gt_normals;
  out.metadata = s.metadata;
  for (std::size_t i = 0; i < count; ++i) {
    out.images.push_back(s.images[idx[i]]);
    out.lights.push_back(s.lights[idx[i]]);
  }
  return out;
}

}  // namespace

std::array<std::size_t, 4> choose_patch(const PsSample& sample, std::size_t patch, Rng& rng) {
  const std::size_t H = sample.height(), W = sample.width();
  const std::size_t h = std::min(patch, H), w = std::min(patch, W);
  const std::size_t need = static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(h * w)));
  std::array<std::size_t, 4> best{0, 0, h, w};
  std::size_t best_cover = 0;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const std::size_t y0 = rng.index(H - h + 1), x0 = rng.index(W - w + 1);
    const std::size_t c = coverage(sample.mask, W, y0, x0, h, w);
    if (c >= need) return {y0, x0, h, w};
    if (attempt == 0 || c > best_cover) {
      best = {y0, x0, h, w};
      best_cover = c;
    }
  }
  if (best_cover > 0) return best;
  // Centre the window on the first masked pixel so the loss is defined.
  const auto it = std::find_if(sample.mask.begin(), sample.mask.end(), [](std::uint8_t m) { return m != 0; });
  if (it == sample.mask.end()) throw Error("sample mask is empty");
  const std::size_t p = static_cast<std::size_t>(it - sample.mask.begin());
  const std::size_t py = p / W, px = p % W;
  const std::size_t y0 = std::min(py - std::min(py, h / 2), H - h);
  const std::size_t x0 = std::min(px - std::min(px, w / 2), W - w);
  return {y0, x0, h, w};
}

TrainResult train(NetWeights& weights, std::span<const PsSample> dataset, const TrainParams& params) {
  if (dataset.empty()) throw Error("training needs at least one sample");
  if (params.batch == 0 || params.patches_per_sample == 0 || params.patch == 0) {
    throw Error("batch, patches per sample and patch size must be positive");
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    dataset[i].validate();
    if (!dataset[i].gt_normals) throw Error("training sample " + std::to_string(i) + " has no ground-truth normals");
  }

  Rng rng(params.seed);
  std::vector<Tensor> parameters = weights.parameters();
  AdamState state = AdamState::zeros_like(parameters);
  AdamOptions options;
  options.lr = params.lr;

  // Each pass over `order` visits every sample patches_per_sample times.
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  auto next_index = [&] {
    if (cursor == order.size()) {
      order.clear();
      for (std::size_t i = 0; i < dataset.size(); ++i) order.insert(order.end(), params.patches_per_sample, i);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
      cursor = 0;
    }
    return order[cursor++];
  };

  TrainResult result;
  result.losses.reserve(params.steps);
  for (std::size_t step = 0; step < params.steps; ++step) {
    Graph graph;
    Tensor total;
    for (std::size_t b = 0; b < params.batch; ++b) {
      const PsSample& full = dataset[next_index()];
      const auto [y0, x0, h, w] = choose_patch(full, params.patch, rng);
      PsSample patch = subset_lights(full.crop(y0, x0, h, w), params.lights_per_patch, rng);
      Tensor pred = forward_multiscale_graph(&graph, weights, patch);
      Tensor loss = ops::masked_cosine_loss(&graph, pred, patch.gt_normals->to_tensor(), patch.mask);
      total = total.defined() ? ops::add(&graph, total, loss) : loss;
    }
    total = ops::scale(&graph, total, 1.0 / static_cast<double>(params.batch));
    result.losses.push_back(total.item());
    Gradients grads = graph.backward(total);
    std::vector<Tensor> g;
    g.reserve(parameters.size());
    for (const auto& p : parameters) g.push_back(grads.of(p));
    adam_step(parameters, g, state, options);
    if (params.on_step) params.on_step(step, result.losses.back());
  }
  return result;
}

}  // namespace msps
