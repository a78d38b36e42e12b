#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msps/rng.hpp"
#include "msps/sample.hpp"
#include "msps/tensor.hpp"

namespace msps {

struct NetConfig {
  std::size_t r0 = 8;
  std::size_t scale_multiplier = 2;
  std::size_t image_channels = 3;
  std::size_t channels = 64;
  std::size_t kernel = 3;
  double leaky_slope = 0.1;
  /// false: a single stage-1 pass at full resolution (the mono-scale model).
  bool multiscale = true;

  void validate() const;
};

/// Extractor (6 convolutions) followed by a regressor (3 convolutions), each
/// convolution stored as a weight/bias pair.
struct SubNet {
  std::vector<std::string> names;
  std::vector<Tensor> params;

  static SubNet init(const std::string& prefix, std::size_t in_channels, const NetConfig& config,
                     std::uint64_t seed);
  std::size_t in_channels() const;
  std::size_t parameter_count() const;
};

/// The two trained parameter sets: `stage1` runs at the coarsest scale,
/// `refine` at every later scale with the same weights.
struct NetWeights {
  NetConfig config;
  SubNet stage1;
  SubNet refine;

  static NetWeights init(const NetConfig& config, std::uint64_t seed);
  /// All trainable tensors, stage1 first.
  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names() const;
  NetWeights clone() const;
};

/// Per-pass record of a multi-scale forward.
struct StageTrace {
  std::vector<std::pair<std::size_t, std::size_t>> sizes;
  std::size_t coarse_passes = 0;
  std::size_t refine_passes = 0;
};

/// Image divided per channel by the light intensity, followed by three
/// constant direction planes and, when given, the three prior-normal planes.
/// A single-channel image is replicated across the intensity channels.
Tensor prepare_input(const Tensor& image, const LightSample& light, const NormalMap* prior = nullptr);

/// (ceil(H/2^(K-k)), ceil(W/2^(K-k))) for k = 0..K, K minimal with
/// r0 * 2^K >= max(H, W).
std::vector<std::pair<std::size_t, std::size_t>> resolution_schedule(std::size_t height, std::size_t width,
                                                                     std::size_t r0);

/// Bilinear enlargement followed by per-pixel renormalisation; vectors that
/// vanish become (0,0,1). The mask is resampled nearest-neighbour.
NormalMap upsample_normals(const NormalMap& n, std::size_t height, std::size_t width);

/// One sub-network pass over K prepared inputs [Cin,H,W].
NormalMap forward_stage(const SubNet& weights, std::span<const Tensor> inputs, double leaky_slope = 0.1);

/// Coarse-to-fine inference at the sample's full resolution.
NormalMap forward_multiscale(const NetWeights& weights, const PsSample& sample, StageTrace* trace = nullptr);

/// Differentiable multi-scale forward used in training. Returns [1,3,H,W]
/// unit normals.
Tensor forward_multiscale_graph(Graph* graph, const NetWeights& weights, const PsSample& sample,
                                StageTrace* trace = nullptr);

/// 1 - mean over masked pixels of <gt, pred>.
Tensor cosine_loss(const NormalMap& pred, const NormalMap& gt, const Mask& mask);

struct TrainParams {
  double lr = 1e-4;
  std::size_t batch = 3;
  std::size_t patches_per_sample = 32;
  std::size_t patch = 128;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  /// Random subset of lights used per patch; 0 keeps them all.
  std::size_t lights_per_patch = 0;
  /// Called after every step with (step index, batch loss).
  std::function<void(std::size_t, double)> on_step;
};

struct TrainResult {
  std::vector<double> losses;
};

/// Adam on the mean masked cosine loss of random patches. Weights are
/// updated in place; identical inputs give identical results.
TrainResult train(NetWeights& weights, std::span<const PsSample> dataset, const TrainParams& params);

/// Random patch window with at least 30% masked-in coverage when one can be
/// found in 100 tries. Returns (y0, x0, h, w).
std::array<std::size_t, 4> choose_patch(const PsSample& sample, std::size_t patch, Rng& rng);

void save_checkpoint(const std::filesystem::path& path, const NetWeights& weights);
NetWeights load_checkpoint(const std::filesystem::path& path);

}  // namespace msps
