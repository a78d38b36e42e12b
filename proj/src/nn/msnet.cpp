#include "msps/msnet.hpp"

#include <algorithm>
#include <cmath>

#include "msps/ops.hpp"

namespace msps {

namespace {

constexpr std::size_t kExtractorLayers = 6;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

const Tensor& weight_of(const SubNet& net, std::size_t layer) { return net.params.at(2 * layer); }
const Tensor& bias_of(const SubNet& net, std::size_t layer) { return net.params.at(2 * layer + 1); }

Tensor conv_act(Graph* g, const SubNet& net, std::size_t layer, const Tensor& x, int stride, double slope) {
  const int pad = static_cast<int>(weight_of(net, layer).dim(2) / 2);
  return ops::leaky_relu(g, ops::conv2d(g, x, weight_of(net, layer), bias_of(net, layer), stride, pad), slope);
}

// [N,Cin,H,W] -> [N,C,H,W]. Two stride-2 stages, each undone by bilinear
// enlargement followed by a convolution.
Tensor extract(Graph* g, const SubNet& net, const Tensor& x, double slope) {
  const std::size_t h = x.dim(2), w = x.dim(3);
  Tensor a = conv_act(g, net, 0, x, 1, slope);
  Tensor b = conv_act(g, net, 1, a, 2, slope);
  Tensor c = conv_act(g, net, 2, b, 1, slope);
  Tensor d = conv_act(g, net, 3, c, 2, slope);
  Tensor e = conv_act(g, net, 4, ops::bilinear_upsample(g, d, b.dim(2), b.dim(3)), 1, slope);
  return conv_act(g, net, 5, ops::bilinear_upsample(g, e, h, w), 1, slope);
}

// [1,C,H,W] -> unit normals [1,3,H,W].
Tensor regress(Graph* g, const SubNet& net, const Tensor& f, double slope) {
  Tensor a = conv_act(g, net, 6, f, 1, slope);
  Tensor b = conv_act(g, net, 7, a, 1, slope);
  const int pad = static_cast<int>(weight_of(net, 8).dim(2) / 2);
  return ops::normalize_channels(g, ops::conv2d(g, b, weight_of(net, 8), bias_of(net, 8), 1, pad));
}

// Streams the inputs through the extractor one at a time with a running
// maximum when no graph is recording; batches them otherwise.
Tensor run_stage(Graph* g, const SubNet& net, std::span<const Tensor> inputs, const Tensor& prior, double slope) {
  if (inputs.empty()) throw Error("a stage needs at least one input");
  for (const auto& in : inputs) {
    if (in.shape() != inputs[0].shape()) throw ShapeError("stage input", inputs[0].shape(), in.shape());
  }
  const std::size_t cin = inputs[0].dim(1) + (prior.defined() ? prior.dim(1) : 0);
  if (cin != net.in_channels()) {
    throw ShapeError("stage input channels", {1, net.in_channels(), inputs[0].dim(2), inputs[0].dim(3)},
                     {1, cin, inputs[0].dim(2), inputs[0].dim(3)});
  }

  Tensor fused;
  if (g == nullptr) {
    for (const auto& in : inputs) {
      Tensor x = in;
      if (prior.defined()) {
        std::vector<Tensor> parts = {in, prior};
        x = ops::concat(nullptr, parts, 1);
      }
      Tensor f = extract(nullptr, net, x, slope);
      if (!fused.defined()) {
        fused = f;
      } else {
        std::vector<Tensor> pair = {fused, f};
        fused = ops::max_over_set(nullptr, pair);
      }
    }
  } else {
    Tensor x = ops::concat(nullptr, inputs, 0);
    if (prior.defined()) {
      std::vector<Tensor> parts = {x, ops::broadcast_batch(g, prior, inputs.size())};
      x = ops::concat(g, parts, 1);
    }
    fused = ops::max_over_batch(g, extract(g, net, x, slope));
  }
  return regress(g, net, fused, slope);
}

// Per-light [1,C,H,W] images divided by intensity, at full resolution.
std::vector<Tensor> normalized_images(const PsSample& sample, std::size_t channels) {
  std::vector<Tensor> out;
  out.reserve(sample.count());
  for (std::size_t k = 0; k < sample.count(); ++k) {
    Tensor p = prepare_input(sample.images[k], sample.lights[k]);
    const std::size_t h = p.dim(1), w = p.dim(2);
    if (p.dim(0) - 3 != channels) {
      throw ShapeError("sample image channels", {channels, h, w}, {p.dim(0) - 3, h, w});
    }
    std::vector<double> v(p.values().begin(), p.values().begin() + static_cast<long>(channels * h * w));
    out.emplace_back(Shape{1, channels, h, w}, std::move(v));
  }
  return out;
}

Tensor direction_planes(const Vec3& d, std::size_t h, std::size_t w) {
  std::vector<double> v(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c) std::fill_n(v.begin() + static_cast<long>(c * h * w), h * w, d[static_cast<long>(c)]);
  return Tensor({1, 3, h, w}, std::move(v));
}

Tensor multiscale(Graph* g, const NetWeights& weights, const PsSample& sample, StageTrace* trace) {
  sample.validate();
  const NetConfig& cfg = weights.config;
  const std::size_t H = sample.height(), W = sample.width();
  std::vector<std::pair<std::size_t, std::size_t>> sizes;
  if (cfg.multiscale) {
    sizes = resolution_schedule(H, W, cfg.r0);
  } else {
    sizes = {{H, W}};
  }
  const auto images = normalized_images(sample, cfg.image_channels);

  Tensor prior;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    const auto [h, w] = sizes[s];
    std::vector<Tensor> inputs;
    inputs.reserve(images.size());
    for (std::size_t k = 0; k < images.size(); ++k) {
      std::vector<Tensor> parts = {ops::area_downsample(nullptr, images[k], h, w),
                                   direction_planes(sample.lights[k].direction, h, w)};
      inputs.push_back(ops::concat(nullptr, parts, 1));
    }
    if (prior.defined()) prior = ops::normalize_channels(g, ops::bilinear_upsample(g, prior, h, w));
    const SubNet& net = s == 0 ? weights.stage1 : weights.refine;
    prior = run_stage(g, net, inputs, s == 0 ? Tensor() : prior, cfg.leaky_slope);
    if (trace) {
      trace->sizes.emplace_back(h, w);
      ++(s == 0 ? trace->coarse_passes : trace->refine_passes);
    }
  }
  return prior;
}

}  // namespace

void NetConfig::validate() const {
  if (r0 < 4) throw Error("r0 must be at least 4");
  if (scale_multiplier != 2) throw Error("the scale multiplier must be 2");
  if (image_channels == 0 || channels == 0) throw Error("channel counts must be positive");
  if (kernel % 2 == 0) throw Error("kernel size must be odd");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw Error("leaky slope must lie in [0, 1)");
}

SubNet SubNet::init(const std::string& prefix, std::size_t in_channels, const NetConfig& config,
                    std::uint64_t seed) {
  Rng rng(seed);
  SubNet net;
  const std::size_t k = config.kernel, c = config.channels;
  auto add_layer = [&](const std::string& name, std::size_t cin, std::size_t cout, bool activated) {
    const double fan_in = static_cast<double>(cin * k * k);
    const double gain = activated ? 2.0 / (1.0 + config.leaky_slope * config.leaky_slope) : 1.0;
    const double sd = std::sqrt(gain / fan_in);
    Tensor w({cout, cin, k, k}, true);
    for (double& v : w.mutable_values()) v = sd * rng.normal();
    net.names.push_back(prefix + "." + name + ".w");
    net.params.push_back(w);
    net.names.push_back(prefix + "." + name + ".b");
    net.params.emplace_back(Shape{cout}, true);
  };
  for (std::size_t i = 0; i < kExtractorLayers; ++i) add_layer("e" + std::to_string(i + 1), i == 0 ? in_channels : c, c, true);
  add_layer("r1", c, c, true);
  add_layer("r2", c, c, true);
  add_layer("r3", c, 3, false);
  return net;
}

std::size_t SubNet::in_channels() const { return weight_of(*this, 0).dim(1); }

std::size_t SubNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.numel();
  return n;
}

NetWeights NetWeights::init(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  NetWeights w;
  w.config = config;
  w.stage1 = SubNet::init("stage1", config.image_channels + 3, config, Rng::derive(seed, 1));
  w.refine = SubNet::init("refine", config.image_channels + 6, config, Rng::derive(seed, 2));
  return w;
}

std::vector<Tensor> NetWeights::parameters() const {
  std::vector<Tensor> all = stage1.params;
  all.insert(all.end(), refine.params.begin(), refine.params.end());
  return all;
}

std::vector<std::string> NetWeights::parameter_names() const {
  std::vector<std::string> all = stage1.names;
  all.insert(all.end(), refine.names.begin(), refine.names.end());
  return all;
}

NetWeights NetWeights::clone() const {
  NetWeights out = *this;
  for (auto& p : out.stage1.params) p = p.clone(true);
  for (auto& p : out.refine.params) p = p.clone(true);
  return out;
}

Tensor prepare_input(const Tensor& image, const LightSample& light, const NormalMap* prior) {
  if (image.rank() != 3) throw ShapeError("prepare_input image", {3, 0, 0}, image.shape());
  for (double i : light.intensity) {
    if (!(i > 0.0)) throw Error("light intensity must be positive");
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2), hw = h * w;
  if (c != 1 && c != 3) throw ShapeError("prepare_input image channels", {3, h, w}, image.shape());
  const std::size_t out_c = 3 + 3 + (prior ? 3 : 0);
  std::vector<double> v(out_c * hw);
  auto src = image.values();
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const std::size_t from = c == 1 ? 0 : ch;
    const double intensity = light.intensity[ch];
    for (std::size_t p = 0; p < hw; ++p) v[ch * hw + p] = src[from * hw + p] / intensity;
  }
  for (std::size_t ch = 0; ch < 3; ++ch) {
    std::fill_n(v.begin() + static_cast<long>((3 + ch) * hw), hw, light.direction[static_cast<long>(ch)]);
  }
  if (prior) {
    if (prior->height != h || prior->width != w) {
      throw ShapeError("prepare_input prior", {h, w}, {prior->height, prior->width});
    }
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < 3; ++ch) v[(6 + ch) * hw + p] = prior->values[3 * p + ch];
  }
  return Tensor({out_c, h, w}, std::move(v));
}

std::vector<std::pair<std::size_t, std::size_t>> resolution_schedule(std::size_t height, std::size_t width,
                                                                     std::size_t r0) {
  if (r0 == 0) throw Error("r0 must be positive");
  if (height < r0 || width < r0) {
    throw Error("image " + std::to_string(height) + "x" + std::to_string(width) + " is smaller than r0 = " +
                std::to_string(r0));
  }
  const std::size_t longest = std::max(height, width);
  std::size_t levels = 0;
  while ((r0 << levels) < longest) ++levels;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 0; k <= levels; ++k) {
    const std::size_t div = std::size_t{1} << (levels - k);
    out.emplace_back(ceil_div(height, div), ceil_div(width, div));
  }
  return out;
}

NormalMap upsample_normals(const NormalMap& n, std::size_t height, std::size_t width) {
  if (height < n.height || width < n.width) {
    throw ShapeError("upsample_normals cannot downscale", {n.height, n.width}, {height, width});
  }
  Tensor up = ops::normalize_channels(nullptr, ops::bilinear_upsample(nullptr, n.to_tensor(), height, width));
  Mask mask(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(n.height - 1, y * n.height / height);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(n.width - 1, x * n.width / width);
      mask[y * width + x] = n.mask[sy * n.width + sx];
    }
  }
  return NormalMap::from_tensor(up, std::move(mask));
}

NormalMap forward_stage(const SubNet& weights, std::span<const Tensor> inputs, double leaky_slope) {
  std::vector<Tensor> batched;
  batched.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.rank() != 3) throw ShapeError("forward_stage input", {weights.in_channels(), 0, 0}, in.shape());
    batched.push_back(in.reshape({1, in.dim(0), in.dim(1), in.dim(2)}));
  }
  return NormalMap::from_tensor(run_stage(nullptr, weights, batched, Tensor(), leaky_slope));
}

NormalMap forward_multiscale(const NetWeights& weights, const PsSample& sample, StageTrace* trace) {
  return NormalMap::from_tensor(multiscale(nullptr, weights, sample, trace), sample.mask);
}

Tensor forward_multiscale_graph(Graph* graph, const NetWeights& weights, const PsSample& sample, StageTrace* trace) {
  return multiscale(graph, weights, sample, trace);
}

Tensor cosine_loss(const NormalMap& pred, const NormalMap& gt, const Mask& mask) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("cosine_loss", {gt.height, gt.width}, {pred.height, pred.width});
  }
  return ops::masked_cosine_loss(nullptr, pred.to_tensor(), gt.to_tensor(), mask);
}

}  // namespace msps
