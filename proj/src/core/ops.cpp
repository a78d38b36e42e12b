#include "msps/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace msps::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;

void require_finite(const Tensor& t, const char* op) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw ShapeError(std::string(what) + " rank", Shape(rank, 0), t.shape());
  }
}

Tensor finish(Graph* graph, const char* op, std::vector<Tensor> inputs, Tensor out,
              BackwardFn fn) {
  require_finite(out, op);
  return Graph::record(graph, op, std::move(inputs), std::move(out), std::move(fn));
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, k, ho, wo;
  int stride, pad;
  std::size_t patch() const { return cin * k * k; }
  std::size_t pixels() const { return ho * wo; }
};

// Output columns [lo, hi) whose tap kx lands inside the input row.
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kx) {
  const long shift = static_cast<long>(kx) - g.pad;
  const long s = g.stride;
  long lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  long hi = (static_cast<long>(g.w) - 1 - shift) / s + 1;
  if (static_cast<long>(g.w) - 1 - shift < 0) hi = 0;
  hi = std::min(hi, static_cast<long>(g.wo));
  lo = std::min(lo, hi);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t p = g.pixels();
  for (std::size_t c = 0; c < g.cin; ++c) {
    const double* plane = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * p;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          const auto [lo, hi] = valid_columns(g, kx);
          std::fill(dst, dst + lo, 0.0);
          const long shift = static_cast<long>(kx) - g.pad;
          if (g.stride == 1) {
            std::copy(src + static_cast<long>(lo) + shift, src + static_cast<long>(hi) + shift, dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[static_cast<long>(ox) * g.stride + shift];
          }
          std::fill(dst + hi, dst + g.wo, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* x) {
  const std::size_t p = g.pixels();
  for (std::size_t c = 0; c < g.cin; ++c) {
    double* plane = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * p;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          const double* src = row + oy * g.wo;
          const auto [lo, hi] = valid_columns(g, kx);
          const long shift = static_cast<long>(kx) - g.pad;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[static_cast<long>(ox) * g.stride + shift] += src[ox];
        }
      }
    }
  }
}

// Sparse 1-D resampling operator: out[i] = sum_t weight[t] * in[index[t]]
// for t in [offset[i], offset[i+1]).
struct Taps {
  std::vector<std::size_t> offset{0};
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

Taps bilinear_taps(std::size_t in, std::size_t out) {
  Taps t;
  for (std::size_t i = 0; i < out; ++i) {
    if (out == 1 || in == 1) {
      t.index.push_back(0);
      t.weight.push_back(1.0);
    } else {
      // Integer arithmetic keeps the corner samples exact.
      const std::size_t num = i * (in - 1);
      const std::size_t i0 = num / (out - 1);
      const std::size_t rem = num % (out - 1);
      if (rem == 0) {
        t.index.push_back(i0);
        t.weight.push_back(1.0);
      } else {
        const double frac = static_cast<double>(rem) / static_cast<double>(out - 1);
        t.index.push_back(i0);
        t.weight.push_back(1.0 - frac);
        t.index.push_back(i0 + 1);
        t.weight.push_back(frac);
      }
    }
    t.offset.push_back(t.index.size());
  }
  return t;
}

Taps area_taps(std::size_t in, std::size_t out) {
  // Output cell i spans [i*in, (i+1)*in) and input cell j spans
  // [j*out, (j+1)*out), both in units of 1/(in*out) of the extent.
  Taps t;
  for (std::size_t i = 0; i < out; ++i) {
    const std::size_t lo = i * in;
    const std::size_t hi = (i + 1) * in;
    for (std::size_t j = lo / out; j < in && j * out < hi; ++j) {
      const std::size_t a = std::max(lo, j * out);
      const std::size_t b = std::min(hi, (j + 1) * out);
      if (b > a) {
        t.index.push_back(j);
        t.weight.push_back(static_cast<double>(b - a) / static_cast<double>(in));
      }
    }
    t.offset.push_back(t.index.size());
  }
  return t;
}

// Applies rows (height) then columns (width) to every [H,W] plane.
void resample_forward(const double* x, std::size_t planes, std::size_t h, std::size_t w,
                      const Taps& th, std::size_t oh, const Taps& tw, std::size_t ow, double* y) {
  std::vector<double> tmp(oh * w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x + p * h * w;
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t t = th.offset[i]; t < th.offset[i + 1]; ++t) {
        const double wt = th.weight[t];
        const double* row = src + th.index[t] * w;
        double* dst = tmp.data() + i * w;
        for (std::size_t c = 0; c < w; ++c) dst[c] += wt * row[c];
      }
    }
    double* out = y + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const double* row = tmp.data() + i * w;
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t t = tw.offset[j]; t < tw.offset[j + 1]; ++t) acc += tw.weight[t] * row[tw.index[t]];
        out[i * ow + j] = acc;
      }
    }
  }
}

void resample_adjoint(const double* gy, std::size_t planes, std::size_t h, std::size_t w,
                      const Taps& th, std::size_t oh, const Taps& tw, std::size_t ow, double* gx) {
  std::vector<double> tmp(oh * w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* g = gy + p * oh * ow;
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t i = 0; i < oh; ++i) {
      double* row = tmp.data() + i * w;
      for (std::size_t j = 0; j < ow; ++j) {
        const double gv = g[i * ow + j];
        for (std::size_t t = tw.offset[j]; t < tw.offset[j + 1]; ++t) row[tw.index[t]] += tw.weight[t] * gv;
      }
    }
    double* dst = gx + p * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      const double* row = tmp.data() + i * w;
      for (std::size_t t = th.offset[i]; t < th.offset[i + 1]; ++t) {
        const double wt = th.weight[t];
        double* out = dst + th.index[t] * w;
        for (std::size_t c = 0; c < w; ++c) out[c] += wt * row[c];
      }
    }
  }
}

Tensor resample(Graph* graph, const char* op, const Tensor& x, std::size_t oh, std::size_t ow,
                Taps th, Taps tw) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, oh, ow});
  resample_forward(x.values().data(), n * c, h, w, th, oh, tw, ow, out.mutable_values().data());
  return finish(graph, op, {x}, std::move(out),
                [=, th = std::move(th), tw = std::move(tw)](std::span<const double> gy,
                                                            const GradSink& sink) {
                  auto gx = sink[0];
                  if (gx.empty()) return;
                  resample_adjoint(gy.data(), n * c, h, w, th, oh, tw, ow, gx.data());
                });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) throw ShapeError(std::string(op) + " operand shapes", a.shape(), b.shape());
}

}  // namespace

Tensor conv2d(Graph* graph, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const std::size_t k = weight.dim(2);
  if (weight.dim(3) != k || k % 2 == 0) {
    throw ShapeError("conv2d kernel must be square with odd extent", {weight.dim(0), input.dim(1), 3, 3},
                     weight.shape());
  }
  if (weight.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d weight input channels", {weight.dim(0), input.dim(1), k, k}, weight.shape());
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw ShapeError("conv2d bias", {weight.dim(0)}, bias.shape());
  }
  if (stride != 1 && stride != 2) throw Error("conv2d stride must be 1 or 2");
  if (padding < 0) throw Error("conv2d padding must be non-negative");

  ConvGeometry g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = weight.dim(0);
  g.k = k;
  g.stride = stride;
  g.pad = padding;
  const long eh = static_cast<long>(g.h) + 2 * padding - static_cast<long>(k);
  const long ew = static_cast<long>(g.w) + 2 * padding - static_cast<long>(k);
  if (eh < 0 || ew < 0) {
    throw ShapeError("conv2d input smaller than kernel", {g.n, g.cin, k, k}, input.shape());
  }
  g.ho = static_cast<std::size_t>(eh / stride + 1);
  g.wo = static_cast<std::size_t>(ew / stride + 1);

  // Operands are copied into Eigen-owned (aligned) matrices: products over
  // arbitrarily aligned maps may sum in an address-dependent order.
  Tensor out({g.n, g.cout, g.ho, g.wo});
  {
    const auto P = static_cast<Eigen::Index>(g.pixels());
    const auto Q = static_cast<Eigen::Index>(g.patch());
    const auto Co = static_cast<Eigen::Index>(g.cout);
    const RowMat wm = ConstMap(weight.values().data(), Co, Q);
    RowMat cols(Q, P);
    RowMat ym(Co, P);
    auto y = out.mutable_values();
    for (std::size_t n = 0; n < g.n; ++n) {
      im2col(input.values().data() + n * g.cin * g.h * g.w, g, cols.data());
      ym.noalias() = wm * cols;
      double* dst = y.data() + n * g.cout * g.pixels();
      for (std::size_t co = 0; co < g.cout; ++co) {
        const double b = bias.defined() ? bias.values()[co] : 0.0;
        const double* row = ym.data() + co * g.pixels();
        for (std::size_t p = 0; p < g.pixels(); ++p) dst[co * g.pixels() + p] = row[p] + b;
      }
    }
  }

  return finish(graph, "conv2d", {input, weight, bias}, std::move(out),
                [g, input, weight](std::span<const double> gy, const GradSink& sink) {
                  auto gx = sink[0];
                  auto gw = sink[1];
                  auto gb = sink[2];
                  const auto P = static_cast<Eigen::Index>(g.pixels());
                  const auto Q = static_cast<Eigen::Index>(g.patch());
                  const auto Co = static_cast<Eigen::Index>(g.cout);
                  const RowMat wm = ConstMap(weight.values().data(), Co, Q);
                  RowMat cols(Q, P);
                  RowMat gcols(Q, P);
                  RowMat gym(Co, P);
                  RowMat gwm = RowMat::Zero(gw.empty() ? 0 : Co, gw.empty() ? 0 : Q);
                  for (std::size_t n = 0; n < g.n; ++n) {
                    const double* gslice = gy.data() + n * g.cout * g.pixels();
                    if (!gb.empty()) {
                      for (std::size_t co = 0; co < g.cout; ++co) {
                        double acc = 0.0;
                        for (std::size_t p = 0; p < g.pixels(); ++p) acc += gslice[co * g.pixels() + p];
                        gb[co] += acc;
                      }
                    }
                    if (gw.empty() && gx.empty()) continue;
                    std::copy(gslice, gslice + g.cout * g.pixels(), gym.data());
                    if (!gw.empty()) {
                      im2col(input.values().data() + n * g.cin * g.h * g.w, g, cols.data());
                      gwm.noalias() += gym * cols.transpose();
                    }
                    if (!gx.empty()) {
                      gcols.noalias() = wm.transpose() * gym;
                      col2im_add(gcols.data(), g, gx.data() + n * g.cin * g.h * g.w);
                    }
                  }
                  if (!gw.empty()) {
                    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += gwm.data()[i];
                  }
                });
}

Tensor leaky_relu(Graph* graph, const Tensor& x, double slope) {
  if (!(slope >= 0.0 && slope < 1.0)) throw Error("leaky_relu slope must lie in [0, 1)");
  Tensor out(x.shape());
  auto y = out.mutable_values();
  auto xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] >= 0.0 ? xv[i] : slope * xv[i];
  return finish(graph, "leaky_relu", {x}, std::move(out),
                [x, slope](std::span<const double> gy, const GradSink& sink) {
                  auto gx = sink[0];
                  if (gx.empty()) return;
                  auto xv = x.values();
                  for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += xv[i] > 0.0 ? gy[i] : slope * gy[i];
                });
}

Tensor bilinear_upsample(Graph* graph, const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 4, "bilinear_upsample input");
  if (out_h < x.dim(2) || out_w < x.dim(3)) {
    throw ShapeError("bilinear_upsample cannot downscale", {x.dim(0), x.dim(1), x.dim(2), x.dim(3)},
                     {x.dim(0), x.dim(1), out_h, out_w});
  }
  return resample(graph, "bilinear_upsample", x, out_h, out_w, bilinear_taps(x.dim(2), out_h),
                  bilinear_taps(x.dim(3), out_w));
}

Tensor area_downsample(Graph* graph, const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 4, "area_downsample input");
  if (out_h == 0 || out_w == 0 || out_h > x.dim(2) || out_w > x.dim(3)) {
    throw ShapeError("area_downsample cannot upscale", {x.dim(0), x.dim(1), x.dim(2), x.dim(3)},
                     {x.dim(0), x.dim(1), out_h, out_w});
  }
  if (out_h == x.dim(2) && out_w == x.dim(3)) return x;
  return resample(graph, "area_downsample", x, out_h, out_w, area_taps(x.dim(2), out_h),
                  area_taps(x.dim(3), out_w));
}

Tensor max_over_set(Graph* graph, std::span<const Tensor> features) {
  if (features.empty()) throw Error("max_over_set requires at least one tensor");
  for (const auto& f : features) require_same_shape(features[0], f, "max_over_set");
  const std::size_t n = features[0].numel();
  Tensor out(features[0].shape());
  auto y = out.mutable_values();
  std::vector<std::uint32_t> arg(n, 0);
  std::copy(features[0].values().begin(), features[0].values().end(), y.begin());
  for (std::size_t k = 1; k < features.size(); ++k) {
    auto v = features[k].values();
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] > y[i]) {
        y[i] = v[i];
        arg[i] = static_cast<std::uint32_t>(k);
      }
    }
  }
  std::vector<Tensor> inputs(features.begin(), features.end());
  return finish(graph, "max_over_set", std::move(inputs), std::move(out),
                [arg = std::move(arg)](std::span<const double> gy, const GradSink& sink) {
                  for (std::size_t i = 0; i < arg.size(); ++i) {
                    auto g = sink[arg[i]];
                    if (!g.empty()) g[i] += gy[i];
                  }
                });
}

Tensor max_over_batch(Graph* graph, const Tensor& x) {
  if (!x.defined() || x.rank() < 1 || x.dim(0) == 0) throw Error("max_over_batch requires a non-empty batch");
  Shape shape = x.shape();
  const std::size_t count = shape[0];
  shape[0] = 1;
  const std::size_t n = shape_numel(shape);
  Tensor out(shape);
  auto y = out.mutable_values();
  auto v = x.values();
  std::vector<std::uint32_t> arg(n, 0);
  std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n), y.begin());
  for (std::size_t k = 1; k < count; ++k) {
    const double* row = v.data() + k * n;
    for (std::size_t i = 0; i < n; ++i) {
      if (row[i] > y[i]) {
        y[i] = row[i];
        arg[i] = static_cast<std::uint32_t>(k);
      }
    }
  }
  return finish(graph, "max_over_batch", {x}, std::move(out),
                [n, arg = std::move(arg)](std::span<const double> gy, const GradSink& sink) {
                  auto gx = sink[0];
                  if (gx.empty()) return;
                  for (std::size_t i = 0; i < n; ++i) gx[arg[i] * n + i] += gy[i];
                });
}

Tensor concat(Graph* graph, std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw Error("concat requires at least one tensor");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw Error("concat axis out of range");
  Shape shape = ref;
  shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    Shape expected = ref;
    expected[axis] = p.shape().size() == ref.size() ? p.dim(axis) : 0;
    if (p.shape() != expected) throw ShapeError("concat operand", expected, p.shape());
    shape[axis] += p.dim(axis);
    extents.push_back(p.dim(axis));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  const std::size_t total = shape[axis];

  Tensor out(shape);
  auto y = out.mutable_values();
  std::size_t start = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].values();
    const std::size_t block = extents[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * block, block, y.data() + (o * total + start) * inner);
    }
    start += extents[k];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return finish(graph, "concat", std::move(inputs), std::move(out),
                [outer, inner, total, extents](std::span<const double> gy, const GradSink& sink) {
                  std::size_t start = 0;
                  for (std::size_t k = 0; k < extents.size(); ++k) {
                    auto g = sink[k];
                    const std::size_t block = extents[k] * inner;
                    if (!g.empty()) {
                      for (std::size_t o = 0; o < outer; ++o) {
                        const double* src = gy.data() + (o * total + start) * inner;
                        double* dst = g.data() + o * block;
                        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                      }
                    }
                    start += extents[k];
                  }
                });
}

Tensor broadcast_batch(Graph* graph, const Tensor& x, std::size_t count) {
  if (!x.defined() || x.rank() < 1 || x.dim(0) != 1) throw Error("broadcast_batch requires a [1,...] tensor");
  if (count == 0) throw Error("broadcast_batch count must be positive");
  Shape shape = x.shape();
  shape[0] = count;
  const std::size_t n = x.numel();
  Tensor out(shape);
  auto y = out.mutable_values();
  for (std::size_t k = 0; k < count; ++k) std::copy(x.values().begin(), x.values().end(), y.begin() + static_cast<std::ptrdiff_t>(k * n));
  return finish(graph, "broadcast_batch", {x}, std::move(out),
                [n, count](std::span<const double> gy, const GradSink& sink) {
                  auto gx = sink[0];
                  if (gx.empty()) return;
                  for (std::size_t k = 0; k < count; ++k)
                    for (std::size_t i = 0; i < n; ++i) gx[i] += gy[k * n + i];
                });
}

Tensor normalize_channels(Graph* graph, const Tensor& x) {
  require_rank(x, 4, "normalize_channels input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (c == 0) throw Error("normalize_channels needs at least one channel");
  Tensor out(x.shape());
  auto y = out.mutable_values();
  auto v = x.values();
  std::vector<double> inv_norm(n * hw, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      double sq = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double e = v[(b * c + ch) * hw + p];
        sq += e * e;
      }
      const double norm = std::sqrt(sq);
      if (norm < 1e-8) {
        for (std::size_t ch = 0; ch < c; ++ch) y[(b * c + ch) * hw + p] = ch + 1 == c ? 1.0 : 0.0;
        continue;
      }
      const double inv = 1.0 / norm;
      inv_norm[b * hw + p] = inv;
      for (std::size_t ch = 0; ch < c; ++ch) y[(b * c + ch) * hw + p] = v[(b * c + ch) * hw + p] * inv;
    }
  }
  Tensor saved = out.detach();
  return finish(graph, "normalize_channels", {x}, std::move(out),
                [n, c, hw, saved, inv_norm = std::move(inv_norm)](std::span<const double> gy,
                                                                  const GradSink& sink) {
                  auto gx = sink[0];
                  if (gx.empty()) return;
                  auto y = saved.values();
                  for (std::size_t b = 0; b < n; ++b) {
                    for (std::size_t p = 0; p < hw; ++p) {
                      const double inv = inv_norm[b * hw + p];
                      if (inv == 0.0) continue;
                      double dot = 0.0;
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t i = (b * c + ch) * hw + p;
                        dot += y[i] * gy[i];
                      }
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t i = (b * c + ch) * hw + p;
                        gx[i] += (gy[i] - y[i] * dot) * inv;
                      }
                    }
                  }
                });
}

Tensor masked_cosine_loss(Graph* graph, const Tensor& pred, const Tensor& target,
                          std::span<const std::uint8_t> mask) {
  require_rank(pred, 4, "cosine loss prediction");
  require_same_shape(pred, target, "masked_cosine_loss");
  const std::size_t n = pred.dim(0), c = pred.dim(1), hw = pred.dim(2) * pred.dim(3);
  if (mask.size() != n * hw && mask.size() != hw) {
    throw ShapeError("cosine loss mask", {n, pred.dim(2), pred.dim(3)}, {mask.size()});
  }
  auto in_mask = [&](std::size_t b, std::size_t p) {
    return mask.size() == hw ? mask[p] != 0 : mask[b * hw + p] != 0;
  };
  std::size_t count = 0;
  double dot = 0.0;
  auto pv = pred.values();
  auto tv = target.values();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      if (!in_mask(b, p)) continue;
      ++count;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = (b * c + ch) * hw + p;
        dot += pv[i] * tv[i];
      }
    }
  }
  if (count == 0) throw Error("cosine loss: mask selects no pixels");
  const double inv_count = 1.0 / static_cast<double>(count);
  Tensor out = Tensor::scalar(1.0 - dot * inv_count);
  std::vector<std::uint8_t> mask_copy(mask.begin(), mask.end());
  return finish(graph, "masked_cosine_loss", {pred, target}, std::move(out),
                [n, c, hw, inv_count, pred, target, mask_copy = std::move(mask_copy)](
                    std::span<const double> gy, const GradSink& sink) {
                  auto gp = sink[0];
                  auto gt = sink[1];
                  const double s = -gy[0] * inv_count;
                  auto pv = pred.values();
                  auto tv = target.values();
                  for (std::size_t b = 0; b < n; ++b) {
                    for (std::size_t p = 0; p < hw; ++p) {
                      const bool in = mask_copy.size() == hw ? mask_copy[p] != 0 : mask_copy[b * hw + p] != 0;
                      if (!in) continue;
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t i = (b * c + ch) * hw + p;
                        if (!gp.empty()) gp[i] += s * tv[i];
                        if (!gt.empty()) gt[i] += s * pv[i];
                      }
                    }
                  }
                });
}

Tensor add(Graph* graph, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
  return finish(graph, "add", {a, b}, std::move(out), [](std::span<const double> gy, const GradSink& sink) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto g = sink[k];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
  });
}

Tensor mul(Graph* graph, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * b.values()[i];
  return finish(graph, "mul", {a, b}, std::move(out), [a, b](std::span<const double> gy, const GradSink& sink) {
    auto ga = sink[0];
    auto gb = sink[1];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * b.values()[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * a.values()[i];
  });
}

Tensor scale(Graph* graph, const Tensor& a, double factor) {
  Tensor out(a.shape());
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * factor;
  return finish(graph, "scale", {a}, std::move(out), [factor](std::span<const double> gy, const GradSink& sink) {
    auto g = sink[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * factor;
  });
}

Tensor sum(Graph* graph, const Tensor& a) {
  const auto v = a.values();
  Tensor out = Tensor::scalar(std::accumulate(v.begin(), v.end(), 0.0));
  return finish(graph, "sum", {a}, std::move(out), [](std::span<const double> gy, const GradSink& sink) {
    auto g = sink[0];
    for (double& e : g) e += gy[0];
  });
}

}  // namespace msps::ops
