#pragma once

#include <cstdint>
#include <span>

#include "msps/tensor.hpp"

// Differentiable operators. Every function takes the recording graph first;
// pass nullptr to evaluate without recording (inference).
namespace msps::ops {

/// Cross-correlation of [N,Cin,H,W] with [Cout,Cin,k,k] plus per-channel bias.
/// Output extent is floor((H + 2*padding - k) / stride) + 1. `bias` may be
/// undefined.
Tensor conv2d(Graph* graph, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride = 1, int padding = 0);

/// y = x for x >= 0, slope * x otherwise. Derivative at 0 is `slope`.
Tensor leaky_relu(Graph* graph, const Tensor& x, double slope);

/// Corner-aligned bilinear resize of [N,C,H,W] to a size at least as large.
Tensor bilinear_upsample(Graph* graph, const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Area-average resize of [N,C,H,W] to a size no larger than the input.
Tensor area_downsample(Graph* graph, const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Elementwise maximum across equally shaped tensors. The gradient goes to
/// the first list entry holding the maximum.
Tensor max_over_set(Graph* graph, std::span<const Tensor> features);

/// max_over_set applied along the batch axis: [N,...] -> [1,...].
Tensor max_over_batch(Graph* graph, const Tensor& x);

/// Concatenation along `axis`; all other extents must agree.
Tensor concat(Graph* graph, std::span<const Tensor> parts, std::size_t axis);

/// Repeats a [1,...] tensor `count` times along the batch axis.
Tensor broadcast_batch(Graph* graph, const Tensor& x, std::size_t count);

/// Per-pixel unit-length normalisation across the channel axis of [N,C,H,W].
/// Vectors shorter than 1e-8 become the last basis vector (0,...,0,1) and
/// pass no gradient.
Tensor normalize_channels(Graph* graph, const Tensor& x);

/// 1 - mean over masked-in pixels of <target, pred>, for [N,3,H,W] inputs and
/// a mask of N*H*W or H*W entries (nonzero = in).
Tensor masked_cosine_loss(Graph* graph, const Tensor& pred, const Tensor& target,
                          std::span<const std::uint8_t> mask);

Tensor add(Graph* graph, const Tensor& a, const Tensor& b);
Tensor mul(Graph* graph, const Tensor& a, const Tensor& b);
Tensor scale(Graph* graph, const Tensor& a, double factor);
Tensor sum(Graph* graph, const Tensor& a);

}  // namespace msps::ops
