#pragma once

#include "tamperloc/tensor.hpp"

#include <vector>

namespace tamperloc {

// Convolution parameters. Weights are (C_out, C_in/groups, kH, kW); the bias
// is a length-C_out buffer carried as a (1, C_out, 1, 1) tensor. Stride and
// padding apply symmetrically to both spatial axes.
struct ConvParams {
  Tensor weight;
  Tensor bias;
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;
};

// Cross-correlation (no kernel flip). Output spatial size is
// floor((S + 2*pad - k) / stride) + 1 per axis.
Tensor conv2d(const Tensor& x, const ConvParams& p);

// Grouped convolution with groups == C_in == C_out: each output channel sees
// only its own input channel.
Tensor depthwise_conv2d(const Tensor& x, const ConvParams& p);

// Normalizes over the channel axis at every (n, h, w) position, then applies
// the per-channel affine. gamma and beta are (1, C, 1, 1).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Scalar eps = 1e-6);

// Exact x * Phi(x) with the erf form of the normal CDF.
Tensor gelu(const Tensor& x);

// Bilinear interpolation with half-pixel centers: the source coordinate for
// output index d is (d + 0.5) * S_in / S_out - 0.5, clamped to [0, S_in - 1].
// Resizing to the input size is the exact identity.
Tensor bilinear_resize(const Tensor& x, Index out_h, Index out_w);

// (N, C, bins, bins) output; cell (i, j) averages input rows
// floor(i*H/bins) .. ceil((i+1)*H/bins)-1 and likewise for columns.
Tensor adaptive_avg_pool(const Tensor& x, Index bins);

// Per-pixel softmax over the channel axis, max-subtracted for stability.
Tensor softmax_channels(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);

// y[n,c,h,w] = x[n,c,h,w] * s[c]; s is (1, C, 1, 1). Used for layer scale.
Tensor channel_scale(const Tensor& x, const Tensor& s);

Tensor concat_channels(const std::vector<Tensor>& xs);

}  // namespace tamperloc
