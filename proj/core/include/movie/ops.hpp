#pragma once

#include <vector>

#include "movie/graph.hpp"
#include "movie/tensor.hpp"

namespace movie {

// Differentiable primitives. Every op takes the tape as its first argument;
// passing nullptr runs pure inference (nothing is recorded). Outputs carry
// requires_grad when any input does, so gradient work is skipped wherever a
// subgraph is rooted only in constants (e.g. raw observations).

/// Strided valid (no padding) 2-D convolution.
/// input [C_in,H,W], weight [C_out,C_in,k,k], bias [C_out] -> [C_out,H',W']
/// with H' = (H-k)/stride + 1. Output elements accumulate over
/// (c_in, ky, kx) in exactly that order.
Tensor conv2d(Graph* g, const Tensor& input, const Tensor& weight, const Tensor& bias, int stride);

/// Max pooling over [C,H,W]; backward routes each window's gradient to the
/// first-encountered maximum in row-major scan order.
Tensor maxpool2d(Graph* g, const Tensor& input, int kernel, int stride);

/// y = W x + b for x [n], W [m,n], b [m].
Tensor linear(Graph* g, const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor relu(Graph* g, const Tensor& x);
Tensor tanh_op(Graph* g, const Tensor& x);

/// Mean of squared elementwise differences; gradients flow into both pred
/// and target (callers that want a fixed target pass a detached tensor).
Tensor mse_loss(Graph* g, const Tensor& pred, const Tensor& target);

Tensor add(Graph* g, const Tensor& a, const Tensor& b);
Tensor scale(Graph* g, const Tensor& x, double c);

/// Elementwise clamp to [lo, hi]; gradient passes only strictly inside the
/// range.
Tensor clamp(Graph* g, const Tensor& x, double lo, double hi);

/// Concatenate two rank-1 tensors.
Tensor concat(Graph* g, const Tensor& a, const Tensor& b);

/// [C,H,W] -> [c1-c0,H,W] channel slice (copying).
Tensor slice_channels(Graph* g, const Tensor& x, int c0, int c1);

/// Stack rank-3 tensors along the channel axis.
Tensor concat_channels(Graph* g, const std::vector<Tensor>& parts);

/// Value snapshot cut off from the tape (stop-gradient).
Tensor detach(const Tensor& x);

}  // namespace movie
