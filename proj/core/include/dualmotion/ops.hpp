#pragma once

#include <span>
#include <vector>

#include "dualmotion/autograd.hpp"

namespace dualmotion::ops {

// Elementwise arithmetic. Binary ops require identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Scalar s);
Var add_scalar(const Var& a, Scalar s);

// Activations.
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, Scalar slope);
Var exp(const Var& a);

/// Identity on [-knee, knee] with tanh-shaped tails saturating at +-1.
/// Continuous through the second derivative at the knee.
Var soft_clip(const Var& a, Scalar knee);
Scalar soft_clip_value(Scalar x, Scalar knee);

// Reductions to a single-element tensor.
Var sum(const Var& a);
Var mean(const Var& a);
/// sum(a * weights) with a constant weight tensor.
Var weighted_sum(const Var& a, const Tensor& weights);

Var reshape(const Var& a, Shape shape);
Var concat(std::span<const Var> parts, int axis);
Var slice(const Var& a, int axis, int start, int length);

/// Square-kernel convolution geometry. Padding may be asymmetric so that even
/// kernels can preserve spatial size (k=4: pad_lo=1, pad_hi=2).
struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad_lo = 0;
  int pad_hi = 0;
  int output_padding = 0;  // transposed convolution only

  static ConvGeometry same(int kernel) { return {kernel, 1, (kernel - 1) / 2, kernel / 2, 0}; }
};

int conv_output_size(int input, const ConvGeometry& g);
int conv_transpose_output_size(int input, const ConvGeometry& g);

/// x: [N, Ci, H, W], weight: [Co, Ci, k, k], bias: [Co] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g);

/// x: [N, Ci, H, W], weight: [Ci, Co, k, k], bias: [Co] or undefined.
/// Adjoint of conv2d with the same geometry.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g);

/// Per-sample, per-channel normalization with affine gamma/beta of shape [C].
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, Scalar eps = 1e-5);

/// [N, C, H, W] -> [N, C]
Var global_avg_pool(const Var& x);

/// x: [N, F], weight: [O, F], bias: [O] -> [N, O]
Var linear(const Var& x, const Var& weight, const Var& bias);

/// Backward bilinear warp: out(x, y) = source sampled at (x + u, y + v), where
/// (u, v) are channels 0 and 1 of `flow`. Sample coordinates are clamped to
/// the image (border replication). source: [N, C, H, W], flow: [N, 2, H, W].
Var warp(const Var& source, const Var& flow);

}  // namespace dualmotion::ops
