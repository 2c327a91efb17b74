#pragma once

#include <random>
#include <string>

#include "dualmotion/autograd.hpp"
#include "dualmotion/ops.hpp"

namespace dualmotion {

using Rng = std::mt19937_64;

/// Trainable tensor drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Var fan_in_uniform(Shape shape, int fan_in, Rng& rng);
Var zeros_param(Shape shape);
Var constant_param(Shape shape, Scalar value);

struct Conv2d {
  Var weight;  // [out, in, k, k]
  Var bias;    // [out]
  ops::ConvGeometry geometry;

  static Conv2d create(int in_channels, int out_channels, const ops::ConvGeometry& g, Rng& rng);
  Var operator()(const Var& x) const { return ops::conv2d(x, weight, bias, geometry); }
  void collect(ParamList& out, const std::string& prefix) const;
  int in_channels() const { return weight.shape()[1]; }
  int out_channels() const { return weight.shape()[0]; }
};

struct ConvTranspose2d {
  Var weight;  // [in, out, k, k]
  Var bias;    // [out]
  ops::ConvGeometry geometry;

  static ConvTranspose2d create(int in_channels, int out_channels, const ops::ConvGeometry& g, Rng& rng);
  Var operator()(const Var& x) const { return ops::conv_transpose2d(x, weight, bias, geometry); }
  void collect(ParamList& out, const std::string& prefix) const;
  int out_channels() const { return weight.shape()[1]; }
};

struct InstanceNorm {
  Var gamma;
  Var beta;
  bool affine = true;

  /// Non-affine norms hold constant gamma = 1, beta = 0 and expose no parameters.
  static InstanceNorm create(int channels, bool affine = true);
  Var operator()(const Var& x) const { return ops::instance_norm(x, gamma, beta); }
  void collect(ParamList& out, const std::string& prefix) const;
};

struct Linear {
  Var weight;  // [out, in]
  Var bias;    // [out]

  static Linear create(int in_features, int out_features, Rng& rng);
  Var operator()(const Var& x) const { return ops::linear(x, weight, bias); }
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Overwrites every parameter value with zero (used by the zero-parameter
/// identities in the tests and the inspect tooling).
void zero_fill(const ParamList& params);

}  // namespace dualmotion
