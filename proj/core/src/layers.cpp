#include "dualmotion/layers.hpp"

#include <cmath>

namespace dualmotion {

Var fan_in_uniform(Shape shape, int fan_in, Rng& rng) {
  const Scalar bound = 1.0 / std::sqrt(static_cast<Scalar>(fan_in));
  std::uniform_real_distribution<Scalar> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return Var(std::move(t), true);
}

Var zeros_param(Shape shape) { return Var(Tensor::zeros(std::move(shape)), true); }

Var constant_param(Shape shape, Scalar value) { return Var(Tensor::filled(std::move(shape), value), true); }

Conv2d Conv2d::create(int in_channels, int out_channels, const ops::ConvGeometry& g, Rng& rng) {
  const int k = g.kernel;
  return {fan_in_uniform({out_channels, in_channels, k, k}, in_channels * k * k, rng), zeros_param({out_channels}), g};
}

void Conv2d::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

ConvTranspose2d ConvTranspose2d::create(int in_channels, int out_channels, const ops::ConvGeometry& g, Rng& rng) {
  const int k = g.kernel;
  return {fan_in_uniform({in_channels, out_channels, k, k}, in_channels * k * k, rng), zeros_param({out_channels}), g};
}

void ConvTranspose2d::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

InstanceNorm InstanceNorm::create(int channels, bool affine) {
  if (!affine) return {Var(Tensor::filled({channels}, 1.0)), Var(Tensor::zeros({channels})), false};
  return {constant_param({channels}, 1.0), zeros_param({channels}), true};
}

void InstanceNorm::collect(ParamList& out, const std::string& prefix) const {
  if (!affine) return;
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Linear Linear::create(int in_features, int out_features, Rng& rng) {
  return {fan_in_uniform({out_features, in_features}, in_features, rng), zeros_param({out_features})};
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

void zero_fill(const ParamList& params) {
  for (const auto& p : params) p.var.mutable_value().fill(0.0);
}

}  // namespace dualmotion
