#include "dualmotion/generators.hpp"

#include <algorithm>

namespace dualmotion {

namespace {

constexpr ops::ConvGeometry kUp{3, 2, 1, 1, 1};      // h -> 2h
constexpr ops::ConvGeometry kRefine{3, 1, 1, 1, 0};  // h -> h
constexpr ops::ConvGeometry kDown{4, 2, 1, 1, 0};    // h -> h/2

void require_latent(const Var& z, int channels) {
  const Shape& s = z.shape();
  if (s.size() != 4 || s[1] != channels) {
    throw ShapeError("decoder: expected latent [N, " + std::to_string(channels) + ", h, w], got " + to_string(s));
  }
}

}  // namespace

Decoder::Decoder(int latent_channels, int out_channels, Output output, Scalar knee, Rng& rng)
    : output_(output), knee_(knee), latent_(latent_channels) {
  const int d = latent_channels;
  const int c2 = std::max(d / 2, 8);
  const int c3 = std::max(d / 4, 8);
  layers_[0] = ConvTranspose2d::create(d, d, kUp, rng);
  layers_[1] = ConvTranspose2d::create(d, c2, kUp, rng);
  layers_[2] = ConvTranspose2d::create(c2, c2, kUp, rng);
  layers_[3] = ConvTranspose2d::create(c2, c3, kRefine, rng);
  layers_[4] = ConvTranspose2d::create(c3, out_channels, kRefine, rng);
  for (int k = 0; k < 4; ++k) norms_[k] = InstanceNorm::create(layers_[k].out_channels());
}

Var Decoder::operator()(const Var& z) const {
  require_latent(z, latent_);
  Var x = z;
  for (int k = 0; k < 4; ++k) x = ops::relu(norms_[k](layers_[k](x)));
  x = layers_[4](x);
  return output_ == Output::bounded ? ops::soft_clip(x, knee_) : x;
}

void Decoder::collect(ParamList& out, const std::string& prefix) const {
  for (int k = 0; k < 5; ++k) layers_[k].collect(out, prefix + ".deconv" + std::to_string(k));
  for (int k = 0; k < 4; ++k) norms_[k].collect(out, prefix + ".norm" + std::to_string(k));
}

FlowEstimator::FlowEstimator(const ModelConfig& config, Rng& rng) {
  const int e = std::max(config.latent_channels / 2, 8);
  down_[0] = Conv2d::create(6, e, kDown, rng);
  down_[1] = Conv2d::create(e, 2 * e, kDown, rng);
  down_[2] = Conv2d::create(2 * e, 2 * e, kRefine, rng);
  down_[3] = Conv2d::create(2 * e, 2 * e, kRefine, rng);
  up_[0] = ConvTranspose2d::create(2 * e, 2 * e, kRefine, rng);
  up_[1] = ConvTranspose2d::create(2 * e, e, kUp, rng);
  up_[2] = ConvTranspose2d::create(e, e, kUp, rng);
  up_[3] = ConvTranspose2d::create(e, 2, kRefine, rng);
  for (int k = 0; k < 4; ++k) down_norm_[k] = InstanceNorm::create(down_[k].out_channels());
  for (int k = 0; k < 3; ++k) up_norm_[k] = InstanceNorm::create(up_[k].out_channels());
}

Var FlowEstimator::operator()(const Var& prev, const Var& next) const {
  if (prev.shape() != next.shape() || prev.shape().size() != 4 || prev.shape()[1] != 3) {
    throw ShapeError("estimate_flow: frame shapes " + to_string(prev.shape()) + " and " + to_string(next.shape()));
  }
  const Var pair[] = {prev, next};
  Var x = ops::concat(pair, 1);
  for (int k = 0; k < 4; ++k) x = ops::relu(down_norm_[k](down_[k](x)));
  for (int k = 0; k < 3; ++k) x = ops::relu(up_norm_[k](up_[k](x)));
  return up_[3](x);
}

void FlowEstimator::collect(ParamList& out, const std::string& prefix) const {
  for (int k = 0; k < 4; ++k) {
    down_[k].collect(out, prefix + ".conv" + std::to_string(k));
    down_norm_[k].collect(out, prefix + ".conv_norm" + std::to_string(k));
  }
  for (int k = 0; k < 4; ++k) up_[k].collect(out, prefix + ".deconv" + std::to_string(k));
  for (int k = 0; k < 3; ++k) up_norm_[k].collect(out, prefix + ".deconv_norm" + std::to_string(k));
}

Fusion::Fusion(const ModelConfig& config) : knee_(config.output_knee) {
  Tensor w({3, 6, 1, 1});
  for (int c = 0; c < 3; ++c) {
    w[c * 6 + c] = 0.5;
    w[c * 6 + c + 3] = 0.5;
  }
  conv_ = {Var(std::move(w), true), zeros_param({3}), {1, 1, 0, 0, 0}};
}

Var Fusion::operator()(const Var& frame_pred, const Var& warped_frame) const {
  if (frame_pred.shape() != warped_frame.shape()) {
    throw ShapeError("fuse: " + to_string(frame_pred.shape()) + " vs " + to_string(warped_frame.shape()));
  }
  const Var both[] = {frame_pred, warped_frame};
  return ops::soft_clip(conv_(ops::concat(both, 1)), knee_);
}

}  // namespace dualmotion
