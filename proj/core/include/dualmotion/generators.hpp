#pragma once

#include <vector>

#include "dualmotion/config.hpp"
#include "dualmotion/layers.hpp"

namespace dualmotion {

/// Five 3x3 transposed convolutions mapping a [N, D, H/8, W/8] latent to
/// [N, C, H, W]: three stride-2 upsampling layers followed by two stride-1
/// refinement layers, instance norm + ReLU in between.
class Decoder {
 public:
  enum class Output { bounded, linear };

  Decoder() = default;
  Decoder(int latent_channels, int out_channels, Output output, Scalar knee, Rng& rng);

  Var operator()(const Var& z) const;
  void collect(ParamList& out, const std::string& prefix) const;
  int out_channels() const { return layers_[4].out_channels(); }

 private:
  ConvTranspose2d layers_[5];
  InstanceNorm norms_[4];
  Output output_ = Output::linear;
  Scalar knee_ = 0.8;
  int latent_ = 0;
};

/// Future-frame generator: latent -> [N, 3, H, W] in [-1, 1].
class FrameGenerator {
 public:
  FrameGenerator() = default;
  FrameGenerator(const ModelConfig& config, Rng& rng)
      : decoder_(config.latent_channels, 3, Decoder::Output::bounded, config.output_knee, rng) {}

  Var operator()(const Var& z) const { return decoder_(z); }
  void collect(ParamList& out, const std::string& prefix) const { decoder_.collect(out, prefix); }

 private:
  Decoder decoder_;
};

/// Future-flow generator: latent -> [N, 2, H, W], unbounded.
class FlowGenerator {
 public:
  FlowGenerator() = default;
  FlowGenerator(const ModelConfig& config, Rng& rng)
      : decoder_(config.latent_channels, 2, Decoder::Output::linear, config.output_knee, rng) {}

  Var operator()(const Var& z) const { return decoder_(z); }
  void collect(ParamList& out, const std::string& prefix) const { decoder_.collect(out, prefix); }

 private:
  Decoder decoder_;
};

/// Flow estimator: four convolutions (strides 2, 2, 1, 1) down to H/4 and
/// four transposed convolutions (strides 1, 2, 2, 1) back up, over the
/// channel-concatenated frame pair.
/// Returns the flow that warps `prev` onto `next`.
class FlowEstimator {
 public:
  FlowEstimator() = default;
  FlowEstimator(const ModelConfig& config, Rng& rng);

  Var operator()(const Var& prev, const Var& next) const;
  void collect(ParamList& out, const std::string& prefix) const;

 private:
  Conv2d down_[4];
  InstanceNorm down_norm_[4];
  ConvTranspose2d up_[4];
  InstanceNorm up_norm_[3];
};

/// 1x1 convolution over [frame_pred, warped_frame] (6 channels -> 3),
/// initialized to the average of the two, followed by the bounded activation.
class Fusion {
 public:
  Fusion() = default;
  explicit Fusion(const ModelConfig& config);

  Var operator()(const Var& frame_pred, const Var& warped_frame) const;
  void collect(ParamList& out, const std::string& prefix) const { conv_.collect(out, prefix); }
  const Conv2d& conv() const { return conv_; }

 private:
  Conv2d conv_;
  Scalar knee_ = 0.8;
};

/// Parameter-free differentiable warping layer (see ops::warp).
inline Var warp(const Var& source, const Var& flow) { return ops::warp(source, flow); }

}  // namespace dualmotion
