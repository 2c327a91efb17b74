#pragma once

#include <span>
#include <utility>
#include <vector>

#include "dualmotion/config.hpp"
#include "dualmotion/frames.hpp"
#include "dualmotion/layers.hpp"

namespace dualmotion {

struct ConvLSTMState {
  Var hidden;  // [N, D, h, w]
  Var cell;    // [N, D, h, w]
};

/// Convolutional LSTM cell. All four gates come from one convolution over
/// the channel-concatenated [input, hidden] grid, in i, f, o, g order.
class ConvLSTMCell {
 public:
  ConvLSTMCell() = default;
  static ConvLSTMCell create(int input_channels, int hidden_channels, int kernel, Rng& rng);

  /// Returns (output, new state); the output is the new hidden grid.
  std::pair<Var, ConvLSTMState> step(const Var& input, const ConvLSTMState& state) const;
  ConvLSTMState zero_state(int batch, int height, int width) const;

  int hidden_channels() const { return hidden_; }
  const Conv2d& gates() const { return gates_; }
  void collect(ParamList& out, const std::string& prefix) const { gates_.collect(out, prefix + ".gates"); }

 private:
  Conv2d gates_;
  int hidden_ = 0;
};

/// Spatial Gaussian posterior q(z | frames): per-element mean and log-variance.
struct LatentDistribution {
  Var mean;          // [N, D, H/8, W/8]
  Var log_variance;  // same shape

  const Shape& shape() const { return mean.shape(); }
};

struct LatentCode {
  Var z;
  Tensor noise;  // the epsilon draw that produced z
};

/// z = mean + exp(log_variance / 2) * noise, differentiable in both maps.
LatentCode sample(const LatentDistribution& dist, const Tensor& noise);

/// Standard-normal draw shaped like the latent.
Tensor draw_noise(const Shape& shape, Rng& rng);

/// KL(q || N(0, I)) = 1/2 sum(mean^2 + var - log var - 1), summed over all elements.
Var kl_divergence(const LatentDistribution& dist);

/// Recurrent probabilistic motion encoder. Each frame passes through three
/// stride-2 convolutions and one stride-1 convolution (x8 downsampling),
/// then a ConvLSTM carried across time. Two ConvLSTM heads read the core's
/// output at every step; their final hidden grids, through 1x1 readouts,
/// give the mean and log-variance maps.
class MotionEncoder {
 public:
  MotionEncoder() = default;
  MotionEncoder(const ModelConfig& config, Rng& rng);

  /// frames: T tensors of shape [N, 3, H, W].
  LatentDistribution encode(std::span<const Var> frames) const;
  LatentDistribution encode(const FrameSequence& sequence) const;

  ParamList parameters() const;
  int latent_channels() const { return latent_; }

 private:
  Var frame_features(const Var& frame) const;

  int latent_ = 0;
  Conv2d conv_[4];
  InstanceNorm norm_[4];
  ConvLSTMCell core_;
  ConvLSTMCell mean_head_;
  ConvLSTMCell logvar_head_;
  Conv2d mean_readout_;
  Conv2d logvar_readout_;
};

}  // namespace dualmotion
