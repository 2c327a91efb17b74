#pragma once

#include "dualmotion/config.hpp"
#include "dualmotion/layers.hpp"

namespace dualmotion {

/// Wasserstein critic: four stride-2 4x4 convolutions (C, 2C, 4C, 8C channels)
/// with LeakyReLU(0.2) and non-affine instance norm on layers 2-3, global
/// average pool, then a linear map to one unbounded score per sample.
class Critic {
 public:
  Critic() = default;
  Critic(int in_channels, int base_channels, Rng& rng);

  /// x: [N, C_in, H, W] -> [N, 1]
  Var score(const Var& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
  int in_channels() const { return in_; }

 private:
  Conv2d convs_[4];
  InstanceNorm norms_[2];
  Linear head_;
  int in_ = 0;
};

/// Frame critic over 3-channel images.
inline Critic make_frame_critic(const ModelConfig& config, Rng& rng) { return Critic(3, config.critic_channels, rng); }
/// Flow critic over 2-channel flow fields.
inline Critic make_flow_critic(const ModelConfig& config, Rng& rng) { return Critic(2, config.critic_channels, rng); }

/// Clamps every value of every parameter to [-bound, bound]. Idempotent.
void clip_weights(const ParamList& params, Scalar bound);

/// Largest absolute parameter value.
Scalar max_abs_weight(const ParamList& params);

}  // namespace dualmotion
