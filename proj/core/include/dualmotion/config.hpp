#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dualmotion/tensor.hpp"

namespace dualmotion {

/// Architecture sizes. The defaults are desk-scale; the original
/// full-scale setting corresponds to 256x256 frames with 512 channels.
struct ModelConfig {
  int height = 64;
  int width = 64;
  int latent_channels = 64;   // encoder / latent width D
  int critic_channels = 64;   // first critic layer width, doubled per layer
  Scalar output_knee = 0.8;   // frame outputs are linear on [-knee, knee]

  int latent_height() const { return height / 8; }
  int latent_width() const { return width / 8; }
  Shape latent_shape(int batch = 1) const { return {batch, latent_channels, latent_height(), latent_width()}; }
  void validate() const;
};

/// Switches for the ablation variants.
struct AblationFlags {
  bool frame_branch_on = true;
  bool flow_branch_on = true;
  bool frame_gan_on = true;
  bool flow_gan_on = true;
  bool encoder_probabilistic_on = true;

  /// Applies comma-separated names: full, flow_off, frame_off, gan_off,
  /// frame_gan_off, flow_gan_off, no_encoder.
  void apply(const std::string& names);
  std::string describe() const;
};

struct TrainingConfig {
  Scalar lambda = 0.001;
  Scalar learning_rate = 1e-4;
  int critic_steps_per_gen_step = 5;
  Scalar clip_bound = 0.01;
  int batch_size = 1;
  int steps = 2000;  // generator updates; each is preceded by the critic updates
  std::uint64_t seed = 0;
  AblationFlags ablation;
  int checkpoint_interval = 500;
  bool deterministic = true;
  int window = 4;  // input frames per prediction
  Scalar rmsprop_decay = 0.99;
  Scalar rmsprop_eps = 1e-8;
  Scalar kl_weight = 1.0;

  void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

KeyValues to_key_values(const ModelConfig& m, const TrainingConfig& t);
/// Reads keys present in `kv` over the given defaults; unknown keys throw.
void from_key_values(const KeyValues& kv, ModelConfig& m, TrainingConfig& t);

std::string format_scalar(Scalar v);  // round-trippable decimal

}  // namespace dualmotion
