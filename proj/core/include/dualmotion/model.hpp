#pragma once

#include <optional>
#include <span>

#include "dualmotion/critics.hpp"
#include "dualmotion/generators.hpp"
#include "dualmotion/motion_encoder.hpp"

namespace dualmotion {

/// All five outputs of one prediction step, each [N, C, H, W].
/// Outputs of a disabled branch are undefined Vars.
struct PredictionBundle {
  Var frame_pred;      // generated frame, 3 channels
  Var flow_pred;       // generated flow, 2 channels
  Var warped_frame;    // last input frame warped by flow_pred
  Var estimated_flow;  // estimator(last input frame, frame_pred)
  Var fused_frame;     // final prediction
};

struct ForwardPass {
  LatentDistribution dist;
  LatentCode code;
  PredictionBundle bundle;
};

struct BranchFlags {
  bool frame = true;
  bool flow = true;
  bool sample = true;  // false: z is the posterior mean

  static BranchFlags from(const AblationFlags& a) {
    return {a.frame_branch_on, a.flow_branch_on, a.encoder_probabilistic_on};
  }
  bool dual() const { return frame && flow; }
};

/// Encoder, both generators, estimator, fusion and both critics.
class DualMotionModel {
 public:
  DualMotionModel() = default;
  DualMotionModel(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }

  MotionEncoder encoder;
  FrameGenerator frame_generator;
  FlowGenerator flow_generator;
  FlowEstimator estimator;
  Fusion fusion;
  Critic frame_critic;
  Critic flow_critic;

  /// Encoder, generators, estimator and fusion.
  ParamList generator_parameters() const;
  ParamList frame_critic_parameters() const;
  ParamList flow_critic_parameters() const;
  ParamList critic_parameters() const;
  ParamList all_parameters() const;

 private:
  ModelConfig config_;
};

/// frames: the input window, each [N, 3, H, W]. `noise` is the epsilon draw
/// for the latent sample; zero noise when absent (posterior mean).
ForwardPass forward_bundle(const DualMotionModel& model, std::span<const Var> frames,
                           const std::optional<Tensor>& noise, const BranchFlags& flags);

/// Same, for a stored sequence (all frames form the window).
ForwardPass forward_bundle(const DualMotionModel& model, const FrameSequence& sequence,
                           const std::optional<Tensor>& noise, const BranchFlags& flags);

}  // namespace dualmotion
