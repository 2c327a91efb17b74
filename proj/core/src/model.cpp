#include "dualmotion/model.hpp"

#include <stdexcept>

namespace dualmotion {

DualMotionModel::DualMotionModel(const ModelConfig& config, Rng& rng) : config_(config) {
  config.validate();
  encoder = MotionEncoder(config, rng);
  frame_generator = FrameGenerator(config, rng);
  flow_generator = FlowGenerator(config, rng);
  estimator = FlowEstimator(config, rng);
  fusion = Fusion(config);
  frame_critic = make_frame_critic(config, rng);
  flow_critic = make_flow_critic(config, rng);
}

ParamList DualMotionModel::generator_parameters() const {
  ParamList out = encoder.parameters();
  frame_generator.collect(out, "frame_generator");
  flow_generator.collect(out, "flow_generator");
  estimator.collect(out, "estimator");
  fusion.collect(out, "fusion");
  return out;
}

ParamList DualMotionModel::frame_critic_parameters() const {
  ParamList out;
  frame_critic.collect(out, "frame_critic");
  return out;
}

ParamList DualMotionModel::flow_critic_parameters() const {
  ParamList out;
  flow_critic.collect(out, "flow_critic");
  return out;
}

ParamList DualMotionModel::critic_parameters() const {
  ParamList out = frame_critic_parameters();
  flow_critic.collect(out, "flow_critic");
  return out;
}

ParamList DualMotionModel::all_parameters() const {
  ParamList out = generator_parameters();
  const ParamList c = critic_parameters();
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

ForwardPass forward_bundle(const DualMotionModel& model, std::span<const Var> frames,
                           const std::optional<Tensor>& noise, const BranchFlags& flags) {
  if (!flags.frame && !flags.flow) throw std::invalid_argument("forward_bundle: both branches are off");
  ForwardPass pass;
  pass.dist = model.encoder.encode(frames);
  if (flags.sample) {
    pass.code = sample(pass.dist, noise ? *noise : Tensor::zeros(pass.dist.shape()));
  } else {
    pass.code = {pass.dist.mean, Tensor::zeros(pass.dist.shape())};
  }
  const Var& last = frames.back();
  PredictionBundle& b = pass.bundle;
  if (flags.frame) b.frame_pred = model.frame_generator(pass.code.z);
  if (flags.flow) {
    b.flow_pred = model.flow_generator(pass.code.z);
    b.warped_frame = warp(last, b.flow_pred);
  }
  if (flags.dual()) {
    b.estimated_flow = model.estimator(last, b.frame_pred);
    b.fused_frame = model.fusion(b.frame_pred, b.warped_frame);
  } else {
    b.fused_frame = flags.frame ? b.frame_pred : b.warped_frame;
  }
  return pass;
}

ForwardPass forward_bundle(const DualMotionModel& model, const FrameSequence& sequence,
                           const std::optional<Tensor>& noise, const BranchFlags& flags) {
  std::vector<Var> frames;
  frames.reserve(sequence.length());
  for (int t = 0; t < sequence.length(); ++t) frames.emplace_back(sequence.frame(t));
  return forward_bundle(model, frames, noise, flags);
}

}  // namespace dualmotion
