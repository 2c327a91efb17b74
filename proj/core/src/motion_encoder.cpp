#include "dualmotion/motion_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dualmotion {

ConvLSTMCell ConvLSTMCell::create(int input_channels, int hidden_channels, int kernel, Rng& rng) {
  ConvLSTMCell cell;
  cell.hidden_ = hidden_channels;
  cell.gates_ = Conv2d::create(input_channels + hidden_channels, 4 * hidden_channels,
                               ops::ConvGeometry::same(kernel), rng);
  Tensor& b = cell.gates_.bias.mutable_value();
  for (int c = hidden_channels; c < 2 * hidden_channels; ++c) b[c] = 1.0;
  return cell;
}

ConvLSTMState ConvLSTMCell::zero_state(int batch, int height, int width) const {
  const Shape s{batch, hidden_, height, width};
  return {Var(Tensor::zeros(s)), Var(Tensor::zeros(s))};
}

std::pair<Var, ConvLSTMState> ConvLSTMCell::step(const Var& input, const ConvLSTMState& state) const {
  const Shape& xs = input.shape();
  const Shape& hs = state.hidden.shape();
  if (xs.size() != 4 || hs.size() != 4 || xs[0] != hs[0] || xs[2] != hs[2] || xs[3] != hs[3] ||
      hs[1] != hidden_ || state.cell.shape() != hs) {
    throw ShapeError("conv_lstm_step: input " + to_string(xs) + " does not match state " + to_string(hs));
  }
  const Var parts[] = {input, state.hidden};
  const Var g = gates_(ops::concat(parts, 1));
  const Var i = ops::sigmoid(ops::slice(g, 1, 0, hidden_));
  const Var f = ops::sigmoid(ops::slice(g, 1, hidden_, hidden_));
  const Var o = ops::sigmoid(ops::slice(g, 1, 2 * hidden_, hidden_));
  const Var cand = ops::tanh(ops::slice(g, 1, 3 * hidden_, hidden_));
  const Var cell = ops::add(ops::mul(f, state.cell), ops::mul(i, cand));
  const Var hidden = ops::mul(o, ops::tanh(cell));
  return {hidden, ConvLSTMState{hidden, cell}};
}

LatentCode sample(const LatentDistribution& dist, const Tensor& noise) {
  require_same_shape(dist.mean.value(), noise, "sample");
  const Var std_dev = ops::exp(ops::scale(dist.log_variance, 0.5));
  return {ops::add(dist.mean, ops::mul(std_dev, Var(noise))), noise};
}

Tensor draw_noise(const Shape& shape, Rng& rng) {
  std::normal_distribution<Scalar> normal(0.0, 1.0);
  Tensor t(shape);
  for (auto& v : t.values()) v = normal(rng);
  return t;
}

Var kl_divergence(const LatentDistribution& dist) {
  require_same_shape(dist.mean.value(), dist.log_variance.value(), "kl_divergence");
  // 1/2 * sum(mu^2 + exp(lv) - lv - 1)
  const Var terms = ops::sub(ops::add(ops::mul(dist.mean, dist.mean), ops::exp(dist.log_variance)),
                             ops::add_scalar(dist.log_variance, 1.0));
  return ops::scale(ops::sum(terms), 0.5);
}

MotionEncoder::MotionEncoder(const ModelConfig& config, Rng& rng) : latent_(config.latent_channels) {
  config.validate();
  const int d = latent_;
  const int c1 = std::max(d / 2, 8);
  const ops::ConvGeometry down{4, 2, 1, 1, 0};
  const ops::ConvGeometry keep{3, 1, 1, 1, 0};
  conv_[0] = Conv2d::create(3, c1, down, rng);
  conv_[1] = Conv2d::create(c1, d, down, rng);
  conv_[2] = Conv2d::create(d, d, down, rng);
  conv_[3] = Conv2d::create(d, d, keep, rng);
  norm_[0] = InstanceNorm::create(c1);
  for (int k = 1; k < 4; ++k) norm_[k] = InstanceNorm::create(d);
  core_ = ConvLSTMCell::create(d, d, 4, rng);
  mean_head_ = ConvLSTMCell::create(d, d, 4, rng);
  logvar_head_ = ConvLSTMCell::create(d, d, 4, rng);
  mean_readout_ = Conv2d::create(d, d, {1, 1, 0, 0, 0}, rng);
  logvar_readout_ = Conv2d::create(d, d, {1, 1, 0, 0, 0}, rng);
}

Var MotionEncoder::frame_features(const Var& frame) const {
  Var x = frame;
  for (int k = 0; k < 4; ++k) x = ops::relu(norm_[k](conv_[k](x)));
  return x;
}

LatentDistribution MotionEncoder::encode(std::span<const Var> frames) const {
  if (frames.empty()) throw std::invalid_argument("encode: empty frame sequence");
  const Shape& s = frames.front().shape();
  if (s.size() != 4 || s[1] != 3) throw ShapeError("encode: expected [N, 3, H, W] frames, got " + to_string(s));
  if (s[2] % 8 || s[3] % 8) throw ShapeError("encode: frame size " + to_string(s) + " is not a multiple of 8");
  const int n = s[0], h = s[2] / 8, w = s[3] / 8;
  ConvLSTMState core = core_.zero_state(n, h, w);
  ConvLSTMState mean_state = mean_head_.zero_state(n, h, w);
  ConvLSTMState logvar_state = logvar_head_.zero_state(n, h, w);
  for (const Var& frame : frames) {
    if (frame.shape() != s) throw ShapeError("encode: frames differ in shape");
    auto [out, next] = core_.step(frame_features(frame), core);
    core = next;
    mean_state = mean_head_.step(out, mean_state).second;
    logvar_state = logvar_head_.step(out, logvar_state).second;
  }
  return {mean_readout_(mean_state.hidden), logvar_readout_(logvar_state.hidden)};
}

LatentDistribution MotionEncoder::encode(const FrameSequence& sequence) const {
  std::vector<Var> frames;
  frames.reserve(sequence.length());
  for (int t = 0; t < sequence.length(); ++t) frames.emplace_back(sequence.frame(t));
  return encode(frames);
}

ParamList MotionEncoder::parameters() const {
  ParamList out;
  for (int k = 0; k < 4; ++k) {
    conv_[k].collect(out, "encoder.conv" + std::to_string(k));
    norm_[k].collect(out, "encoder.norm" + std::to_string(k));
  }
  core_.collect(out, "encoder.core");
  mean_head_.collect(out, "encoder.mean_head");
  logvar_head_.collect(out, "encoder.logvar_head");
  mean_readout_.collect(out, "encoder.mean_readout");
  logvar_readout_.collect(out, "encoder.logvar_readout");
  return out;
}

}  // namespace dualmotion
