#include "dualmotion/config.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace dualmotion {

void ModelConfig::validate() const {
  if (height <= 0 || width <= 0 || height % 8 || width % 8) {
    throw std::invalid_argument("frame size must be positive multiples of 8");
  }
  if (latent_channels < 2) throw std::invalid_argument("latent_channels must be >= 2");
  if (critic_channels < 1) throw std::invalid_argument("critic_channels must be >= 1");
  if (!(output_knee >= 0 && output_knee < 1)) throw std::invalid_argument("output_knee must lie in [0, 1)");
}

void AblationFlags::apply(const std::string& names) {
  std::stringstream ss(names);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty() || name == "full") {
      continue;
    } else if (name == "flow_off") {
      flow_branch_on = false;
      flow_gan_on = false;
    } else if (name == "frame_off") {
      frame_branch_on = false;
      frame_gan_on = false;
    } else if (name == "gan_off") {
      frame_gan_on = false;
      flow_gan_on = false;
    } else if (name == "frame_gan_off") {
      frame_gan_on = false;
    } else if (name == "flow_gan_off") {
      flow_gan_on = false;
    } else if (name == "no_encoder") {
      encoder_probabilistic_on = false;
    } else {
      throw std::invalid_argument("unknown ablation '" + name + "'");
    }
  }
}

std::string AblationFlags::describe() const {
  std::string s;
  auto add = [&s](bool on, const char* n) {
    if (!s.empty()) s += ' ';
    s += n;
    s += on ? "=on" : "=off";
  };
  add(frame_branch_on, "frame_branch");
  add(flow_branch_on, "flow_branch");
  add(frame_gan_on, "frame_gan");
  add(flow_gan_on, "flow_gan");
  add(encoder_probabilistic_on, "probabilistic_encoder");
  return s;
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(lambda >= 0)) throw std::invalid_argument("lambda must be non-negative");
  if (!(clip_bound > 0)) throw std::invalid_argument("clip_bound must be positive");
  if (critic_steps_per_gen_step < 0) throw std::invalid_argument("critic_steps_per_gen_step must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (checkpoint_interval < 0) throw std::invalid_argument("checkpoint_interval must be >= 0");
  if (!(rmsprop_decay > 0 && rmsprop_decay < 1)) throw std::invalid_argument("rmsprop_decay must lie in (0, 1)");
  if (!(rmsprop_eps > 0)) throw std::invalid_argument("rmsprop_eps must be positive");
  if (!(kl_weight >= 0)) throw std::invalid_argument("kl_weight must be non-negative");
  if (!ablation.frame_branch_on && !ablation.flow_branch_on) {
    throw std::invalid_argument("at least one of the frame and flow branches must be on");
  }
}

std::string format_scalar(Scalar v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

Scalar parse_scalar(const std::string& key, const std::string& s) {
  Scalar v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("config key '" + key + "': invalid number '" + s + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& s) {
  Int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("config key '" + key + "': invalid integer '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "1" || s == "true" || s == "on") return true;
  if (s == "0" || s == "false" || s == "off") return false;
  throw std::invalid_argument("config key '" + key + "': invalid boolean '" + s + "'");
}

}  // namespace

KeyValues to_key_values(const ModelConfig& m, const TrainingConfig& t) {
  KeyValues kv;
  kv["model.height"] = std::to_string(m.height);
  kv["model.width"] = std::to_string(m.width);
  kv["model.latent_channels"] = std::to_string(m.latent_channels);
  kv["model.critic_channels"] = std::to_string(m.critic_channels);
  kv["model.output_knee"] = format_scalar(m.output_knee);
  kv["train.lambda"] = format_scalar(t.lambda);
  kv["train.learning_rate"] = format_scalar(t.learning_rate);
  kv["train.critic_steps_per_gen_step"] = std::to_string(t.critic_steps_per_gen_step);
  kv["train.clip_bound"] = format_scalar(t.clip_bound);
  kv["train.batch_size"] = std::to_string(t.batch_size);
  kv["train.steps"] = std::to_string(t.steps);
  kv["train.seed"] = std::to_string(t.seed);
  kv["train.checkpoint_interval"] = std::to_string(t.checkpoint_interval);
  kv["train.deterministic"] = t.deterministic ? "true" : "false";
  kv["train.window"] = std::to_string(t.window);
  kv["train.rmsprop_decay"] = format_scalar(t.rmsprop_decay);
  kv["train.rmsprop_eps"] = format_scalar(t.rmsprop_eps);
  kv["train.kl_weight"] = format_scalar(t.kl_weight);
  kv["ablation.frame_branch_on"] = t.ablation.frame_branch_on ? "true" : "false";
  kv["ablation.flow_branch_on"] = t.ablation.flow_branch_on ? "true" : "false";
  kv["ablation.frame_gan_on"] = t.ablation.frame_gan_on ? "true" : "false";
  kv["ablation.flow_gan_on"] = t.ablation.flow_gan_on ? "true" : "false";
  kv["ablation.encoder_probabilistic_on"] = t.ablation.encoder_probabilistic_on ? "true" : "false";
  return kv;
}

void from_key_values(const KeyValues& kv, ModelConfig& m, TrainingConfig& t) {
  for (const auto& [k, v] : kv) {
    if (k == "model.height") m.height = parse_int<int>(k, v);
    else if (k == "model.width") m.width = parse_int<int>(k, v);
    else if (k == "model.latent_channels") m.latent_channels = parse_int<int>(k, v);
    else if (k == "model.critic_channels") m.critic_channels = parse_int<int>(k, v);
    else if (k == "model.output_knee") m.output_knee = parse_scalar(k, v);
    else if (k == "train.lambda") t.lambda = parse_scalar(k, v);
    else if (k == "train.learning_rate") t.learning_rate = parse_scalar(k, v);
    else if (k == "train.critic_steps_per_gen_step") t.critic_steps_per_gen_step = parse_int<int>(k, v);
    else if (k == "train.clip_bound") t.clip_bound = parse_scalar(k, v);
    else if (k == "train.batch_size") t.batch_size = parse_int<int>(k, v);
    else if (k == "train.steps") t.steps = parse_int<int>(k, v);
    else if (k == "train.seed") t.seed = parse_int<std::uint64_t>(k, v);
    else if (k == "train.checkpoint_interval") t.checkpoint_interval = parse_int<int>(k, v);
    else if (k == "train.deterministic") t.deterministic = parse_bool(k, v);
    else if (k == "train.window") t.window = parse_int<int>(k, v);
    else if (k == "train.rmsprop_decay") t.rmsprop_decay = parse_scalar(k, v);
    else if (k == "train.rmsprop_eps") t.rmsprop_eps = parse_scalar(k, v);
    else if (k == "train.kl_weight") t.kl_weight = parse_scalar(k, v);
    else if (k == "ablation.frame_branch_on") t.ablation.frame_branch_on = parse_bool(k, v);
    else if (k == "ablation.flow_branch_on") t.ablation.flow_branch_on = parse_bool(k, v);
    else if (k == "ablation.frame_gan_on") t.ablation.frame_gan_on = parse_bool(k, v);
    else if (k == "ablation.flow_gan_on") t.ablation.flow_gan_on = parse_bool(k, v);
    else if (k == "ablation.encoder_probabilistic_on") t.ablation.encoder_probabilistic_on = parse_bool(k, v);
    else throw std::invalid_argument("unknown config key '" + k + "'");
  }
}

}  // namespace dualmotion
