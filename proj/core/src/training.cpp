#include "dualmotion/training.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "dualmotion/checkpoint.hpp"
#include "dualmotion/errors.hpp"

namespace dualmotion {

namespace fs = std::filesystem;

LossValues LossValues::from(const LossBreakdown& b) {
  LossValues v;
  v.l1_frame = b.l1_frame.value().item();
  v.l1_warp = b.l1_warp.value().item();
  v.l1_fused = b.l1_fused.value().item();
  v.epe_flow_pred = b.epe_flow_pred.value().item();
  v.epe_flow_est = b.epe_flow_est.value().item();
  v.kl = b.kl.value().item();
  v.gan_frame = b.gan_frame.value().item();
  v.gan_flow = b.gan_flow.value().item();
  v.lambda = b.lambda;
  v.total = b.total.value().item();
  return v;
}

std::string StepRecord::format() const {
  std::ostringstream os;
  os << "step=" << step << " kind=" << (kind == StepKind::critic ? "critic" : "generator")
     << " gen_step=" << generator_step;
  if (kind == StepKind::critic) {
    os << " critic_frame=" << format_scalar(critic_frame) << " critic_flow=" << format_scalar(critic_flow)
       << " max_abs_critic=" << format_scalar(max_abs_critic);
  } else {
    const LossValues& l = losses;
    os << " l1_frame=" << format_scalar(l.l1_frame) << " l1_warp=" << format_scalar(l.l1_warp)
       << " l1_fused=" << format_scalar(l.l1_fused) << " epe_flow_pred=" << format_scalar(l.epe_flow_pred)
       << " epe_flow_est=" << format_scalar(l.epe_flow_est) << " kl=" << format_scalar(l.kl)
       << " gan_frame=" << format_scalar(l.gan_frame) << " gan_flow=" << format_scalar(l.gan_flow)
       << " lambda=" << format_scalar(l.lambda) << " total=" << format_scalar(l.total);
  }
  return os.str();
}

TrainingState TrainingState::create(const ModelConfig& model_config, const TrainingConfig& config) {
  config.validate();
  TrainingState s;
  s.config = config;
  s.effective_seed = config.seed;
  if (!config.deterministic) {
    std::random_device rd;
    s.effective_seed ^= (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
  s.rng.seed(s.effective_seed);
  s.model = DualMotionModel(model_config, s.rng);
  const RMSpropOptions opt{config.learning_rate, config.rmsprop_decay, config.rmsprop_eps};
  s.generator_opt = RMSprop(s.model.generator_parameters(), opt);
  s.frame_critic_opt = RMSprop(s.model.frame_critic_parameters(), opt);
  s.flow_critic_opt = RMSprop(s.model.flow_critic_parameters(), opt);
  return s;
}

Trainer::Trainer(TrainingState state, std::vector<Clip> clips) : state_(std::move(state)), clips_(std::move(clips)) {
  const int window = state_.config.window;
  const ModelConfig& mc = state_.model.config();
  for (int c = 0; c < static_cast<int>(clips_.size()); ++c) {
    const Clip& clip = clips_[c];
    if (clip.frames.height() != mc.height || clip.frames.width() != mc.width) {
      throw DatasetError("clip '" + clip.frames.source_id + "' does not match the model frame size");
    }
    if (!clip.has_flows()) throw DatasetError("clip '" + clip.frames.source_id + "' has no ground-truth flow");
    for (int start = 0; start + window < clip.frames.length(); ++start) windows_.emplace_back(c, start);
  }
  if (windows_.empty()) {
    throw DatasetError("no clip holds window + 1 = " + std::to_string(window + 1) + " frames");
  }
}

Batch Trainer::next_batch() {
  const int window = state_.config.window;
  const int n = state_.config.batch_size;
  std::vector<std::vector<Tensor>> frames(window + 1);
  std::vector<Tensor> flows;
  for (int k = 0; k < n; ++k) {
    const auto [c, start] = windows_[state_.rng() % windows_.size()];
    const Clip& clip = clips_[c];
    for (int t = 0; t <= window; ++t) frames[t].push_back(clip.frames.frame(start + t));
    flows.push_back(clip.flows[start + window - 1].batched());
  }
  Batch b;
  for (int t = 0; t < window; ++t) b.window.emplace_back(stack_batch(frames[t]));
  b.target_frame = Var(stack_batch(frames[window]));
  b.target_flow = Var(stack_batch(flows));
  return b;
}

bool Trainer::critics_active() const {
  return state_.config.ablation.frame_gan_on || state_.config.ablation.flow_gan_on;
}

namespace {

void require_finite(const std::vector<std::pair<const char*, Scalar>>& terms, long long step) {
  bool ok = true;
  for (const auto& [name, v] : terms) ok = ok && std::isfinite(v);
  if (ok) return;
  std::ostringstream os;
  os << "non-finite loss at optimizer step " << step << ":";
  for (const auto& [name, v] : terms) os << ' ' << name << '=' << v;
  throw TrainingError(os.str());
}

}  // namespace

StepRecord Trainer::critic_step() {
  TrainingState& s = state_;
  const AblationFlags& ab = s.config.ablation;
  const BranchFlags flags = s.flags();
  Batch batch = next_batch();
  const Tensor noise = draw_noise(s.model.config().latent_shape(s.config.batch_size), s.rng);
  ForwardPass pass;
  {
    NoGradGuard guard;
    pass = forward_bundle(s.model, batch.window, noise, flags);
  }
  const PredictionBundle& b = pass.bundle;
  s.frame_critic_opt.zero_grad();
  s.flow_critic_opt.zero_grad();
  const Var gan_frame = ab.frame_gan_on ? gan_frame_objective(batch.target_frame, b.frame_pred, b.warped_frame,
                                                              s.model.frame_critic)
                                        : zero_scalar();
  const Var gan_flow = ab.flow_gan_on ? gan_flow_objective(batch.target_flow, b.flow_pred, b.estimated_flow,
                                                           s.model.flow_critic)
                                      : zero_scalar();
  ++s.optimizer_steps;
  require_finite({{"gan_frame", gan_frame.value().item()}, {"gan_flow", gan_flow.value().item()}}, s.optimizer_steps);
  // Critics ascend their objectives: minimize the negated sum.
  backward(ops::scale(ops::add(gan_frame, gan_flow), -1.0));
  Scalar max_abs = 0;
  if (ab.frame_gan_on) {
    s.frame_critic_opt.step();
    clip_weights(s.frame_critic_opt.params(), s.config.clip_bound);
    max_abs = std::max(max_abs, max_abs_weight(s.frame_critic_opt.params()));
  }
  if (ab.flow_gan_on) {
    s.flow_critic_opt.step();
    clip_weights(s.flow_critic_opt.params(), s.config.clip_bound);
    max_abs = std::max(max_abs, max_abs_weight(s.flow_critic_opt.params()));
  }
  s.frame_critic_opt.zero_grad();
  s.flow_critic_opt.zero_grad();
  ++s.critic_steps;

  StepRecord r;
  r.step = s.optimizer_steps;
  r.generator_step = s.generator_steps;
  r.kind = StepKind::critic;
  r.critic_frame = gan_frame.value().item();
  r.critic_flow = gan_flow.value().item();
  r.max_abs_critic = max_abs;
  return r;
}

StepRecord Trainer::generator_step() {
  TrainingState& s = state_;
  const AblationFlags& ab = s.config.ablation;
  const BranchFlags flags = s.flags();
  Batch batch = next_batch();
  const Tensor noise = draw_noise(s.model.config().latent_shape(s.config.batch_size), s.rng);
  s.generator_opt.zero_grad();
  const ForwardPass pass = forward_bundle(s.model, batch.window, noise, flags);
  const PredictionBundle& b = pass.bundle;
  VaeOptions vo;
  vo.kl_weight = flags.sample ? s.config.kl_weight : 0.0;
  LossBreakdown parts = vae_loss(b, batch.target_frame, batch.target_flow, pass.dist, vo);
  const Scalar lambda = s.config.lambda;
  const bool use_gan = lambda != 0;
  const Var gan_frame = use_gan && ab.frame_gan_on ? gan_frame_objective(batch.target_frame, b.frame_pred,
                                                                         b.warped_frame, s.model.frame_critic)
                                                   : zero_scalar();
  const Var gan_flow = use_gan && ab.flow_gan_on ? gan_flow_objective(batch.target_flow, b.flow_pred,
                                                                      b.estimated_flow, s.model.flow_critic)
                                                 : zero_scalar();
  const Objectives obj = total_objective(parts, gan_frame, gan_flow, lambda);
  ++s.optimizer_steps;
  const LossValues values = LossValues::from(parts);
  require_finite({{"l1_frame", values.l1_frame},
                  {"l1_warp", values.l1_warp},
                  {"l1_fused", values.l1_fused},
                  {"epe_flow_pred", values.epe_flow_pred},
                  {"epe_flow_est", values.epe_flow_est},
                  {"kl", values.kl},
                  {"gan_frame", values.gan_frame},
                  {"gan_flow", values.gan_flow}},
                 s.optimizer_steps);
  backward(obj.generator_loss);
  s.generator_opt.step();
  s.generator_opt.zero_grad();
  s.frame_critic_opt.zero_grad();
  s.flow_critic_opt.zero_grad();
  ++s.generator_steps;

  StepRecord r;
  r.step = s.optimizer_steps;
  r.generator_step = s.generator_steps;
  r.kind = StepKind::generator;
  r.losses = values;
  return r;
}

void Trainer::train_round(std::vector<StepRecord>& out) {
  if (critics_active()) {
    for (int k = 0; k < state_.config.critic_steps_per_gen_step; ++k) out.push_back(critic_step());
  }
  out.push_back(generator_step());
}

void Trainer::run(long long until, const std::function<void(const StepRecord&)>& on_step) {
  std::vector<StepRecord> records;
  while (state_.generator_steps < until) {
    records.clear();
    train_round(records);
    if (on_step) {
      for (const auto& r : records) on_step(r);
    }
  }
}

TrainingState train(const ModelConfig& model_config, const TrainingConfig& config,
                    const DatasetManifest& manifest, const TrainOptions& options) {
  manifest.validate();
  TrainingState state = options.resume ? load_checkpoint(*options.resume) : TrainingState::create(model_config, config);
  if (options.resume) {
    // The resumed run keeps its stored configuration except for the budget.
    state.config.steps = config.steps;
    state.config.checkpoint_interval = config.checkpoint_interval;
  }
  Trainer trainer(std::move(state), load_split(manifest, Split::train));
  std::ofstream log;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    log.open(options.out_dir / "train.log", options.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write '" + (options.out_dir / "train.log").string() + "'");
  }
  const TrainingConfig& cfg = trainer.state().config;
  std::vector<StepRecord> records;
  while (trainer.state().generator_steps < cfg.steps) {
    records.clear();
    trainer.train_round(records);
    const long long g = trainer.state().generator_steps;
    if (log.is_open()) {
      for (const auto& r : records) log << r.format() << '\n';
    }
    if (options.progress && (g % 50 == 0 || g == cfg.steps)) {
      const LossValues& l = records.back().losses;
      *options.progress << "generator step " << g << "/" << cfg.steps << "  total=" << l.total
                        << "  l1_fused=" << l.l1_fused << "  epe_flow_pred=" << l.epe_flow_pred << '\n';
    }
    if (!options.out_dir.empty() && cfg.checkpoint_interval > 0 && g % cfg.checkpoint_interval == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06lld.bin", g);
      save_checkpoint(options.out_dir / name, trainer.state());
    }
  }
  if (!options.out_dir.empty()) {
    log.flush();
    save_checkpoint(options.out_dir / "final.bin", trainer.state());
  }
  return std::move(trainer.state());
}

PredictMode parse_predict_mode(const std::string& s) {
  if (s == "fused") return PredictMode::fused;
  if (s == "frame_only") return PredictMode::frame_only;
  if (s == "flow_only") return PredictMode::flow_only;
  throw std::invalid_argument("unknown prediction mode '" + s + "' (fused, frame_only, flow_only)");
}

std::string to_string(PredictMode m) {
  switch (m) {
    case PredictMode::fused:
      return "fused";
    case PredictMode::frame_only:
      return "frame_only";
    case PredictMode::flow_only:
      return "flow_only";
  }
  return "fused";
}

Prediction predict_next(const DualMotionModel& model, const BranchFlags& flags, const FrameSequence& sequence,
                        int window, PredictMode mode) {
  NoGradGuard guard;
  const int t = sequence.length();
  const int w = std::min(window, t);
  std::vector<Var> frames;
  for (int k = t - w; k < t; ++k) frames.emplace_back(sequence.frame(k));
  ForwardPass pass = forward_bundle(model, frames, std::nullopt, flags);
  Prediction p;
  p.bundle = pass.bundle;
  const PredictionBundle& b = p.bundle;
  if (mode == PredictMode::frame_only && b.frame_pred.defined()) {
    p.frame = b.frame_pred.value();
  } else if (mode == PredictMode::flow_only && b.warped_frame.defined()) {
    p.frame = b.warped_frame.value();
  } else {
    p.frame = b.fused_frame.value();
  }
  return p;
}

MultiPrediction predict_multi(const DualMotionModel& model, const BranchFlags& flags, const FrameSequence& sequence,
                              int window, int k, PredictMode mode) {
  if (k < 1) throw std::invalid_argument("predict_multi: k must be >= 1");
  FrameSequence running = sequence.window(std::max(0, sequence.length() - window), std::min(window, sequence.length()));
  MultiPrediction out;
  for (int step = 0; step < k; ++step) {
    Prediction p = predict_next(model, flags, running, window, mode);
    out.frames.push_back(p.frame);
    out.flows.push_back(p.bundle.flow_pred.defined() ? p.bundle.flow_pred.value() : Tensor());
    running.append(p.frame);
  }
  return out;
}

}  // namespace dualmotion
