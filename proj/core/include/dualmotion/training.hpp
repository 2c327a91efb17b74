#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dualmotion/losses.hpp"
#include "dualmotion/manifest.hpp"
#include "dualmotion/model.hpp"
#include "dualmotion/optim.hpp"

namespace dualmotion {

/// One training example (or a stack of them along N).
struct Batch {
  std::vector<Var> window;  // input frames, each [N, 3, H, W]
  Var target_frame;         // [N, 3, H, W]
  Var target_flow;          // [N, 2, H, W], relates the last input frame to the target
};

/// Plain scalar copy of a LossBreakdown for logging.
struct LossValues {
  Scalar l1_frame = 0, l1_warp = 0, l1_fused = 0, epe_flow_pred = 0, epe_flow_est = 0, kl = 0;
  Scalar gan_frame = 0, gan_flow = 0, lambda = 0, total = 0;

  static LossValues from(const LossBreakdown& b);
};

enum class StepKind { critic, generator };

struct StepRecord {
  long long step = 0;            // optimizer step index, 1-based
  long long generator_step = 0;  // generator updates completed so far
  StepKind kind = StepKind::generator;
  LossValues losses;             // generator steps
  Scalar critic_frame = 0;       // critic steps: frame objective before the update
  Scalar critic_flow = 0;        // critic steps: flow objective before the update
  Scalar max_abs_critic = 0;     // critic steps: after clipping

  /// One line: `step=.. kind=.. gen_step=.. key=value ...` with
  /// round-trippable numbers.
  std::string format() const;
};

/// Full mutable training state; everything a checkpoint stores.
struct TrainingState {
  TrainingConfig config;
  DualMotionModel model;
  RMSprop generator_opt;
  RMSprop frame_critic_opt;
  RMSprop flow_critic_opt;
  Rng rng;
  long long optimizer_steps = 0;
  long long generator_steps = 0;
  long long critic_steps = 0;
  std::uint64_t effective_seed = 0;

  /// Fresh model and optimizers from `config`; the seed drives both the
  /// initialization and the data/noise stream.
  static TrainingState create(const ModelConfig& model_config, const TrainingConfig& config);
  BranchFlags flags() const { return BranchFlags::from(config.ablation); }
};

class Trainer {
 public:
  /// Clips must hold at least window + 1 frames and ground-truth flows.
  Trainer(TrainingState state, std::vector<Clip> clips);

  /// One critic update on a fresh batch: RMSprop on the active critics,
  /// then weight clipping. Generator parameters are untouched.
  StepRecord critic_step();
  /// One generator update (encoder, generators, estimator, fusion).
  StepRecord generator_step();
  /// critic_steps_per_gen_step critic updates (when a GAN is on) followed by
  /// one generator update. Records are appended to `out`.
  void train_round(std::vector<StepRecord>& out);
  /// Runs rounds until `generator_steps` reaches `until`.
  void run(long long until, const std::function<void(const StepRecord&)>& on_step = {});

  Batch next_batch();

  TrainingState& state() { return state_; }
  const TrainingState& state() const { return state_; }
  const std::vector<Clip>& clips() const { return clips_; }

 private:
  bool critics_active() const;
  std::vector<std::pair<int, int>> windows_;  // (clip, start)
  TrainingState state_;
  std::vector<Clip> clips_;
};

struct TrainOptions {
  std::filesystem::path out_dir;        // checkpoints and log; empty: keep in memory
  std::optional<std::filesystem::path> resume;
  std::ostream* progress = nullptr;     // optional human-readable progress
};

/// Trains on the train split of `manifest`. Writes `train.log` (one record
/// per optimizer step), `ckpt_<gen_step>.bin` every checkpoint_interval
/// generator steps and `final.bin`. Returns the final state.
TrainingState train(const ModelConfig& model_config, const TrainingConfig& config,
                    const DatasetManifest& manifest, const TrainOptions& options);

enum class PredictMode { fused, frame_only, flow_only };

PredictMode parse_predict_mode(const std::string& s);
std::string to_string(PredictMode m);

struct Prediction {
  PredictionBundle bundle;  // values only, no graph
  Tensor frame;             // the output selected by the mode, [1, 3, H, W]
};

/// Test-time prediction at the posterior mean (zero noise). The last
/// `window` frames of `sequence` are used. A mode naming a disabled branch
/// falls back to the available one.
Prediction predict_next(const DualMotionModel& model, const BranchFlags& flags, const FrameSequence& sequence,
                        int window, PredictMode mode = PredictMode::fused);

struct MultiPrediction {
  std::vector<Tensor> frames;  // k frames, [1, 3, H, W]
  std::vector<Tensor> flows;   // k generated flows, [1, 2, H, W]; empty tensors without a flow branch
};

/// Recursive k-step prediction: each prediction is appended to the input
/// and the model is run again.
MultiPrediction predict_multi(const DualMotionModel& model, const BranchFlags& flags, const FrameSequence& sequence,
                              int window, int k, PredictMode mode = PredictMode::fused);

}  // namespace dualmotion
