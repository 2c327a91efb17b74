#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "dualmotion/checkpoint.hpp"
#include "dualmotion/errors.hpp"
#include "dualmotion/synthetic.hpp"
#include "dualmotion/training.hpp"
#include "tempdir.hpp"

using namespace dualmotion;
using dualmotion::testing::TempDir;

namespace {

ModelConfig small_model() {
  ModelConfig m;
  m.height = 32;
  m.width = 32;
  m.latent_channels = 8;
  m.critic_channels = 4;
  return m;
}

TrainingConfig small_training(std::uint64_t seed = 3) {
  TrainingConfig t;
  t.seed = seed;
  t.learning_rate = 1e-3;
  t.window = 3;
  t.steps = 10;
  t.checkpoint_interval = 4;
  return t;
}

SceneSampling small_scenes() {
  SceneSampling p;
  p.height = 32;
  p.width = 32;
  p.num_frames = 6;
  p.min_size = 6;
  p.max_size = 10;
  return p;
}

std::vector<Clip> make_clips(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Clip> out;
  for (int i = 0; i < n; ++i) {
    const SyntheticClip s = generate_moving_shapes(random_scene(small_scenes(), rng), seed + i);
    Clip c;
    c.frames = s.frames;
    c.flows = s.flows;
    out.push_back(std::move(c));
  }
  return out;
}

Trainer make_trainer(const TrainingConfig& t, std::uint64_t data_seed = 11) {
  return Trainer(TrainingState::create(small_model(), t), make_clips(3, data_seed));
}

/// Writes a manifest of scene entries in `dir`.
DatasetManifest write_dataset(const std::filesystem::path& dir, int n) {
  std::mt19937_64 rng(21);
  std::filesystem::create_directories(dir / "scenes");
  DatasetManifest m;
  m.height = 32;
  m.width = 32;
  for (int i = 0; i < n; ++i) {
    const std::string name = "scenes/s" + std::to_string(i) + ".txt";
    write_scene_spec(dir / name, random_scene(small_scenes(), rng));
    m.entries.push_back({i + 1 < n ? Split::train : Split::test, {}, name, static_cast<std::uint64_t>(i), std::nullopt});
  }
  write_manifest(dir / "manifest.txt", m);
  return read_manifest(dir / "manifest.txt");
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("RMSprop update matches the closed form") {
  Var w(Tensor({2}, {1.0, -0.5}), true);
  RMSprop opt({{"w", w}}, {0.1, 0.99, 1e-8});
  backward(ops::weighted_sum(w, Tensor({2}, {2.0, 0.0})));
  opt.step();
  opt.zero_grad();
  // ms = 0.01 * 4 = 0.04, so the first step is 0.1 * 2 / (0.2 + eps).
  const double w1 = 1.0 - 0.2 / (0.2 + 1e-8);
  CHECK(w.value()[0] == doctest::Approx(w1).epsilon(1e-12));
  CHECK(w.value()[1] == -0.5);
  CHECK(opt.state()[0][0] == doctest::Approx(0.04).epsilon(1e-15));
  backward(ops::weighted_sum(w, Tensor({2}, {2.0, 0.0})));
  opt.step();
  const double ms = 0.99 * 0.04 + 0.01 * 4.0;
  CHECK(w.value()[0] == doctest::Approx(w1 - 0.1 * 2.0 / (std::sqrt(ms) + 1e-8)).epsilon(1e-12));
  CHECK(opt.steps_taken() == 2);
}

TEST_CASE("five critic updates precede each generator update") {
  Trainer tr = make_trainer(small_training());
  std::vector<StepRecord> records;
  for (int r = 0; r < 3; ++r) tr.train_round(records);
  REQUIRE(records.size() == 18);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].step == static_cast<long long>(i + 1));
    CHECK((records[i].kind == StepKind::generator) == (i % 6 == 5));
  }
  CHECK(tr.state().generator_steps == 3);
  CHECK(tr.state().critic_steps == 15);

  TrainingConfig off = small_training();
  off.ablation.apply("gan_off");
  Trainer quiet = make_trainer(off);
  records.clear();
  quiet.train_round(records);
  REQUIRE(records.size() == 1);
  CHECK(records[0].kind == StepKind::generator);
}

TEST_CASE("critic and generator updates touch only their own parameters") {
  Trainer tr = make_trainer(small_training());
  const DualMotionModel& m = tr.state().model;
  for (int r = 0; r < 3; ++r) {
    const auto g0 = checksum(m.generator_parameters());
    const auto f0 = checksum(m.frame_critic_parameters()), w0 = checksum(m.flow_critic_parameters());
    tr.critic_step();
    CHECK(checksum(m.generator_parameters()) == g0);
    CHECK(checksum(m.frame_critic_parameters()) != f0);
    CHECK(checksum(m.flow_critic_parameters()) != w0);

    const auto g1 = checksum(m.generator_parameters()), c1 = checksum(m.critic_parameters());
    tr.generator_step();
    CHECK(checksum(m.generator_parameters()) != g1);
    CHECK(checksum(m.critic_parameters()) == c1);
  }
}

TEST_CASE("critic weights stay within the clip bound after every critic update") {
  TrainingConfig t = small_training();
  t.learning_rate = 0.05;  // large steps push weights past the bound
  Trainer tr = make_trainer(t);
  tr.run(4, [&](const StepRecord& r) {
    if (r.kind != StepKind::critic) return;
    CHECK(r.max_abs_critic <= t.clip_bound);
    CHECK(max_abs_weight(tr.state().model.critic_parameters()) <= t.clip_bound);
  });
  CHECK(max_abs_weight(tr.state().model.critic_parameters()) == doctest::Approx(t.clip_bound));
}

TEST_CASE("training is deterministic for a fixed seed") {
  // 17 rounds of 6 updates: the first 100+ optimizer steps.
  std::vector<std::string> a, b;
  Trainer ta = make_trainer(small_training(5));
  Trainer tb = make_trainer(small_training(5));
  ta.run(17, [&](const StepRecord& r) { a.push_back(r.format()); });
  tb.run(17, [&](const StepRecord& r) { b.push_back(r.format()); });
  REQUIRE(a.size() >= 100);
  CHECK(a == b);
  CHECK(checksum(ta.state().model.all_parameters()) == checksum(tb.state().model.all_parameters()));

  Trainer tc = make_trainer(small_training(6));
  tc.run(1);
  Trainer td = make_trainer(small_training(5));
  td.run(1);
  CHECK(checksum(tc.state().model.all_parameters()) != checksum(td.state().model.all_parameters()));
}

TEST_CASE("nondeterministic mode mixes in an entropy source") {
  TrainingConfig t = small_training(5);
  t.deterministic = false;
  const TrainingState a = TrainingState::create(small_model(), t);
  const TrainingState b = TrainingState::create(small_model(), t);
  CHECK(a.effective_seed != b.effective_seed);
  CHECK(TrainingState::create(small_model(), small_training(5)).effective_seed == 5);
}

TEST_CASE("with lambda = 0 the generator trajectory ignores the critics") {
  TrainingConfig t = small_training(7);
  t.lambda = 0;
  Trainer a = make_trainer(t);
  Trainer b = make_trainer(t);
  for (const auto& p : b.state().model.critic_parameters()) p.var.mutable_value().fill(0.007);
  a.run(5);
  b.run(5);
  CHECK(checksum(a.state().model.generator_parameters()) == checksum(b.state().model.generator_parameters()));
  CHECK(checksum(a.state().model.critic_parameters()) != checksum(b.state().model.critic_parameters()));
}

TEST_CASE("ablations switch off losses and parameter updates") {
  TrainingConfig t = small_training();
  t.ablation.apply("flow_off");
  Trainer tr = make_trainer(t);
  const auto flow_critic = checksum(tr.state().model.flow_critic_parameters());
  std::vector<StepRecord> records;
  tr.train_round(records);
  const LossValues& l = records.back().losses;
  CHECK(l.epe_flow_pred == 0.0);
  CHECK(l.epe_flow_est == 0.0);
  CHECK(l.gan_flow == 0.0);
  CHECK(l.l1_frame > 0.0);
  CHECK(checksum(tr.state().model.flow_critic_parameters()) == flow_critic);

  TrainingConfig n = small_training();
  n.ablation.apply("no_encoder");
  Trainer ne = make_trainer(n);
  records.clear();
  ne.train_round(records);
  CHECK(records.back().losses.kl == 0.0);
}

TEST_CASE("trainer input validation") {
  TrainingConfig t = small_training();
  std::vector<Clip> clips = make_clips(1, 30);
  clips[0].flows.clear();
  CHECK_THROWS_AS(Trainer(TrainingState::create(small_model(), t), clips), DatasetError);

  clips = make_clips(1, 30);
  clips[0].frames = clips[0].frames.window(0, 3);
  CHECK_THROWS_AS(Trainer(TrainingState::create(small_model(), t), clips), DatasetError);

  clips = make_clips(1, 30);
  for (auto& v : clips[0].frames.frames.values()) v = std::numeric_limits<double>::quiet_NaN();
  Trainer bad(TrainingState::create(small_model(), t), clips);
  CHECK_THROWS_AS(bad.critic_step(), TrainingError);
  CHECK_THROWS_AS(bad.generator_step(), TrainingError);
}

TEST_CASE("checkpoint round trip and resume") {
  TempDir dir;
  const TrainingConfig t = small_training(9);
  Trainer full = make_trainer(t);
  full.run(6);

  Trainer first = make_trainer(t);
  first.run(3);
  save_checkpoint(dir / "mid.bin", first.state());
  TrainingState loaded = load_checkpoint(dir / "mid.bin");
  CHECK(loaded.generator_steps == 3);
  CHECK(loaded.critic_steps == 15);
  CHECK(loaded.optimizer_steps == 18);
  CHECK(loaded.config.seed == 9);
  CHECK(checksum(loaded.model.all_parameters()) == checksum(first.state().model.all_parameters()));
  Trainer resumed(std::move(loaded), make_clips(3, 11));
  resumed.run(6);
  CHECK(checksum(resumed.state().model.all_parameters()) == checksum(full.state().model.all_parameters()));

  {
    std::ofstream out(dir / "junk.bin", std::ios::binary);
    out << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.bin"), FormatError);
  std::filesystem::resize_file(dir / "mid.bin", std::filesystem::file_size(dir / "mid.bin") / 2);
  CHECK_THROWS_AS(load_checkpoint(dir / "mid.bin"), FormatError);
}

TEST_CASE("train writes a log, checkpoints and resumes exactly") {
  TempDir dir;
  const DatasetManifest m = write_dataset(dir.path(), 4);
  TrainingConfig t = small_training(12);
  t.steps = 8;
  const TrainingState whole = train(small_model(), t, m, {dir / "whole", std::nullopt, nullptr});
  const auto lines = read_lines(dir / "whole" / "train.log");
  CHECK(lines.size() == 48);
  CHECK(lines.front().rfind("step=1 kind=critic gen_step=0", 0) == 0);
  CHECK(lines.back().rfind("step=48 kind=generator gen_step=8", 0) == 0);
  CHECK(std::filesystem::exists(dir / "whole" / "ckpt_000004.bin"));
  CHECK(std::filesystem::exists(dir / "whole" / "ckpt_000008.bin"));
  CHECK(std::filesystem::exists(dir / "whole" / "final.bin"));

  const TrainingState resumed =
      train(small_model(), t, m, {dir / "resumed", dir / "whole" / "ckpt_000004.bin", nullptr});
  CHECK(resumed.generator_steps == 8);
  CHECK(checksum(resumed.model.all_parameters()) == checksum(whole.model.all_parameters()));
  const auto tail = read_lines(dir / "resumed" / "train.log");
  REQUIRE(tail.size() == 24);
  CHECK(std::vector<std::string>(lines.begin() + 24, lines.end()) == tail);
}

TEST_CASE("prediction modes and recursive prediction") {
  Trainer tr = make_trainer(small_training());
  tr.run(2);
  const DualMotionModel& model = tr.state().model;
  const BranchFlags flags = tr.state().flags();
  const Clip clip = make_clips(1, 40).front();
  const Prediction fused = predict_next(model, flags, clip.frames, 3, PredictMode::fused);
  const Prediction frame = predict_next(model, flags, clip.frames, 3, PredictMode::frame_only);
  const Prediction flow = predict_next(model, flags, clip.frames, 3, PredictMode::flow_only);
  CHECK(fused.frame == fused.bundle.fused_frame.value());
  CHECK(frame.frame == fused.bundle.frame_pred.value());
  CHECK(flow.frame == fused.bundle.warped_frame.value());

  // A mode naming a disabled branch falls back to the other one.
  BranchFlags frame_only = flags;
  frame_only.flow = false;
  CHECK(predict_next(model, frame_only, clip.frames, 3, PredictMode::flow_only).frame ==
        predict_next(model, frame_only, clip.frames, 3, PredictMode::frame_only).frame);

  const MultiPrediction multi = predict_multi(model, flags, clip.frames, 3, 4);
  REQUIRE(multi.frames.size() == 4);
  CHECK(multi.frames[0] == fused.frame);
  FrameSequence running = clip.frames;
  running.append(multi.frames[0]);
  running.append(multi.frames[1]);
  CHECK(predict_next(model, flags, running, 3).frame == multi.frames[2]);
  CHECK(multi.flows[0].shape() == Shape{1, 2, 32, 32});
  CHECK_THROWS_AS(predict_multi(model, flags, clip.frames, 3, 0), std::invalid_argument);
  CHECK(parse_predict_mode(to_string(PredictMode::flow_only)) == PredictMode::flow_only);
  CHECK_THROWS_AS(parse_predict_mode("both"), std::invalid_argument);
}
