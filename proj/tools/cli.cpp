#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dualmotion/checkpoint.hpp"
#include "dualmotion/errors.hpp"
#include "dualmotion/evaluation.hpp"
#include "dualmotion/probe.hpp"
#include "dualmotion/synthetic.hpp"

namespace dualmotion::cli {

namespace fs = std::filesystem;

namespace {

std::string numbered(const char* prefix, int k, const char* ext = nullptr) {
  char name[64];
  std::snprintf(name, sizeof(name), "%s_%04d", prefix, k);
  return ext ? std::string(name) + "." + ext : std::string(name);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

// ---------------------------------------------------------------- make-dataset

struct MakeDatasetArgs {
  std::string out;
  std::uint64_t seed = 0;
  int sequences = 8;
  int frames = 8;
  int height = 64;
  int width = 64;
  int shapes = 2;
  int min_size = 8;
  int max_size = 14;
  int max_speed = 2;
  int texture = 0;
  std::vector<int> velocity;
  std::vector<int> start;
  bool directions = false;
  int speed = 2;
  double test_fraction = 0.25;
  bool allow_static = false;
};

constexpr Rgb8 kPalette[] = {{220, 70, 60}, {70, 180, 90}, {80, 110, 230}, {230, 200, 60}, {200, 90, 210}};

// Shapes stacked in a column from `start`, all moving at `velocity`.
SyntheticSceneSpec fixed_velocity_scene(const MakeDatasetArgs& a) {
  SyntheticSceneSpec spec;
  spec.height = a.height;
  spec.width = a.width;
  spec.num_frames = a.frames;
  spec.texture_amplitude = a.texture;
  const int size = (a.min_size + a.max_size) / 2;
  const int x0 = a.start.empty() ? (a.width - size) / 2 : a.start[0];
  const int y0 = a.start.empty() ? (a.height - a.shapes * (size + 2)) / 2 : a.start[1];
  for (int k = 0; k < a.shapes; ++k) {
    ShapeSpec s;
    s.kind = k % 2 == 0 ? ShapeKind::rectangle : ShapeKind::ellipse;
    s.width = size;
    s.height = size;
    s.color = kPalette[k % std::size(kPalette)];
    s.x = x0;
    s.y = y0 + k * (size + 2);
    s.vx = a.velocity[0];
    s.vy = a.velocity[1];
    spec.shapes.push_back(s);
  }
  spec.validate();
  return spec;
}

void make_dataset(const MakeDatasetArgs& a, std::ostream& out) {
  if (a.velocity.empty() && !a.start.empty()) throw SpecError("--start requires --velocity");
  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::mt19937_64 rng(a.seed);
  DatasetManifest manifest;
  manifest.height = a.height;
  manifest.width = a.width;
  const int test_count = static_cast<int>(std::lround(a.sequences * a.test_fraction));
  for (int i = 0; i < a.sequences; ++i) {
    SyntheticSceneSpec spec;
    std::optional<int> label;
    if (!a.velocity.empty()) {
      spec = fixed_velocity_scene(a);
    } else {
      SceneSampling p;
      p.height = a.height;
      p.width = a.width;
      p.num_frames = a.frames;
      p.num_shapes = a.shapes;
      p.min_size = a.min_size;
      p.max_size = a.max_size;
      p.max_speed = a.max_speed;
      p.texture_amplitude = a.texture;
      p.allow_static = a.allow_static;
      if (a.directions) {
        p.direction = i % 8;
        p.speed = a.speed;
        label = i % 8;
      }
      spec = random_scene(p, rng);
    }
    const SyntheticClip clip = generate_moving_shapes(spec, a.seed * 1000003 + i);
    const std::string name = numbered("seq", i);
    const fs::path seq = dir / name;
    fs::create_directories(seq);
    for (int t = 0; t < clip.frames.length(); ++t) write_frame_png(seq / numbered("frame", t, "png"), clip.frames.frame(t));
    for (std::size_t t = 0; t < clip.flows.size(); ++t) write_flo(clip.flows[t], seq / numbered("flow", static_cast<int>(t), "flo"));
    write_scene_spec(seq / "scene.txt", spec);
    const Split split = i >= a.sequences - test_count ? Split::test : Split::train;
    manifest.entries.push_back({split, name, {}, 0, label});
  }
  write_manifest(dir / "manifest.txt", manifest);
  out << "wrote " << a.sequences << " sequences of " << a.frames << " frames (" << test_count << " test) to "
      << dir.string() << '\n';
}

// ----------------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest;
  std::string out;
  std::string resume;
  ModelConfig model;
  TrainingConfig train;
  std::string ablation = "full";
  bool nondeterministic = false;
  bool quiet = false;
};

void train_command(TrainArgs a, std::ostream& out) {
  const DatasetManifest manifest = read_manifest(a.manifest);
  a.model.height = manifest.height;
  a.model.width = manifest.width;
  a.train.deterministic = !a.nondeterministic;
  a.train.ablation = AblationFlags{};
  a.train.ablation.apply(a.ablation);
  a.model.validate();
  a.train.validate();
  TrainOptions options;
  options.out_dir = a.out;
  if (!a.resume.empty()) options.resume = a.resume;
  if (!a.quiet) options.progress = &out;
  const TrainingState state = train(a.model, a.train, manifest, options);
  out << "trained " << state.generator_steps << " generator steps (" << state.critic_steps
      << " critic steps); final checkpoint " << (fs::path(a.out) / "final.bin").string() << '\n';
}

// --------------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  std::string out;
  std::string mode = "fused";
  int steps = 1;
  int window = 0;
  bool flow_images = false;
};

void predict_command(const PredictArgs& a, std::ostream& out) {
  const PredictMode mode = parse_predict_mode(a.mode);
  if (a.steps < 1) throw std::invalid_argument("--steps must be >= 1");
  const TrainingState state = load_checkpoint(a.checkpoint);
  const ModelConfig& mc = state.model.config();
  const FrameSequence input = load_frame_folder(a.input, mc.height, mc.width);
  const int window = a.window > 0 ? a.window : state.config.window;
  const MultiPrediction p = predict_multi(state.model, state.flags(), input, window, a.steps, mode);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  for (int k = 0; k < a.steps; ++k) {
    write_frame_png(dir / numbered("pred", k, "png"), p.frames[k]);
    if (p.flows[k].empty()) continue;
    const FlowField flow(p.flows[k]);
    write_flo(flow, dir / numbered("flow", k, "flo"));
    if (a.flow_images) write_image(dir / numbered("flow", k, "png"), flow_to_color(flow));
  }
  out << "wrote " << a.steps << " predicted frame(s) to " << dir.string() << " (mode " << to_string(mode) << ")\n";
}

// -------------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out;
  std::vector<int> horizons{1};
  int window = 0;
  bool no_plot = false;
};

void evaluate_command(const EvaluateArgs& a, std::ostream& out) {
  for (int h : a.horizons) {
    if (h < 1) throw std::invalid_argument("--horizons must be positive");
  }
  const TrainingState state = load_checkpoint(a.checkpoint);
  const DatasetManifest manifest = read_manifest(a.manifest);
  const ModelConfig& mc = state.model.config();
  if (manifest.height != mc.height || manifest.width != mc.width) {
    throw DatasetError("manifest frames are " + std::to_string(manifest.height) + "x" + std::to_string(manifest.width) +
                       " but the checkpoint expects " + std::to_string(mc.height) + "x" + std::to_string(mc.width));
  }
  EvalOptions options;
  options.window = a.window > 0 ? a.window : state.config.window;
  options.horizons = a.horizons;
  const MetricsReport report = evaluate_dataset(state.model, state.flags(), manifest, options);
  out << report.table();
  if (a.out.empty()) return;
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "metrics.txt", report.table());
  write_text(dir / "metrics.json", report.json() + "\n");
  write_text(dir / "curves.tsv", report.curves());
  if (!a.no_plot) report.plot_curves(dir / "curves.png");
}

// ----------------------------------------------------------------------- probe

struct ProbeArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out;
  ProbeOptions options;
  std::uint64_t baseline_seed = 1;
};

void probe_command(ProbeArgs a, std::ostream& out) {
  const TrainingState state = load_checkpoint(a.checkpoint);
  const DatasetManifest manifest = read_manifest(a.manifest);
  manifest.validate();
  if (a.options.window <= 0) a.options.window = state.config.window;
  const ProbeResult r = representation_probe(state.model.encoder, state.model.config(), load_split(manifest, Split::train),
                                             load_split(manifest, Split::test), a.options, a.baseline_seed);
  char line[256];
  std::snprintf(line, sizeof(line),
                "probe accuracy %.4f, random-encoder accuracy %.4f (%d classes, %d train, %d test clips)\n", r.accuracy,
                r.baseline_accuracy, r.num_classes, r.train_size, r.test_size);
  out << line;
  if (a.out.empty()) return;
  const nlohmann::json j{{"accuracy", r.accuracy},       {"baseline_accuracy", r.baseline_accuracy},
                         {"num_classes", r.num_classes}, {"train_size", r.train_size},
                         {"test_size", r.test_size}};
  write_text(a.out, j.dump(2) + "\n");
}

// -------------------------------------------------------------------- flow-viz

struct FlowVizArgs {
  std::string flo;
  std::string out;
  double max_magnitude = 0;
};

void flow_viz_command(const FlowVizArgs& a, std::ostream& out) {
  const FlowField flow = read_flo(a.flo);
  const auto bound = a.max_magnitude > 0 ? std::optional<double>(a.max_magnitude) : std::nullopt;
  write_image(a.out, flow_to_color(flow, bound));
  out << "wrote " << a.out << " (" << flow.width() << "x" << flow.height() << ")\n";
}

// --------------------------------------------------------------------- inspect

void inspect_command(const std::string& checkpoint, std::ostream& out) {
  const TrainingState state = load_checkpoint(checkpoint);
  out << "checkpoint " << checkpoint << " (format version " << kCheckpointVersion << ")\n";
  out << "generator_steps " << state.generator_steps << "  critic_steps " << state.critic_steps << "  optimizer_steps "
      << state.optimizer_steps << "  seed " << state.effective_seed << '\n';
  out << "config\n";
  for (const auto& [k, v] : to_key_values(state.model.config(), state.config)) out << "  " << k << " = " << v << '\n';
  std::map<std::string, std::size_t> groups;
  std::vector<std::string> order;
  std::size_t total = 0;
  out << "parameters\n";
  for (const auto& p : state.model.all_parameters()) {
    const std::string group = p.name.substr(0, p.name.find('.'));
    if (!groups.count(group)) order.push_back(group);
    const std::size_t n = p.var.value().size();
    groups[group] += n;
    total += n;
    char line[160];
    std::snprintf(line, sizeof(line), "  %-44s %-18s %zu\n", p.name.c_str(), to_string(p.var.shape()).c_str(), n);
    out << line;
  }
  out << "groups\n";
  for (const auto& g : order) {
    char line[96];
    std::snprintf(line, sizeof(line), "  %-18s %zu\n", g.c_str(), groups[g]);
    out << line;
  }
  out << "total " << total << '\n';
}

// ------------------------------------------------------------------ the parser

void add_model_options(CLI::App& cmd, ModelConfig& m) {
  cmd.add_option("--latent-channels", m.latent_channels, "Latent width D")->check(CLI::PositiveNumber);
  cmd.add_option("--critic-channels", m.critic_channels, "First critic layer width")->check(CLI::PositiveNumber);
  cmd.add_option("--output-knee", m.output_knee, "Frame outputs are linear on [-knee, knee]")
      ->check(CLI::Range(0.0, 1.0));
}

void add_training_options(CLI::App& cmd, TrainingConfig& t, std::string& ablation, bool& nondeterministic) {
  cmd.add_option("--lambda", t.lambda, "Weight of the adversarial terms (0 disables them)")->check(CLI::NonNegativeNumber);
  cmd.add_option("--learning-rate", t.learning_rate, "RMSprop learning rate")->check(CLI::PositiveNumber);
  cmd.add_option("--critic-steps-per-gen-step", t.critic_steps_per_gen_step, "Critic updates per generator update")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--clip-bound", t.clip_bound, "Critic weight clipping bound")->check(CLI::PositiveNumber);
  cmd.add_option("--batch-size", t.batch_size, "Examples per update")->check(CLI::PositiveNumber);
  cmd.add_option("--steps", t.steps, "Generator updates")->check(CLI::NonNegativeNumber);
  cmd.add_option("--seed", t.seed, "Seed for initialization, batches and noise");
  cmd.add_option("--ablation", ablation, "Comma-separated: full, flow_off, frame_off, gan_off, "
                                                  "frame_gan_off, flow_gan_off, no_encoder");
  cmd.add_option("--checkpoint-interval", t.checkpoint_interval, "Generator steps between checkpoints (0: final only)")
      ->check(CLI::NonNegativeNumber);
  cmd.add_flag("--nondeterministic", nondeterministic, "Mix an entropy source into the seed");
  cmd.add_option("--window", t.window, "Input frames per prediction")->check(CLI::PositiveNumber);
  cmd.add_option("--rmsprop-decay", t.rmsprop_decay, "RMSprop squared-gradient decay")->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--rmsprop-eps", t.rmsprop_eps, "RMSprop denominator epsilon")->check(CLI::PositiveNumber);
  cmd.add_option("--kl-weight", t.kl_weight, "Weight of the KL term")->check(CLI::NonNegativeNumber);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual motion video prediction: dataset generation, training, prediction and evaluation", "dualmotion"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_config("--config", "", "INI file; [subcommand] sections hold flag = value lines, flags override the file");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_version_flag("--version", "dualmotion 0.1.0");

  MakeDatasetArgs md;
  CLI::App* cmd_md = app.add_subcommand("make-dataset", "Render synthetic moving-shape sequences with ground-truth flow");
  cmd_md->add_option("--out", md.out, "Output directory")->required();
  cmd_md->add_option("--seed", md.seed, "Scene sampling and texture seed");
  cmd_md->add_option("--sequences", md.sequences, "Number of sequences")->check(CLI::PositiveNumber);
  cmd_md->add_option("--frames", md.frames, "Frames per sequence")->check(CLI::Range(2, 100000));
  cmd_md->add_option("--height", md.height, "Frame height (multiple of 8)")->check(CLI::PositiveNumber);
  cmd_md->add_option("--width", md.width, "Frame width (multiple of 8)")->check(CLI::PositiveNumber);
  cmd_md->add_option("--shapes", md.shapes, "Shapes per sequence")->check(CLI::PositiveNumber);
  cmd_md->add_option("--min-size", md.min_size, "Smallest shape side in pixels")->check(CLI::PositiveNumber);
  cmd_md->add_option("--max-size", md.max_size, "Largest shape side in pixels")->check(CLI::PositiveNumber);
  cmd_md->add_option("--max-speed", md.max_speed, "Largest per-axis speed in pixels/frame")->check(CLI::NonNegativeNumber);
  cmd_md->add_option("--texture", md.texture, "Static background texture amplitude (8-bit levels)")
      ->check(CLI::Range(0, 255));
  cmd_md->add_option("--velocity", md.velocity, "Fixed velocity vx,vy for every shape (default: random)")
      ->delimiter(',')
      ->expected(2);
  cmd_md->add_option("--start", md.start, "Top-left x,y of the first shape with --velocity (default: centered)")
      ->delimiter(',')
      ->expected(2);
  cmd_md->add_flag("--directions", md.directions, "Sequence i moves along compass direction i mod 8, labeled by it");
  cmd_md->add_option("--speed", md.speed, "Speed for --directions")->check(CLI::PositiveNumber);
  cmd_md->add_option("--test-fraction", md.test_fraction, "Fraction of sequences in the test split")
      ->check(CLI::Range(0.0, 1.0));
  cmd_md->add_flag("--allow-static", md.allow_static, "Allow shapes with zero velocity");

  TrainArgs tr;
  CLI::App* cmd_tr = app.add_subcommand("train", "Train a model on the train split of a manifest");
  cmd_tr->add_option("--manifest", tr.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  cmd_tr->add_option("--out", tr.out, "Output directory for checkpoints and train.log")->required();
  cmd_tr->add_option("--resume", tr.resume, "Checkpoint to resume from (its stored configuration is kept)")
      ->check(CLI::ExistingFile);
  add_model_options(*cmd_tr, tr.model);
  add_training_options(*cmd_tr, tr.train, tr.ablation, tr.nondeterministic);
  cmd_tr->add_flag("--quiet", tr.quiet, "No progress lines");

  PredictArgs pr;
  CLI::App* cmd_pr = app.add_subcommand("predict", "Predict future frames from a folder of input frames");
  cmd_pr->add_option("--checkpoint", pr.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  cmd_pr->add_option("--input", pr.input, "Folder of input frames")->required()->check(CLI::ExistingDirectory);
  cmd_pr->add_option("--out", pr.out, "Output directory")->required();
  cmd_pr->add_option("--mode", pr.mode, "fused, frame_only or flow_only")
      ->check(CLI::IsMember({"fused", "frame_only", "flow_only"}));
  cmd_pr->add_option("--steps", pr.steps, "Number of future frames (recursive beyond 1)")->check(CLI::PositiveNumber);
  cmd_pr->add_option("--window", pr.window, "Input frames used (0: the checkpoint's window)")
      ->check(CLI::NonNegativeNumber);
  cmd_pr->add_flag("--flow-images", pr.flow_images, "Also write color-coded flow PNGs");

  EvaluateArgs ev;
  CLI::App* cmd_ev = app.add_subcommand("evaluate", "Score a checkpoint on the test split of a manifest");
  cmd_ev->add_option("--checkpoint", ev.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  cmd_ev->add_option("--manifest", ev.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  cmd_ev->add_option("--out", ev.out, "Directory for metrics.txt, metrics.json, curves.tsv and curves.png");
  cmd_ev->add_option("--horizons", ev.horizons, "Comma-separated prediction horizons")->delimiter(',');
  cmd_ev->add_option("--window", ev.window, "Input frames used (0: the checkpoint's window)")
      ->check(CLI::NonNegativeNumber);
  cmd_ev->add_flag("--no-plot", ev.no_plot, "Skip the rendered curve image");

  ProbeArgs pb;
  pb.options.window = 0;
  CLI::App* cmd_pb = app.add_subcommand("probe", "Linear probe on frozen encoder features vs a random encoder");
  cmd_pb->add_option("--checkpoint", pb.checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  cmd_pb->add_option("--manifest", pb.manifest, "Labeled manifest (train and test splits)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_pb->add_option("--out", pb.out, "Optional JSON result file");
  cmd_pb->add_option("--window", pb.options.window, "Frames fed to the encoder (0: the checkpoint's window)")
      ->check(CLI::NonNegativeNumber);
  cmd_pb->add_option("--iterations", pb.options.iterations, "Gradient steps of the probe")->check(CLI::PositiveNumber);
  cmd_pb->add_option("--learning-rate", pb.options.learning_rate, "Probe learning rate")->check(CLI::PositiveNumber);
  cmd_pb->add_option("--l2", pb.options.l2, "Probe weight decay")->check(CLI::NonNegativeNumber);
  cmd_pb->add_option("--seed", pb.options.seed, "Probe initialization seed");
  cmd_pb->add_option("--baseline-seed", pb.baseline_seed, "Seed of the random comparison encoder");

  FlowVizArgs fv;
  CLI::App* cmd_fv = app.add_subcommand("flow-viz", "Render a .flo file with the standard color wheel");
  cmd_fv->add_option("--flo", fv.flo, "Input .flo file")->required();
  cmd_fv->add_option("--out", fv.out, "Output PNG")->required();
  cmd_fv->add_option("--max-magnitude", fv.max_magnitude, "Saturation bound in pixels (0: largest observed)")
      ->check(CLI::NonNegativeNumber);

  std::string inspect_path;
  CLI::App* cmd_in = app.add_subcommand("inspect", "Print a checkpoint's configuration and parameter shapes");
  cmd_in->add_option("--checkpoint", inspect_path, "Checkpoint file")->required()->check(CLI::ExistingFile);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "dualmotion: usage error: " << msg << '\n';
    return 2;
  }

  try {
    if (*cmd_md) make_dataset(md, out);
    if (*cmd_tr) train_command(tr, out);
    if (*cmd_pr) predict_command(pr, out);
    if (*cmd_ev) evaluate_command(ev, out);
    if (*cmd_pb) probe_command(pb, out);
    if (*cmd_fv) flow_viz_command(fv, out);
    if (*cmd_in) inspect_command(inspect_path, out);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "dualmotion: error: " << msg << '\n';
    return 1;
  }
  return 0;
}

}  // namespace dualmotion::cli
