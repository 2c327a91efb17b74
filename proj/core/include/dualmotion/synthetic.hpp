#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dualmotion/flow_io.hpp"
#include "dualmotion/frames.hpp"

namespace dualmotion {

enum class ShapeKind { rectangle, ellipse };

using Rgb8 = std::array<std::uint8_t, 3>;

/// One solid-colored shape moving at a constant integer velocity.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::rectangle;
  int width = 8;
  int height = 8;
  Rgb8 color{200, 60, 60};
  int x = 0;  // top-left corner at frame 0
  int y = 0;
  int vx = 0;  // pixels per frame
  int vy = 0;

  bool covers(int frame, int px, int py) const;
};

struct SyntheticSceneSpec {
  int height = 64;
  int width = 64;
  int num_frames = 8;
  Rgb8 background{40, 40, 40};
  /// Static per-pixel texture amplitude in 8-bit levels; 0 gives a constant
  /// background. The texture pattern is drawn from the generation seed.
  int texture_amplitude = 0;
  std::vector<ShapeSpec> shapes;

  /// Throws SpecError when shapes leave the 1-pixel safety margin or their
  /// swept regions over neighbouring frames overlap.
  void validate() const;
};

struct SyntheticClip {
  FrameSequence frames;
  /// flows[t] carries frame t onto frame t+1: warp(frames[t], flows[t]) == frames[t+1].
  std::vector<FlowField> flows;
};

/// Renders a scene. Ground-truth flows use the sampling-offset convention:
/// pixels covered by a shape in frame t or t+1 carry -velocity, everything
/// else zero. With a constant background, warping frame t by flows[t]
/// reproduces frame t+1 exactly; a textured background breaks this only on
/// pixels a shape uncovers.
SyntheticClip generate_moving_shapes(const SyntheticSceneSpec& spec, std::uint64_t seed);

/// Parameters for drawing random valid scenes.
struct SceneSampling {
  int height = 64;
  int width = 64;
  int num_frames = 8;
  int num_shapes = 2;
  int min_size = 8;
  int max_size = 14;
  int max_speed = 2;
  int texture_amplitude = 0;
  bool allow_static = false;
  /// When set, every shape moves along one of eight compass directions
  /// (0 = +x, counter-clockwise in image coordinates with y down) at `speed`.
  std::optional<int> direction;
  int speed = 2;
};

std::array<int, 2> direction_velocity(int direction, int speed);

/// Rejection-samples a scene satisfying the invariants.
SyntheticSceneSpec random_scene(const SceneSampling& params, std::mt19937_64& rng);

/// Key-value text form used next to rendered sequences.
void write_scene_spec(const std::filesystem::path& path, const SyntheticSceneSpec& spec);
SyntheticSceneSpec read_scene_spec(const std::filesystem::path& path);

}  // namespace dualmotion
