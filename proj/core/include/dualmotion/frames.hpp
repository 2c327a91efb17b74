#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dualmotion/tensor.hpp"

namespace dualmotion {

/// Interleaved 8-bit RGB raster.
struct Image8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3, RGB order

  Image8() = default;
  Image8(int h, int w, std::uint8_t fill = 0) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  std::uint8_t* pixel(int y, int x) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* pixel(int y, int x) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  friend bool operator==(const Image8&, const Image8&) = default;
};

/// Ordered RGB frames normalized to [-1, 1], stored as [T, 3, H, W].
struct FrameSequence {
  Tensor frames;
  double frame_interval = 1.0;
  std::string source_id;

  int length() const { return frames.empty() ? 0 : frames.dim(0); }
  int height() const { return frames.dim(2); }
  int width() const { return frames.dim(3); }

  /// Frame t as a [1, 3, H, W] tensor.
  Tensor frame(int t) const { return frames.sample(t); }

  /// Frames [start, start + count) as a new sequence.
  FrameSequence window(int start, int count) const;

  /// Appends a [1, 3, H, W] (or [3, H, W]) frame at the end.
  void append(const Tensor& frame);

  /// Throws DatasetError / ShapeError when the invariants do not hold:
  /// T >= 2, H and W multiples of 8, all values within [-1, 1].
  void validate() const;
};

Scalar normalize_value(std::uint8_t v);

/// [0, 255] -> [-1, 1] affine map; result has shape [3, H, W].
Tensor normalize_frame(const Image8& image);

struct DenormalizedFrame {
  Image8 image;
  std::size_t clamped = 0;  // number of samples outside [-1, 1] before quantization
};

/// Inverse of normalize_frame with rounding; accepts [3, H, W] or [1, 3, H, W].
DenormalizedFrame denormalize_frame(const Tensor& frame);

/// Reads PNG/JPEG frames in lexicographic file order, resized to
/// `height` x `width` and normalized.
FrameSequence load_frame_folder(const std::filesystem::path& dir, int height, int width);

Image8 read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image8& image);
void write_frame_png(const std::filesystem::path& path, const Tensor& frame);

}  // namespace dualmotion
