#pragma once

#include <filesystem>
#include <optional>

#include "dualmotion/frames.hpp"
#include "dualmotion/tensor.hpp"

namespace dualmotion {

/// Dense 2-channel displacement field in pixels, stored as [2, H, W]
/// (channel 0 = horizontal u, channel 1 = vertical v).
///
/// Convention: sampling offsets. Warping a source frame by F produces, at
/// pixel x, the source sampled at x + F(x).
class FlowField {
 public:
  FlowField() = default;
  FlowField(int height, int width) : data_({2, height, width}) {}
  /// Accepts [2, H, W] or [1, 2, H, W].
  explicit FlowField(const Tensor& data);

  int height() const { return data_.dim(1); }
  int width() const { return data_.dim(2); }
  Scalar& u(int y, int x) { return data_[static_cast<std::size_t>(y) * width() + x]; }
  Scalar& v(int y, int x) { return data_[plane() + static_cast<std::size_t>(y) * width() + x]; }
  Scalar u(int y, int x) const { return data_[static_cast<std::size_t>(y) * width() + x]; }
  Scalar v(int y, int x) const { return data_[plane() + static_cast<std::size_t>(y) * width() + x]; }

  const Tensor& tensor() const { return data_; }
  /// [1, 2, H, W] view for the network operations.
  Tensor batched() const { return data_.reshaped({1, 2, height(), width()}); }

  friend bool operator==(const FlowField& a, const FlowField& b) { return a.data_ == b.data_; }

 private:
  std::size_t plane() const { return static_cast<std::size_t>(height()) * width(); }
  Tensor data_;
};

inline constexpr float kFloMagic = 202021.25f;

/// Middlebury .flo: float32 magic 202021.25, int32 width, int32 height, then
/// row-major interleaved (u, v) float32 pairs; all little-endian. Values are
/// rounded to float32. Throws FormatError on non-finite values.
void write_flo(const FlowField& flow, const std::filesystem::path& path);

/// Throws FormatError (with byte offset) on bad magic, truncation or
/// non-finite values; IngestionError when the file cannot be opened.
FlowField read_flo(const std::filesystem::path& path);

/// Middlebury color-wheel rendering. Hue encodes direction, saturation the
/// magnitude divided by `max_magnitude` (default: largest observed).
/// Zero flow renders white.
Image8 flow_to_color(const FlowField& flow, std::optional<double> max_magnitude = std::nullopt);

/// Position of a direction on the color wheel, in degrees [0, 360).
double flow_wheel_angle(double u, double v);

}  // namespace dualmotion
