#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dualmotion/manifest.hpp"
#include "dualmotion/metrics.hpp"
#include "dualmotion/training.hpp"

namespace dualmotion {

/// Last input frame, repeated for every horizon.
Tensor copy_last_baseline(const FrameSequence& sequence);

struct FrameScores {
  double mse = 0;
  double psnr = 0;
  double ssim = 0;
};

/// Scores a [-1, 1] prediction against a [-1, 1] ground truth in [0, 1] space.
FrameScores score_frame(const Tensor& pred, const Tensor& gt);

inline const std::vector<std::string>& report_modes() {
  static const std::vector<std::string> modes{"fused", "frame_only", "flow_only", "copy_last"};
  return modes;
}

struct SequenceReport {
  std::string id;
  std::map<std::string, FrameScores> next_frame;  // keyed by report_modes()
  std::optional<double> epe_prediction;           // generated flow vs ground truth
  std::optional<double> epe_estimation;           // estimator on the true frame pair
  std::optional<double> epe_zero;                 // zero-flow baseline
  std::vector<FrameScores> fused_by_horizon;
  std::vector<FrameScores> copy_last_by_horizon;
};

/// Orientation: psnr and ssim are higher-is-better; mse and epe lower-is-better.
struct MetricsReport {
  std::vector<int> horizons;
  std::vector<SequenceReport> sequences;

  std::map<std::string, FrameScores> mean_next_frame() const;
  std::optional<double> mean_epe_prediction() const;
  std::optional<double> mean_epe_estimation() const;
  std::optional<double> mean_epe_zero() const;
  /// Mean scores per horizon, same order as `horizons`.
  std::vector<FrameScores> mean_fused_curve() const;
  std::vector<FrameScores> mean_copy_last_curve() const;

  /// Plain-text table; EPE rows are omitted when no sequence had ground-truth flow.
  std::string table() const;
  std::string json() const;
  /// Columnar text: horizon, fused_mse, fused_psnr, fused_ssim, copy_last_mse, ...
  std::string curves() const;
  /// Renders the MSE-per-horizon curves as a PNG line plot.
  void plot_curves(const std::filesystem::path& path) const;
};

struct EvalOptions {
  int window = 4;
  std::vector<int> horizons{1};
};

/// Each clip supplies its first `window` frames as input and the following
/// max(horizons) frames as targets. Flow metrics use the flow relating the
/// last input frame to the first target.
MetricsReport evaluate_clips(const DualMotionModel& model, const BranchFlags& flags, const std::vector<Clip>& clips,
                             const EvalOptions& options);

/// Evaluates the test split of `manifest`.
MetricsReport evaluate_dataset(const DualMotionModel& model, const BranchFlags& flags,
                               const DatasetManifest& manifest, const EvalOptions& options);

}  // namespace dualmotion
