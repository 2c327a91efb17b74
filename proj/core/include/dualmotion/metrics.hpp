#pragma once

#include "dualmotion/flow_io.hpp"
#include "dualmotion/tensor.hpp"

namespace dualmotion {

inline constexpr double kPsnrCap = 100.0;

/// Maps a [-1, 1] frame ([3, H, W] or [1, 3, H, W]) to [0, 1].
Tensor to_unit_range(const Tensor& frame);

/// Mean squared difference. Inputs must already be in metric space ([0, 1]).
double mse(const Tensor& pred, const Tensor& gt);

/// 10 log10(peak^2 / mse); mse = 0 gives kPsnrCap.
double psnr_from_mse(double mse_value, double peak = 1.0);
double psnr(const Tensor& pred, const Tensor& gt, double peak = 1.0);

/// Windowed SSIM on the channel-mean grayscale images: 11x11 Gaussian
/// window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1, averaged over
/// all fully contained windows. Images smaller than the window use a single
/// global window. Inputs in [0, 1], shaped [C, H, W] or [1, C, H, W].
double ssim(const Tensor& pred, const Tensor& gt);

/// Mean end-point error between two flow fields.
double epe(const FlowField& f, const FlowField& g);
/// Same for [2, H, W] / [N, 2, H, W] tensors.
double epe(const Tensor& f, const Tensor& g);

}  // namespace dualmotion
