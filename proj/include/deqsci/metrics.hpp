#pragma once

#include <vector>

#include "deqsci/cube.hpp"

namespace deqsci {

struct FrameScores {
  std::vector<double> per_frame;
  double mean = 0.0;
};

/// PSNR cap reported when a frame's MSE is exactly zero.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(peak^2 / MSE) per frame, then the mean over frames.
FrameScores psnr(const VideoCube &x, const VideoCube &ref, double peak = 1.0);

/// Single-scale SSIM per frame: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1, averaged over valid window positions.
FrameScores ssim(const VideoCube &x, const VideoCube &ref);

}  // namespace deqsci
