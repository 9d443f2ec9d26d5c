#include "deqsci/metrics.hpp"

#include <array>
#include <cmath>

#include "deqsci/error.hpp"

namespace deqsci {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

std::array<double, kWin * kWin> gaussian_window() {
  std::array<double, kWin * kWin> w{};
  double sum = 0.0;
  const int c = kWin / 2;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double r2 = static_cast<double>((i - c) * (i - c) + (j - c) * (j - c));
      w[i * kWin + j] = std::exp(-r2 / (2.0 * kSigma * kSigma));
      sum += w[i * kWin + j];
    }
  for (double &v : w) v /= sum;
  return w;
}

}  // namespace

FrameScores psnr(const VideoCube &x, const VideoCube &ref, double peak) {
  require_same_shape(x, ref, "psnr");
  if (!(peak > 0.0)) throw Error(ErrorKind::InvalidArgument, "psnr peak must be > 0");
  FrameScores out;
  for (std::size_t b = 0; b < x.frames(); ++b) {
    const auto xf = x.frame(b);
    const auto rf = ref.frame(b);
    double sse = 0.0;
    for (std::size_t i = 0; i < xf.size(); ++i) {
      const double d = xf[i] - rf[i];
      sse += d * d;
    }
    const double mse = sse / static_cast<double>(xf.size());
    out.per_frame.push_back(mse == 0.0 ? kPsnrCap : 10.0 * std::log10(peak * peak / mse));
  }
  for (double v : out.per_frame) out.mean += v;
  if (!out.per_frame.empty()) out.mean /= static_cast<double>(out.per_frame.size());
  return out;
}

FrameScores ssim(const VideoCube &x, const VideoCube &ref) {
  require_same_shape(x, ref, "ssim");
  if (x.height() < kWin || x.width() < kWin)
    throw Error(ErrorKind::InvalidArgument, "ssim needs frames of at least 11x11, got " +
                                                std::to_string(x.height()) + "x" + std::to_string(x.width()));
  static const auto win = gaussian_window();
  constexpr double C1 = 0.01 * 0.01;
  constexpr double C2 = 0.03 * 0.03;
  const std::size_t H = x.height();
  const std::size_t W = x.width();
  FrameScores out;
  for (std::size_t b = 0; b < x.frames(); ++b) {
    double total = 0.0;
    for (std::size_t i = 0; i + kWin <= H; ++i)
      for (std::size_t j = 0; j + kWin <= W; ++j) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int u = 0; u < kWin; ++u)
          for (int v = 0; v < kWin; ++v) {
            const double g = win[u * kWin + v];
            const double a = x(i + u, j + v, b);
            const double c = ref(i + u, j + v, b);
            mx += g * a;
            my += g * c;
            sxx += g * a * a;
            syy += g * c * c;
            sxy += g * a * c;
          }
        const double vx = sxx - mx * mx;
        const double vy = syy - my * my;
        const double cxy = sxy - mx * my;
        total += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
      }
    out.per_frame.push_back(total / static_cast<double>((H - kWin + 1) * (W - kWin + 1)));
  }
  for (double v : out.per_frame) out.mean += v;
  if (!out.per_frame.empty()) out.mean /= static_cast<double>(out.per_frame.size());
  return out;
}

}  // namespace deqsci
