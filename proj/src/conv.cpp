#include "deqsci/conv.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "deqsci/error.hpp"

namespace deqsci {

namespace {

void check_input(const ConvLayer &layer, const FeatureMap &in, std::size_t expected_channels) {
  if (in.channels != expected_channels || in.data.size() != in.channels * in.plane()) {
    throw Error(ErrorKind::ShapeMismatch, "conv layer expects " + std::to_string(expected_channels) +
                                              " channels, got " + std::to_string(in.channels));
  }
  if (layer.ksize % 2 == 0) throw Error(ErrorKind::InvalidArgument, "conv kernel size must be odd");
}

// Valid output column range [lo, hi) for a kernel tap offset `d` in [-r, r].
inline void col_range(std::ptrdiff_t d, std::size_t width, std::size_t &lo, std::size_t &hi) {
  const auto w = static_cast<std::ptrdiff_t>(width);
  lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -d));
  hi = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, std::min<std::ptrdiff_t>(w, w - d)));
}

}  // namespace

ConvLayer::ConvLayer(std::size_t in, std::size_t out, std::size_t k)
    : in_channels(in), out_channels(out), ksize(k), kernel(in * out * k * k, 0.0), bias(out, 0.0) {}

FeatureMap conv2d_linear(const ConvLayer &layer, const FeatureMap &in) {
  check_input(layer, in, layer.in_channels);
  const std::size_t H = in.height, W = in.width;
  const auto r = static_cast<std::ptrdiff_t>(layer.ksize / 2);
  FeatureMap out(layer.out_channels, H, W);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    double *dst = out.data.data() + o * H * W;
    for (std::size_t c = 0; c < layer.in_channels; ++c) {
      const double *src = in.data.data() + c * H * W;
      for (std::size_t ky = 0; ky < layer.ksize; ++ky) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - r;
        for (std::size_t kx = 0; kx < layer.ksize; ++kx) {
          const double wt = layer.w(o, c, ky, kx);
          if (wt == 0.0) continue;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - r;
          std::size_t lo, hi;
          col_range(dx, W, lo, hi);
          for (std::size_t i = 0; i < H; ++i) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i) + dy;
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(H)) continue;
            double *drow = dst + i * W;
            const double *srow = src + static_cast<std::size_t>(ii) * W;
            for (std::size_t j = lo; j < hi; ++j) drow[j] += wt * srow[j + dx];
          }
        }
      }
    }
  }
  return out;
}

FeatureMap conv2d(const ConvLayer &layer, const FeatureMap &in) {
  FeatureMap out = conv2d_linear(layer, in);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    const double b = layer.bias[o];
    if (b == 0.0) continue;
    for (double &v : out.channel(o)) v += b;
  }
  return out;
}

FeatureMap conv2d_transpose(const ConvLayer &layer, const FeatureMap &grad_out) {
  check_input(layer, grad_out, layer.out_channels);
  const std::size_t H = grad_out.height, W = grad_out.width;
  const auto r = static_cast<std::ptrdiff_t>(layer.ksize / 2);
  FeatureMap in_grad(layer.in_channels, H, W);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    const double *g = grad_out.data.data() + o * H * W;
    for (std::size_t c = 0; c < layer.in_channels; ++c) {
      double *dst = in_grad.data.data() + c * H * W;
      for (std::size_t ky = 0; ky < layer.ksize; ++ky) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - r;
        for (std::size_t kx = 0; kx < layer.ksize; ++kx) {
          const double wt = layer.w(o, c, ky, kx);
          if (wt == 0.0) continue;
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - r;
          std::size_t lo, hi;
          col_range(dx, W, lo, hi);
          // out[i][j] used in[i+dy][j+dx]; scatter g[i][j] back to that input pixel.
          for (std::size_t i = 0; i < H; ++i) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i) + dy;
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(H)) continue;
            const double *grow = g + i * W;
            double *drow = dst + static_cast<std::size_t>(ii) * W;
            for (std::size_t j = lo; j < hi; ++j) drow[j + dx] += wt * grow[j];
          }
        }
      }
    }
  }
  return in_grad;
}

void conv2d_param_grad(const ConvLayer &layer, const FeatureMap &in, const FeatureMap &grad_out,
                       std::span<double> dkernel, std::span<double> dbias) {
  check_input(layer, in, layer.in_channels);
  check_input(layer, grad_out, layer.out_channels);
  if (dkernel.size() != layer.kernel_size() || dbias.size() != layer.out_channels) {
    throw Error(ErrorKind::ShapeMismatch, "conv parameter gradient buffers have the wrong size");
  }
  const std::size_t H = in.height, W = in.width;
  const auto r = static_cast<std::ptrdiff_t>(layer.ksize / 2);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    const double *g = grad_out.data.data() + o * H * W;
    double s = 0.0;
    for (std::size_t p = 0; p < H * W; ++p) s += g[p];
    dbias[o] += s;
    for (std::size_t c = 0; c < layer.in_channels; ++c) {
      const double *src = in.data.data() + c * H * W;
      for (std::size_t ky = 0; ky < layer.ksize; ++ky) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - r;
        for (std::size_t kx = 0; kx < layer.ksize; ++kx) {
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - r;
          std::size_t lo, hi;
          col_range(dx, W, lo, hi);
          double acc = 0.0;
          for (std::size_t i = 0; i < H; ++i) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i) + dy;
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(H)) continue;
            const double *grow = g + i * W;
            const double *srow = src + static_cast<std::size_t>(ii) * W;
            for (std::size_t j = lo; j < hi; ++j) acc += grow[j] * srow[j + dx];
          }
          dkernel[((o * layer.in_channels + c) * layer.ksize + ky) * layer.ksize + kx] += acc;
        }
      }
    }
  }
}

double conv_power_iteration(const ConvLayer &layer, std::size_t h, std::size_t w, int iters, std::vector<double> &u,
                            std::uint64_t seed) {
  const std::size_t n = layer.in_channels * h * w;
  if (u.size() != n) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    u.resize(n);
    for (double &v : u) v = gauss(rng);
  }
  auto normalize = [](std::vector<double> &v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    s = std::sqrt(s);
    if (s > 0.0)
      for (double &x : v) x /= s;
    return s;
  };
  normalize(u);
  for (int it = 0; it < iters; ++it) {
    FeatureMap ku = conv2d_linear(layer, FeatureMap(layer.in_channels, h, w, u));
    FeatureMap ktku = conv2d_transpose(layer, ku);
    if (normalize(ktku.data) == 0.0) break;
    u = std::move(ktku.data);
  }
  FeatureMap ku = conv2d_linear(layer, FeatureMap(layer.in_channels, h, w, u));
  double s = 0.0;
  for (double x : ku.data) s += x * x;
  return std::sqrt(s);
}

double smooth_act(double u) noexcept {
  constexpr double kLn2 = 0.69314718055994530942;
  const double sp = u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
  return sp - kLn2;
}

double smooth_act_grad(double u) noexcept {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace deqsci
