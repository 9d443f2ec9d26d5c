#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace deqsci {

/// C x H x W activations, channel-major. A VideoCube's storage has exactly
/// this layout with C = frames.
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}
  FeatureMap(std::size_t c, std::size_t h, std::size_t w, std::vector<double> values)
      : channels(c), height(h), width(w), data(std::move(values)) {}

  std::size_t plane() const noexcept { return height * width; }
  std::span<double> channel(std::size_t k) { return {data.data() + k * plane(), plane()}; }
  std::span<const double> channel(std::size_t k) const { return {data.data() + k * plane(), plane()}; }
};

/// Zero-padded "same" 2-D convolution layer (cross-correlation) with an odd
/// square kernel. Kernel layout is [out][in][ky][kx].
struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t ksize = 3;
  std::vector<double> kernel;
  std::vector<double> bias;
  /// Persistent power-iteration vector for spectral normalization,
  /// in_channels x sn_height x sn_width. Empty until first used.
  std::vector<double> sn_u;

  ConvLayer() = default;
  ConvLayer(std::size_t in, std::size_t out, std::size_t k);

  std::size_t kernel_size() const noexcept { return out_channels * in_channels * ksize * ksize; }
  std::size_t param_count() const noexcept { return kernel_size() + out_channels; }
  double &w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
    return kernel[((o * in_channels + i) * ksize + ky) * ksize + kx];
  }
  double w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
    return kernel[((o * in_channels + i) * ksize + ky) * ksize + kx];
  }
};

/// Applies the layer, including its bias.
FeatureMap conv2d(const ConvLayer &layer, const FeatureMap &in);
/// Linear part only (no bias).
FeatureMap conv2d_linear(const ConvLayer &layer, const FeatureMap &in);
/// Adjoint of conv2d_linear with respect to its input.
FeatureMap conv2d_transpose(const ConvLayer &layer, const FeatureMap &grad_out);
/// Accumulates d<grad_out, conv2d(in)>/d(kernel, bias) into the two spans.
void conv2d_param_grad(const ConvLayer &layer, const FeatureMap &in, const FeatureMap &grad_out,
                       std::span<double> dkernel, std::span<double> dbias);

/// Runs `iters` power iterations of K^T K on the zero-padded operator over an
/// h x w image, updating `u` (initialized from `seed` when empty or the wrong
/// size). Returns ||K u|| with ||u|| = 1.
double conv_power_iteration(const ConvLayer &layer, std::size_t h, std::size_t w, int iters, std::vector<double> &u,
                            std::uint64_t seed);

/// Smooth 1-Lipschitz activation: softplus shifted to pass through the origin.
double smooth_act(double u) noexcept;
/// Derivative of smooth_act (the logistic sigmoid).
double smooth_act_grad(double u) noexcept;

}  // namespace deqsci
