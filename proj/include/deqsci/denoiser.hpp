#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "deqsci/conv.hpp"
#include "deqsci/cube.hpp"

namespace deqsci {

struct IdentityDenoiser {};

/// D(x) = a x + b.
struct ScaleShiftDenoiser {
  double a = 1.0;
  double b = 0.0;
};

/// Anisotropic total-variation denoiser, applied per frame.
struct TvDenoiser {
  double lambda = 0.0;
  int iters = 50;
};

/// How conv_residual layers are initialized.
enum class ConvInit {
  /// Small i.i.d. Gaussian weights.
  Random,
  /// Residual starts close to -(I - blur/2): a smoother that also shrinks
  /// smooth components, so D stays a contraction. Plus small Gaussian noise.
  Smoothing,
};

/// Residual convolutional denoiser D(x) = x + gamma * r(x), where r is a stack
/// of zero-padded convolutions with smooth activations in between. Frames are
/// treated as channels, so the first and last layers have `frames` channels.
struct ConvDenoiserParams {
  std::vector<ConvLayer> layers;
  double gamma = 0.05;
  /// Image size of the operator that spectral normalization probes.
  std::size_t sn_height = 32;
  std::size_t sn_width = 32;
  std::uint64_t sn_seed = 0x5eed;

  static ConvDenoiserParams make(std::size_t frames, std::size_t hidden, std::size_t n_layers, std::size_t ksize,
                                 double gamma, std::uint64_t seed, ConvInit init = ConvInit::Smoothing,
                                 double noise_scale = 0.01);

  std::size_t frames() const { return layers.front().in_channels; }
  std::size_t param_count() const;
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double> &theta);
  /// "in:out:k,in:out:k,..."
  std::string architecture() const;
};

using Denoiser = std::variant<IdentityDenoiser, ScaleShiftDenoiser, TvDenoiser, ConvDenoiserParams>;

void validate(const Denoiser &d);
bool is_trainable(const Denoiser &d);

VideoCube denoise(const Denoiser &d, const VideoCube &x);

/// (D - I)(x), computed without forming D(x) - x where the form allows.
VideoCube denoise_residual(const Denoiser &d, const VideoCube &x);

/// (dD/dx)^T v at x.
VideoCube vjp_input(const Denoiser &d, const VideoCube &x, const VideoCube &v);

/// (dD/dtheta)^T v at x, as a flat vector laid out like ConvDenoiserParams::flatten.
std::vector<double> grad_params(const Denoiser &d, const VideoCube &x, const VideoCube &v);

/// Approximately solves min_z 1/2||z - x||^2 + lambda * TV_aniso(z) for every
/// frame with a fixed number of accelerated dual projected-gradient steps.
VideoCube tv_denoise(const VideoCube &x, double lambda, int iters);

/// Power iteration on each layer's zero-padded convolution operator (sn_state
/// persists across calls), then scales every kernel by min(1, 1/sigma).
ConvDenoiserParams spectral_normalize(const ConvDenoiserParams &p, int n_iters);
void spectral_normalize_in_place(ConvDenoiserParams &p, int n_iters);

/// Per-layer operator norm estimates on an h x w image.
std::vector<double> layer_operator_norms(const ConvDenoiserParams &p, std::size_t h, std::size_t w, int iters = 200);

/// gamma * prod(layer norms): an upper bound on the Lipschitz constant of D - I,
/// since the activation is 1-Lipschitz.
double residual_lipschitz_bound(const ConvDenoiserParams &p, std::size_t h, std::size_t w, int iters = 200);

/// Sampled lower bound on the Lipschitz constant of D - I over random pairs
/// of cubes of the given shape.
double estimate_residual_lipschitz(const Denoiser &d, std::uint64_t seed, int n_pairs, std::size_t h, std::size_t w,
                                   std::size_t b);

/// Checkpoint: flat theta as a float64 tensor at `path` and a key=value
/// sidecar at `path + ".meta"`.
void save_checkpoint(const std::string &path, const ConvDenoiserParams &p);
ConvDenoiserParams load_checkpoint(const std::string &path);

using Sidecar = std::map<std::string, std::string>;
void write_sidecar(const std::string &path, const Sidecar &kv);
Sidecar read_sidecar(const std::string &path);

}  // namespace deqsci
