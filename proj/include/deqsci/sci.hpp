#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "deqsci/cube.hpp"

namespace deqsci {

/// How pixels not covered by any mask frame (zero mask energy) are treated.
struct DeadPixelPolicy {
  enum class Kind { Reject, Floor };
  Kind kind = Kind::Reject;
  double tau = 1e-6;

  static DeadPixelPolicy reject() { return {Kind::Reject, 1e-6}; }
  static DeadPixelPolicy floor(double tau = 1e-6) { return {Kind::Floor, tau}; }
};

/// The B modulation frames that define the sensing matrix, plus the diagonal
/// of Phi Phi^T (sum of squared mask values per pixel).
class SensingMask {
 public:
  /// Validates frames (finite, nonnegative, equal shapes) and precomputes the
  /// mask energy. Under the reject policy a zero-energy pixel raises DeadPixel.
  SensingMask(std::vector<Image> frames, DeadPixelPolicy policy = DeadPixelPolicy::reject());

  std::size_t height() const noexcept { return frames_.front().height; }
  std::size_t width() const noexcept { return frames_.front().width; }
  std::size_t frames() const noexcept { return frames_.size(); }
  std::size_t pixels() const noexcept { return height() * width(); }

  const std::vector<Image> &frame_list() const noexcept { return frames_; }
  const Image &frame(std::size_t b) const { return frames_.at(b); }
  const Image &q_diag() const noexcept { return q_diag_; }
  const DeadPixelPolicy &policy() const noexcept { return policy_; }

  /// max(q_diag[i], tau) under the floor policy, q_diag[i] otherwise.
  double divisor(std::size_t i) const noexcept;
  bool dead(std::size_t i) const noexcept { return q_diag_.data[i] == 0.0; }
  std::size_t live_pixel_count() const noexcept;

  bool matches(const VideoCube &x) const noexcept {
    return x.height() == height() && x.width() == width() && x.frames() == frames();
  }
  bool matches(const Image &y) const noexcept { return y.height == height() && y.width == width(); }

  /// Mask frames as a B x H x W cube.
  VideoCube as_cube() const;
  static SensingMask from_cube(const VideoCube &c, DeadPixelPolicy policy = DeadPixelPolicy::reject());

 private:
  std::vector<Image> frames_;
  Image q_diag_;
  DeadPixelPolicy policy_;
};

struct MaskKind {
  enum class Kind { Bernoulli, AllOnes };
  Kind kind = Kind::Bernoulli;
  double p = 0.5;

  static MaskKind bernoulli(double p) { return {Kind::Bernoulli, p}; }
  static MaskKind all_ones() { return {Kind::AllOnes, 1.0}; }
};

struct Measurement {
  Image data;
  double noise_sigma = 0.0;
  std::optional<std::uint64_t> seed;
};

SensingMask mask_generate(std::uint64_t seed, std::size_t h, std::size_t w, std::size_t b, MaskKind kind,
                          DeadPixelPolicy policy = DeadPixelPolicy::reject());

/// y[i] = sum_b m_b[i] x_b[i].
Measurement forward(const SensingMask &mask, const VideoCube &x);

/// x_b[i] = m_b[i] y[i].
VideoCube adjoint(const SensingMask &mask, const Image &y);
inline VideoCube adjoint(const SensingMask &mask, const Measurement &y) { return adjoint(mask, y.data); }

/// Canonical solver initializer, Phi^T y.
inline VideoCube init_estimate(const SensingMask &mask, const Measurement &y) { return adjoint(mask, y); }

/// Adds i.i.d. N(0, sigma^2) noise drawn from a generator seeded with `seed`.
Measurement add_noise(const Measurement &y, double sigma, std::uint64_t seed);

/// Euclidean projection onto {x : Phi x = y}: v + Phi^T (Phi Phi^T)^{-1} (y - Phi v).
VideoCube gap_project(const SensingMask &mask, const Image &y, const VideoCube &v);
inline VideoCube gap_project(const SensingMask &mask, const Measurement &y, const VideoCube &v) {
  return gap_project(mask, y.data, v);
}

/// Applies Phi^T (Phi Phi^T)^{-1} Phi to v, the orthogonal projector onto the
/// row space of Phi. Dead pixels map to zero.
VideoCube rowspace_project(const SensingMask &mask, const VideoCube &v);

/// Closed-form ADMM x-update: argmin_x 1/2||y - Phi x||^2 + rho/2 ||x - z||^2,
/// computed as z + Phi^T (rho I + Phi Phi^T)^{-1} (y - Phi z).
VideoCube admm_x_update(const SensingMask &mask, const Image &y, const VideoCube &z, double rho);

}  // namespace deqsci
