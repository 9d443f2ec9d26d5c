#include "deqsci/sci.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "deqsci/error.hpp"

namespace deqsci {

namespace {

void require_mask_shape(const SensingMask &mask, const VideoCube &x, const char *what) {
  if (!mask.matches(x)) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": cube " + std::to_string(x.height()) + "x" +
                                              std::to_string(x.width()) + "x" + std::to_string(x.frames()) +
                                              " does not match mask " + std::to_string(mask.height()) + "x" +
                                              std::to_string(mask.width()) + "x" + std::to_string(mask.frames()));
  }
}

void require_mask_shape(const SensingMask &mask, const Image &y, const char *what) {
  if (!mask.matches(y)) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": measurement " + std::to_string(y.height) + "x" +
                                              std::to_string(y.width) + " does not match mask " +
                                              std::to_string(mask.height()) + "x" + std::to_string(mask.width()));
  }
}

}  // namespace

SensingMask::SensingMask(std::vector<Image> frames, DeadPixelPolicy policy)
    : frames_(std::move(frames)), policy_(policy) {
  if (frames_.empty()) throw Error(ErrorKind::InvalidArgument, "mask needs at least one frame");
  const std::size_t h = frames_.front().height;
  const std::size_t w = frames_.front().width;
  if (h == 0 || w == 0) throw Error(ErrorKind::InvalidArgument, "mask frames must be at least 1x1");
  if (policy_.kind == DeadPixelPolicy::Kind::Floor && !(policy_.tau > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "floor policy needs tau > 0");
  }
  q_diag_ = Image(h, w);
  for (std::size_t b = 0; b < frames_.size(); ++b) {
    const Image &f = frames_[b];
    if (f.height != h || f.width != w || f.data.size() != h * w) {
      throw Error(ErrorKind::ShapeMismatch, "mask frame " + std::to_string(b) + " has a different shape");
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double m = f.data[i];
      if (!std::isfinite(m) || m < 0.0) {
        throw Error(ErrorKind::InvalidArgument,
                    "mask frame " + std::to_string(b) + " pixel " + std::to_string(i) + " is negative or non-finite");
      }
      q_diag_.data[i] += m * m;
    }
  }
  if (policy_.kind == DeadPixelPolicy::Kind::Reject) {
    for (std::size_t i = 0; i < q_diag_.size(); ++i) {
      if (q_diag_.data[i] == 0.0) {
        throw Error(ErrorKind::DeadPixel, "pixel " + std::to_string(i) + " (row " + std::to_string(i / w) +
                                              ", col " + std::to_string(i % w) + ") is not covered by any mask frame");
      }
    }
  }
}

double SensingMask::divisor(std::size_t i) const noexcept {
  const double q = q_diag_.data[i];
  return policy_.kind == DeadPixelPolicy::Kind::Floor ? std::max(q, policy_.tau) : q;
}

std::size_t SensingMask::live_pixel_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(q_diag_.data.begin(), q_diag_.data.end(), [](double q) { return q > 0.0; }));
}

VideoCube SensingMask::as_cube() const {
  VideoCube c(height(), width(), frames());
  for (std::size_t b = 0; b < frames(); ++b) std::copy(frames_[b].data.begin(), frames_[b].data.end(), c.frame(b).begin());
  return c;
}

SensingMask SensingMask::from_cube(const VideoCube &c, DeadPixelPolicy policy) {
  std::vector<Image> frames;
  frames.reserve(c.frames());
  for (std::size_t b = 0; b < c.frames(); ++b) {
    Image f(c.height(), c.width());
    std::copy(c.frame(b).begin(), c.frame(b).end(), f.data.begin());
    frames.push_back(std::move(f));
  }
  return SensingMask(std::move(frames), policy);
}

SensingMask mask_generate(std::uint64_t seed, std::size_t h, std::size_t w, std::size_t b, MaskKind kind,
                          DeadPixelPolicy policy) {
  if (h == 0 || w == 0 || b == 0) throw Error(ErrorKind::InvalidArgument, "mask dimensions must be >= 1");
  if (kind.kind == MaskKind::Kind::Bernoulli && !(kind.p > 0.0 && kind.p <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "bernoulli probability must lie in (0, 1]");
  }
  std::vector<Image> frames(b, Image(h, w, 1.0));
  if (kind.kind == MaskKind::Kind::Bernoulli && kind.p < 1.0) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(kind.p);
    for (Image &f : frames) {
      for (double &v : f.data) v = coin(rng) ? 1.0 : 0.0;
    }
  }
  return SensingMask(std::move(frames), policy);
}

Measurement forward(const SensingMask &mask, const VideoCube &x) {
  require_mask_shape(mask, x, "forward");
  Measurement y{Image(mask.height(), mask.width()), 0.0, std::nullopt};
  const std::size_t n = mask.pixels();
  for (std::size_t b = 0; b < mask.frames(); ++b) {
    const auto &m = mask.frame(b).data;
    const auto xb = x.frame(b);
    for (std::size_t i = 0; i < n; ++i) y.data.data[i] += m[i] * xb[i];
  }
  return y;
}

VideoCube adjoint(const SensingMask &mask, const Image &y) {
  require_mask_shape(mask, y, "adjoint");
  VideoCube x(mask.height(), mask.width(), mask.frames());
  const std::size_t n = mask.pixels();
  for (std::size_t b = 0; b < mask.frames(); ++b) {
    const auto &m = mask.frame(b).data;
    auto xb = x.frame(b);
    for (std::size_t i = 0; i < n; ++i) xb[i] = m[i] * y.data[i];
  }
  return x;
}

Measurement add_noise(const Measurement &y, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error(ErrorKind::InvalidArgument, "noise sigma must be >= 0");
  Measurement out = y;
  out.noise_sigma = sigma;
  out.seed = seed;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (double &v : out.data.data) v += gauss(rng);
  return out;
}

VideoCube gap_project(const SensingMask &mask, const Image &y, const VideoCube &v) {
  require_mask_shape(mask, v, "gap_project");
  require_mask_shape(mask, y, "gap_project");
  const std::size_t n = mask.pixels();
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) {
    double phi_v = 0.0;
    for (std::size_t b = 0; b < mask.frames(); ++b) phi_v += mask.frame(b).data[i] * v.frame(b)[i];
    const double d = mask.divisor(i);
    scaled[i] = d > 0.0 ? (y.data[i] - phi_v) / d : 0.0;
  }
  VideoCube out = v;
  for (std::size_t b = 0; b < mask.frames(); ++b) {
    const auto &m = mask.frame(b).data;
    auto ob = out.frame(b);
    for (std::size_t i = 0; i < n; ++i) ob[i] += m[i] * scaled[i];
  }
  return out;
}

VideoCube rowspace_project(const SensingMask &mask, const VideoCube &v) {
  require_mask_shape(mask, v, "rowspace_project");
  const std::size_t n = mask.pixels();
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) {
    double phi_v = 0.0;
    for (std::size_t b = 0; b < mask.frames(); ++b) phi_v += mask.frame(b).data[i] * v.frame(b)[i];
    const double d = mask.divisor(i);
    scaled[i] = d > 0.0 ? phi_v / d : 0.0;
  }
  VideoCube out = v.zeros_like();
  for (std::size_t b = 0; b < mask.frames(); ++b) {
    const auto &m = mask.frame(b).data;
    auto ob = out.frame(b);
    for (std::size_t i = 0; i < n; ++i) ob[i] = m[i] * scaled[i];
  }
  return out;
}

VideoCube admm_x_update(const SensingMask &mask, const Image &y, const VideoCube &z, double rho) {
  if (!(rho > 0.0)) throw Error(ErrorKind::InvalidArgument, "ADMM penalty rho must be > 0");
  require_mask_shape(mask, z, "admm_x_update");
  require_mask_shape(mask, y, "admm_x_update");
  const std::size_t n = mask.pixels();
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) {
    double phi_z = 0.0;
    for (std::size_t b = 0; b < mask.frames(); ++b) phi_z += mask.frame(b).data[i] * z.frame(b)[i];
    scaled[i] = (y.data[i] - phi_z) / (rho + mask.q_diag().data[i]);
  }
  VideoCube out = z;
  for (std::size_t b = 0; b < mask.frames(); ++b) {
    const auto &m = mask.frame(b).data;
    auto ob = out.frame(b);
    for (std::size_t i = 0; i < n; ++i) ob[i] += m[i] * scaled[i];
  }
  return out;
}

}  // namespace deqsci
