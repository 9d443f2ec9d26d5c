// Dense reference implementations shared by the unit tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "deqsci/sci.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Phi as an explicit n x nB matrix of concatenated diagonals.
inline MatrixXd dense_phi(const deqsci::SensingMask &m) {
  const auto n = static_cast<Eigen::Index>(m.pixels());
  MatrixXd phi = MatrixXd::Zero(n, n * static_cast<Eigen::Index>(m.frames()));
  for (std::size_t b = 0; b < m.frames(); ++b)
    for (Eigen::Index i = 0; i < n; ++i) phi(i, static_cast<Eigen::Index>(b) * n + i) = m.frame(b).data[i];
  return phi;
}

inline VectorXd vec(const deqsci::VideoCube &x) { return x.vec(); }
inline VectorXd vec(const deqsci::Image &y) {
  return Eigen::Map<const VectorXd>(y.data.data(), static_cast<Eigen::Index>(y.data.size()));
}

inline deqsci::VideoCube random_cube(std::size_t h, std::size_t w, std::size_t b, std::mt19937_64 &rng,
                                     double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  deqsci::VideoCube x(h, w, b);
  for (double &v : x.data()) v = u(rng);
  return x;
}

inline deqsci::Image random_image(std::size_t h, std::size_t w, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  deqsci::Image y(h, w);
  for (double &v : y.data) v = u(rng);
  return y;
}

/// Real-valued mask with entries in [0.1, 1], so no pixel is dead.
inline deqsci::SensingMask random_mask(std::size_t h, std::size_t w, std::size_t b, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<deqsci::Image> frames;
  for (std::size_t k = 0; k < b; ++k) {
    deqsci::Image f(h, w);
    for (double &v : f.data) v = u(rng);
    frames.push_back(std::move(f));
  }
  return deqsci::SensingMask(std::move(frames));
}

inline deqsci::Measurement measurement(deqsci::Image y) { return deqsci::Measurement{std::move(y), 0.0, std::nullopt}; }

}  // namespace oracle

#include "deqsci/conv.hpp"

namespace oracle {

/// Matrix of the zero-padded linear convolution on an h x w image.
inline MatrixXd dense_conv(const deqsci::ConvLayer &layer, std::size_t h, std::size_t w) {
  const std::size_t n_in = layer.in_channels * h * w;
  const std::size_t n_out = layer.out_channels * h * w;
  MatrixXd K(static_cast<Eigen::Index>(n_out), static_cast<Eigen::Index>(n_in));
  deqsci::FeatureMap e(layer.in_channels, h, w);
  for (std::size_t k = 0; k < n_in; ++k) {
    e.data[k] = 1.0;
    const deqsci::FeatureMap col = deqsci::conv2d_linear(layer, e);
    K.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const VectorXd>(col.data.data(), static_cast<Eigen::Index>(n_out));
    e.data[k] = 0.0;
  }
  return K;
}

inline double spectral_norm(const MatrixXd &A) {
  Eigen::JacobiSVD<MatrixXd> svd(A);
  return svd.singularValues()(0);
}

/// |a - n| / max(|a|, |n|, floor).
inline double rel_err(double a, double n, double floor = 1e-300) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace oracle
