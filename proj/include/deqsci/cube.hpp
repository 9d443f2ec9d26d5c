#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace deqsci {

using Vec = Eigen::VectorXd;
using VecMap = Eigen::Map<Vec>;
using ConstVecMap = Eigen::Map<const Vec>;

/// Counts live VideoCube objects. Used to verify that training runs in
/// memory independent of the number of fixed-point iterations.
class CubeCounter {
 public:
  static std::size_t live() noexcept;
  static std::size_t peak() noexcept;
  /// Resets the peak to the current live count.
  static void reset_peak() noexcept;

 private:
  friend class VideoCube;
  static void acquire() noexcept;
  static void release() noexcept;
};

/// Single H x W real image, row-major. Used for measurements, mask frames
/// and the precomputed mask energy.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), data(h * w, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  double &operator()(std::size_t i, std::size_t j) { return data[i * width + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * width + j]; }
  bool same_shape(const Image &o) const noexcept { return height == o.height && width == o.width; }
};

/// H x W x B video cube. Stored frame-major: frame b occupies the contiguous
/// block [b*H*W, (b+1)*H*W), i.e. the vectorized frames stacked in order.
class VideoCube {
 public:
  VideoCube() { CubeCounter::acquire(); }
  VideoCube(std::size_t h, std::size_t w, std::size_t b, double fill = 0.0);
  VideoCube(std::size_t h, std::size_t w, std::size_t b, std::vector<double> data);
  VideoCube(const VideoCube &o) : h_(o.h_), w_(o.w_), b_(o.b_), data_(o.data_) { CubeCounter::acquire(); }
  VideoCube(VideoCube &&o) noexcept : h_(o.h_), w_(o.w_), b_(o.b_), data_(std::move(o.data_)) {
    CubeCounter::acquire();
  }
  VideoCube &operator=(const VideoCube &) = default;
  VideoCube &operator=(VideoCube &&) noexcept = default;
  ~VideoCube() { CubeCounter::release(); }

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t frames() const noexcept { return b_; }
  std::size_t pixels() const noexcept { return h_ * w_; }
  std::size_t size() const noexcept { return data_.size(); }

  double &operator()(std::size_t i, std::size_t j, std::size_t b) { return data_[(b * h_ + i) * w_ + j]; }
  double operator()(std::size_t i, std::size_t j, std::size_t b) const { return data_[(b * h_ + i) * w_ + j]; }

  std::span<double> frame(std::size_t b) { return {data_.data() + b * h_ * w_, h_ * w_}; }
  std::span<const double> frame(std::size_t b) const { return {data_.data() + b * h_ * w_, h_ * w_}; }

  std::vector<double> &data() noexcept { return data_; }
  const std::vector<double> &data() const noexcept { return data_; }

  VecMap vec() { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }
  ConstVecMap vec() const { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }

  bool same_shape(const VideoCube &o) const noexcept { return h_ == o.h_ && w_ == o.w_ && b_ == o.b_; }
  bool all_finite() const noexcept;

  /// Zero-filled cube with the same shape.
  VideoCube zeros_like() const { return VideoCube(h_, w_, b_); }

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::size_t b_ = 0;
  std::vector<double> data_;
};

double dot(const VideoCube &a, const VideoCube &b);
double norm(const VideoCube &a);

/// Throws ShapeMismatch naming `what` when shapes differ.
void require_same_shape(const VideoCube &a, const VideoCube &b, const char *what);

/// Elementwise clamp to [0, 1]. Applied only before computing metrics.
VideoCube clamp01(const VideoCube &x);

}  // namespace deqsci
