#include "deqsci/cube.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "deqsci/error.hpp"

namespace deqsci {

namespace {
std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};
}  // namespace

std::size_t CubeCounter::live() noexcept { return g_live.load(); }
std::size_t CubeCounter::peak() noexcept { return g_peak.load(); }
void CubeCounter::reset_peak() noexcept { g_peak.store(g_live.load()); }

void CubeCounter::acquire() noexcept {
  const std::size_t now = g_live.fetch_add(1) + 1;
  std::size_t prev = g_peak.load();
  while (now > prev && !g_peak.compare_exchange_weak(prev, now)) {
  }
}

void CubeCounter::release() noexcept { g_live.fetch_sub(1); }

const char *to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DeadPixel: return "DeadPixel";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::Truncated: return "Truncated";
    case ErrorKind::DtypeMismatch: return "DtypeMismatch";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Unsupported: return "Unsupported";
    case ErrorKind::SingularAlpha: return "SingularAlpha";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

VideoCube::VideoCube(std::size_t h, std::size_t w, std::size_t b, double fill)
    : h_(h), w_(w), b_(b), data_(h * w * b, fill) {
  CubeCounter::acquire();
}

VideoCube::VideoCube(std::size_t h, std::size_t w, std::size_t b, std::vector<double> data)
    : h_(h), w_(w), b_(b), data_(std::move(data)) {
  CubeCounter::acquire();
  if (data_.size() != h * w * b) {
    throw Error(ErrorKind::ShapeMismatch, "cube data length " + std::to_string(data_.size()) +
                                              " != " + std::to_string(h * w * b));
  }
}

bool VideoCube::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double dot(const VideoCube &a, const VideoCube &b) {
  require_same_shape(a, b, "dot");
  return a.vec().dot(b.vec());
}

double norm(const VideoCube &a) { return a.vec().norm(); }

void require_same_shape(const VideoCube &a, const VideoCube &b, const char *what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(what) + ": " + std::to_string(a.height()) + "x" + std::to_string(a.width()) + "x" +
                    std::to_string(a.frames()) + " vs " + std::to_string(b.height()) + "x" +
                    std::to_string(b.width()) + "x" + std::to_string(b.frames()));
  }
}

VideoCube clamp01(const VideoCube &x) {
  VideoCube out = x;
  for (double &v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace deqsci
