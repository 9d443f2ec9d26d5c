#include "deqsci/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "deqsci/error.hpp"

namespace deqsci {

const char *to_string(SceneKind k) {
  switch (k) {
    case SceneKind::MovingSquare: return "moving_square";
    case SceneKind::ShiftingGradient: return "shifting_gradient";
    case SceneKind::BouncingDots: return "bouncing_dots";
  }
  return "?";
}

SceneKind parse_scene_kind(const std::string &s) {
  if (s == "moving_square") return SceneKind::MovingSquare;
  if (s == "shifting_gradient") return SceneKind::ShiftingGradient;
  if (s == "bouncing_dots") return SceneKind::BouncingDots;
  throw Error(ErrorKind::InvalidArgument, "unknown scene kind '" + s + "'");
}

namespace {

std::size_t wrap(long long v, std::size_t n) {
  const long long m = static_cast<long long>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

// Separate streams per scene kind so that changing one generator does not
// reshuffle the others.
std::mt19937_64 scene_rng(const SyntheticScene &s) {
  std::seed_seq seq{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32),
                    static_cast<std::uint32_t>(s.kind)};
  return std::mt19937_64(seq);
}

VideoCube moving_square(const SyntheticScene &s) {
  auto rng = scene_rng(s);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  // Smooth background in [0.1, 0.4].
  const double fi = 1.0 + std::floor(2.0 * U(rng));
  const double fj = 1.0 + std::floor(2.0 * U(rng));
  const double phase = two_pi * U(rng);
  const double base = 0.1 + 0.15 * U(rng);
  const double side_frac = 0.2 + 0.15 * U(rng);
  const double bright = 0.65 + 0.3 * U(rng);
  const std::size_t side = std::max<std::size_t>(1, static_cast<std::size_t>(side_frac * std::min(s.h, s.w)));
  const auto top = static_cast<std::size_t>(U(rng) * s.h);
  const auto left = static_cast<std::size_t>(U(rng) * s.w);

  Image f0(s.h, s.w);
  for (std::size_t i = 0; i < s.h; ++i)
    for (std::size_t j = 0; j < s.w; ++j) {
      const double u = static_cast<double>(i) / s.h;
      const double v = static_cast<double>(j) / s.w;
      f0(i, j) = base + 0.15 * (0.5 + 0.5 * std::sin(two_pi * (fi * u + fj * v) + phase));
    }
  for (std::size_t di = 0; di < side; ++di)
    for (std::size_t dj = 0; dj < side; ++dj) {
      const std::size_t i = (top + di) % s.h;
      const std::size_t j = (left + dj) % s.w;
      // Mild shading inside the square so it carries texture.
      f0(i, j) = bright - 0.1 * static_cast<double>(di + dj) / static_cast<double>(2 * side);
    }

  const auto [mi, mj] = square_motion(s);
  VideoCube x(s.h, s.w, s.b);
  for (std::size_t b = 0; b < s.b; ++b) {
    const long long oi = static_cast<long long>(b) * mi;
    const long long oj = static_cast<long long>(b) * mj;
    for (std::size_t i = 0; i < s.h; ++i)
      for (std::size_t j = 0; j < s.w; ++j)
        x(wrap(static_cast<long long>(i) + oi, s.h), wrap(static_cast<long long>(j) + oj, s.w), b) = f0(i, j);
  }
  return x;
}

VideoCube shifting_gradient(const SyntheticScene &s) {
  auto rng = scene_rng(s);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const double angle = two_pi * U(rng);
  const double periods = 1.0 + 2.0 * U(rng);
  const double phase = two_pi * U(rng);
  const double ci = std::sin(angle);
  const double cj = std::cos(angle);
  const double len = static_cast<double>(std::max(s.h, s.w));
  VideoCube x(s.h, s.w, s.b);
  for (std::size_t b = 0; b < s.b; ++b)
    for (std::size_t i = 0; i < s.h; ++i)
      for (std::size_t j = 0; j < s.w; ++j) {
        const double t = ci * static_cast<double>(i) + cj * static_cast<double>(j) -
                         static_cast<double>(b) * s.amplitude;
        x(i, j, b) = 0.5 + 0.4 * std::sin(two_pi * periods * t / len + phase);
      }
  return x;
}

VideoCube bouncing_dots(const SyntheticScene &s) {
  auto rng = scene_rng(s);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const int n = 3 + static_cast<int>(3.0 * U(rng));
  const double radius = std::max(1.0, 0.06 * static_cast<double>(std::min(s.h, s.w)));
  struct Dot {
    double ci, cj, vi, vj, level;
  };
  std::vector<Dot> dots;
  for (int k = 0; k < n; ++k) {
    const double angle = 2.0 * std::numbers::pi * U(rng);
    dots.push_back({U(rng) * (s.h - 1), U(rng) * (s.w - 1), s.amplitude * std::sin(angle),
                    s.amplitude * std::cos(angle), 0.5 + 0.5 * U(rng)});
  }
  auto reflect = [](double p, double hi) {
    if (hi <= 0.0) return 0.0;
    const double period = 2.0 * hi;
    double m = std::fmod(p, period);
    if (m < 0) m += period;
    return m <= hi ? m : period - m;
  };
  VideoCube x(s.h, s.w, s.b, 0.05);
  for (std::size_t b = 0; b < s.b; ++b)
    for (const Dot &d : dots) {
      const double ci = reflect(d.ci + d.vi * b, static_cast<double>(s.h - 1));
      const double cj = reflect(d.cj + d.vj * b, static_cast<double>(s.w - 1));
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) {
          const double r2 = (i - ci) * (i - ci) + (j - cj) * (j - cj);
          const double v = d.level * std::exp(-r2 / (2.0 * radius * radius));
          x(i, j, b) = std::min(1.0, x(i, j, b) + v);
        }
    }
  return x;
}

}  // namespace

std::pair<int, int> square_motion(const SyntheticScene &s) {
  static constexpr std::array<std::pair<int, int>, 8> dirs{
      {{0, 1}, {1, 0}, {1, 1}, {1, -1}, {0, -1}, {-1, 0}, {-1, -1}, {-1, 1}}};
  auto rng = scene_rng(s);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  // The direction is the draw after the eight used for frame 0.
  for (int k = 0; k < 8; ++k) (void)U(rng);
  const auto d = dirs[std::min<std::size_t>(7, static_cast<std::size_t>(8.0 * U(rng)))];
  return {d.first * s.amplitude, d.second * s.amplitude};
}

VideoCube synth_video(const SyntheticScene &s) {
  if (s.h == 0 || s.w == 0 || s.b == 0) throw Error(ErrorKind::InvalidArgument, "scene dimensions must be positive");
  if (s.amplitude < 0) throw Error(ErrorKind::InvalidArgument, "motion amplitude must be >= 0");
  switch (s.kind) {
    case SceneKind::MovingSquare: return moving_square(s);
    case SceneKind::ShiftingGradient: return shifting_gradient(s);
    case SceneKind::BouncingDots: return bouncing_dots(s);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown scene kind");
}

}  // namespace deqsci
