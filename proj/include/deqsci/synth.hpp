#pragma once

#include <cstdint>
#include <string>

#include "deqsci/cube.hpp"

namespace deqsci {

enum class SceneKind { MovingSquare, ShiftingGradient, BouncingDots };

const char *to_string(SceneKind k);
/// Accepts moving_square, shifting_gradient, bouncing_dots.
SceneKind parse_scene_kind(const std::string &s);

struct SyntheticScene {
  SceneKind kind = SceneKind::MovingSquare;
  std::uint64_t seed = 0;
  std::size_t h = 64;
  std::size_t w = 64;
  std::size_t b = 8;
  /// Motion in whole pixels per frame.
  int amplitude = 1;
};

/// Deterministic cube with values in [0, 1].
VideoCube synth_video(const SyntheticScene &scene);

/// Per-frame displacement (rows, cols) of a moving_square scene; frame b is
/// frame 0 rolled by b times this vector.
std::pair<int, int> square_motion(const SyntheticScene &scene);

}  // namespace deqsci
