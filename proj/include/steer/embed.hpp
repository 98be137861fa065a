#pragma once

#include <cmath>
#include <numbers>
#include <span>

namespace steer {

inline constexpr std::size_t kTimeEmbedDim = 16;

// Sinusoidal features over geometrically spaced frequencies. t01 is the
// normalized time in [0, 1]; adjacent levels stay distinguishable because the
// lowest frequency spans half a period over the unit interval.
inline void embed_time(double t01, std::span<double> out) {
  double freq = std::numbers::pi;
  for (std::size_t j = 0; j < kTimeEmbedDim / 2; ++j) {
    out[2 * j] = std::sin(freq * t01);
    out[2 * j + 1] = std::cos(freq * t01);
    freq *= 2.0;
  }
}

}  // namespace steer
