#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "params.hpp"

namespace optomech {

/// Fills c[k] = cos(2 pi f (first + k) / rate), s[k] = sin(...). The phasor is
/// advanced by complex rotation and re-anchored to the exact value every
/// 256 samples, so the error stays at the 1e-14 level over any record length.
inline void carrier(double freq, double rate, std::size_t first, std::span<double> c,
                    std::span<double> s) {
  constexpr std::size_t kAnchor = 256;
  const double step = kTwoPi * freq / rate;
  const double cd = std::cos(step), sd = std::sin(step);
  const std::size_t n = c.size();
  for (std::size_t k0 = 0; k0 < n; k0 += kAnchor) {
    // reduce the phase in long double to keep the anchor exact for long records
    const long double cycles = static_cast<long double>(freq) * static_cast<long double>(first + k0) /
                               static_cast<long double>(rate);
    const double frac = static_cast<double>(cycles - std::floor(cycles));
    double cr = std::cos(kTwoPi * frac), sr = std::sin(kTwoPi * frac);
    const std::size_t k1 = std::min(n, k0 + kAnchor);
    for (std::size_t k = k0; k < k1; ++k) {
      c[k] = cr;
      s[k] = sr;
      const double nc = cr * cd - sr * sd;
      sr = sr * cd + cr * sd;
      cr = nc;
    }
  }
}

} // namespace optomech
