#pragma once

// Linear-phase low-pass FIR design (Kaiser-windowed sinc).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "params.hpp"

namespace optomech {

struct LowpassSpec {
  double attenuation_db = 80.0;   // minimum stopband attenuation, >= 60
  double stopband_factor = 2.0;   // stopband edge = factor * passband edge
  double max_ripple_db = 0.1;     // peak passband deviation
  std::size_t max_taps = 1u << 22;
};

struct FirFilter {
  std::vector<double> taps; // symmetric, odd length, unit DC gain
  double rate = 0.0;
  double passband = 0.0; // Hz
  double stopband = 0.0; // Hz
  double attenuation_db = 0.0;

  [[nodiscard]] std::size_t length() const { return taps.size(); }
  /// Delay in input samples; compensated by centring each output on its input sample.
  [[nodiscard]] std::size_t group_delay() const { return (taps.size() - 1) / 2; }
  /// One-sided equivalent noise bandwidth (Hz) seen by a real input.
  [[nodiscard]] double noise_bandwidth() const {
    double s = 0.0;
    for (double h : taps) s += h * h;
    return 0.5 * rate * s;
  }
  /// Zero-phase amplitude response at frequency f (Hz).
  [[nodiscard]] double response(double f) const {
    const std::size_t m = group_delay();
    const double w = kTwoPi * f / rate;
    double acc = taps[m];
    for (std::size_t j = 1; j <= m; ++j) acc += 2.0 * taps[m + j] * std::cos(w * static_cast<double>(j));
    return acc;
  }
};

namespace detail {

inline double kaiser_beta(double att) {
  if (att > 50.0) return 0.1102 * (att - 8.7);
  if (att >= 21.0) return 0.5842 * std::pow(att - 21.0, 0.4) + 0.07886 * (att - 21.0);
  return 0.0;
}

inline std::vector<double> kaiser_sinc(std::size_t n, double cutoff, double rate, double beta) {
  std::vector<double> h(n);
  const double m = 0.5 * static_cast<double>(n - 1);
  const double fc = cutoff / rate; // cycles/sample
  const double i0b = std::cyl_bessel_i(0.0, beta);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) - m;
    const double arg = 2.0 * fc * t;
    const double sinc = t == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    const double r = m > 0 ? t / m : 0.0;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[k] = 2.0 * fc * sinc * w;
    sum += h[k];
  }
  for (auto& v : h) v /= sum;
  return h;
}

struct ResponseCheck {
  double ripple_db;
  double attenuation_db;
};

inline ResponseCheck measure_response(const FirFilter& f) {
  // Budget the dense-grid check so very long filters stay affordable.
  const std::size_t points = std::clamp<std::size_t>(50'000'000 / std::max<std::size_t>(f.length(), 1), 16, 400);
  double worst_pass = 0.0, worst_stop = 0.0;
  for (std::size_t i = 0; i <= points; ++i) {
    const double fp = f.passband * static_cast<double>(i) / static_cast<double>(points);
    worst_pass = std::max(worst_pass, std::abs(20.0 * std::log10(std::abs(f.response(fp)))));
  }
  const double nyq = 0.5 * f.rate;
  for (std::size_t i = 0; i <= points; ++i) {
    const double fs = f.stopband + (nyq - f.stopband) * static_cast<double>(i) / static_cast<double>(points);
    worst_stop = std::max(worst_stop, std::abs(f.response(fs)));
  }
  return {worst_pass, worst_stop > 0 ? -20.0 * std::log10(worst_stop) : 400.0};
}

} // namespace detail

/// Designs a low-pass FIR with passband edge `cutoff` (Hz). The filter is
/// lengthened until the measured passband ripple and stopband attenuation
/// meet the spec; throws when that needs more than spec.max_taps.
inline FirFilter design_lowpass(double cutoff, double rate, const LowpassSpec& spec = {}) {
  if (!(cutoff > 0.0) || !(rate > 0.0)) throw std::invalid_argument("design_lowpass: cutoff and rate must be > 0");
  const double stop = spec.stopband_factor * cutoff;
  if (stop >= 0.5 * rate) {
    std::ostringstream os;
    os << "design_lowpass: stopband edge " << stop << " Hz is not below Nyquist " << 0.5 * rate << " Hz";
    throw std::invalid_argument(os.str());
  }
  if (spec.attenuation_db < 60.0) throw std::invalid_argument("design_lowpass: attenuation below 60 dB requested");
  const double dw = kTwoPi * (stop - cutoff) / rate;
  // Kaiser's length estimate plus 2 dB of margin for the ripple/attenuation check.
  auto n = static_cast<std::size_t>(std::ceil((spec.attenuation_db + 2.0 - 7.95) / (2.285 * dw))) + 1;
  const double beta = detail::kaiser_beta(spec.attenuation_db + 2.0);
  for (int attempt = 0; attempt < 8; ++attempt) {
    if (n % 2 == 0) ++n;
    if (n > spec.max_taps) {
      std::ostringstream os;
      os << "design_lowpass: " << spec.attenuation_db << " dB across a " << stop - cutoff
         << " Hz transition at " << rate << " Hz needs " << n << " taps (> max_taps = " << spec.max_taps
         << "); widen the transition or lower the rate";
      throw std::invalid_argument(os.str());
    }
    FirFilter f{detail::kaiser_sinc(n, 0.5 * (cutoff + stop), rate, beta), rate, cutoff, stop, 0.0};
    const auto check = detail::measure_response(f);
    f.attenuation_db = check.attenuation_db;
    if (check.attenuation_db >= spec.attenuation_db && check.ripple_db <= spec.max_ripple_db) return f;
    n = static_cast<std::size_t>(1.15 * static_cast<double>(n));
  }
  throw std::invalid_argument("design_lowpass: specification not met after lengthening the filter");
}

} // namespace optomech
