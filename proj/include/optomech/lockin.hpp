#pragma once

// Lock-in demodulation: multiply by 2cos / 2sin references, low-pass, decimate.
// A component A cos(2 pi f0 t) + C sin(2 pi f0 t) demodulates to (A, C).

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "carrier.hpp"
#include "filter.hpp"
#include "params.hpp"
#include "transducer.hpp"

namespace optomech {

struct LockinOutput {
  double rate = 0.0;             // decimated rate
  double t0 = 0.0;               // time of the first output sample, s
  std::size_t first_input = 0;   // input index of the first output (filter centre)
  std::size_t decimation = 1;
  std::vector<double> cos_q, sin_q;

  [[nodiscard]] std::size_t size() const { return cos_q.size(); }
};

namespace detail {

/// Centred, symmetric FIR evaluated at input index c (requires c +/- m in range).
inline double fir_at(const std::vector<double>& h, const double* x, std::size_t c) {
  const std::size_t m = (h.size() - 1) / 2;
  const double* lo = x + (c - m);
  const double* hi = x + (c + m);
  double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
  std::size_t j = 0;
  for (; j + 4 <= m; j += 4) {
    a0 += h[j] * (lo[j] + hi[-static_cast<std::ptrdiff_t>(j)]);
    a1 += h[j + 1] * (lo[j + 1] + hi[-static_cast<std::ptrdiff_t>(j + 1)]);
    a2 += h[j + 2] * (lo[j + 2] + hi[-static_cast<std::ptrdiff_t>(j + 2)]);
    a3 += h[j + 3] * (lo[j + 3] + hi[-static_cast<std::ptrdiff_t>(j + 3)]);
  }
  for (; j < m; ++j) a0 += h[j] * (lo[j] + hi[-static_cast<std::ptrdiff_t>(j)]);
  return (a0 + a1) + (a2 + a3) + h[m] * x[c];
}

} // namespace detail

/// Demodulates `samples` at f0 with a prepared filter. Only outputs whose filter
/// support lies fully inside the record are produced (the transient is excluded);
/// output centres sit on multiples of `decimation`, so demodulators sharing the
/// filter and decimation are time-aligned sample for sample.
inline LockinOutput lockin(std::span<const double> samples, double rate, double f0, const FirFilter& filter,
                           std::size_t decimation, double phase = 0.0) {
  if (decimation < 1) throw std::invalid_argument("lockin: decimation must be >= 1");
  if (f0 + filter.passband >= 0.5 * rate)
    throw std::invalid_argument("lockin: f0 + B must stay below Nyquist");
  if (rate / static_cast<double>(decimation) < 2.0 * filter.passband)
    throw std::invalid_argument("lockin: decimated rate " + std::to_string(rate / decimation) +
                                " Hz is below 2B = " + std::to_string(2.0 * filter.passband) + " Hz");
  if (filter.rate != rate) throw std::invalid_argument("lockin: filter designed for a different rate");
  const std::size_t n = samples.size();
  const std::size_t m = filter.group_delay();
  LockinOutput out;
  out.rate = rate / static_cast<double>(decimation);
  out.decimation = decimation;
  if (n < 2 * m + 1) return out;
  const std::size_t first = ((m + decimation - 1) / decimation) * decimation;
  if (first + m >= n) return out;
  out.first_input = first;
  out.t0 = static_cast<double>(first) / rate;

  std::vector<double> mc(n), ms(n);
  carrier(f0, rate, 0, mc, ms);
  const double cp = std::cos(phase), sp = std::sin(phase);
  for (std::size_t k = 0; k < n; ++k) {
    const double c = mc[k] * cp - ms[k] * sp; // cos(w t + phase)
    const double s = ms[k] * cp + mc[k] * sp;
    mc[k] = 2.0 * samples[k] * c;
    ms[k] = 2.0 * samples[k] * s;
  }
  for (std::size_t c = first; c + m < n; c += decimation) {
    out.cos_q.push_back(detail::fir_at(filter.taps, mc.data(), c));
    out.sin_q.push_back(detail::fir_at(filter.taps, ms.data(), c));
  }
  return out;
}

inline std::size_t default_decimation(double rate, double bandwidth) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(rate / (10.0 * bandwidth))));
}

/// Convenience form: designs the default low-pass for bandwidth B.
inline LockinOutput lockin(const HomodyneTrace& trace, double f0, double bandwidth, std::size_t decimation) {
  const FirFilter f = design_lowpass(bandwidth, trace.sample_rate);
  return lockin(trace.samples, trace.sample_rate, f0, f, decimation);
}

/// Trace-unit gains that map demodulated outputs onto sigma_th-normalized
/// quadratures: Xl = cos_q(w_m) / linear, P2 = cos_q(2 w_m) / quadratic.
struct Calibration {
  double linear = 1.0;    // sin(theta) * lambda_eff
  double quadratic = 1.0; // -cos(theta) * lambda_eff^2 (sign of the -lambda^2 x^2 term)

  static Calibration from(double theta, const DerivedParams& d) {
    const double le = d.lambda_eff();
    return {std::sin(theta) * le, -std::cos(theta) * le * le};
  }
};

struct DemodRecord {
  double rate = 0.0;
  double t0 = 0.0;
  double bandwidth = 0.0;  // low-pass passband edge B, Hz
  double phase_ref_1 = 0.0; // reference phase at w_m, rad
  double phase_ref_2 = 0.0; // reference phase at 2 w_m (locked to twice phase_ref_1)
  std::vector<double> Xl, Yl, P2, Q2;
  std::vector<std::size_t> block_starts; // index of the first sample of each appended block

  [[nodiscard]] std::size_t size() const { return Xl.size(); }

  void append(const DemodRecord& other) {
    if (Xl.empty()) {
      *this = other;
      if (block_starts.empty()) block_starts.push_back(0);
      return;
    }
    if (other.rate != rate) throw std::invalid_argument("DemodRecord::append: rate mismatch");
    block_starts.push_back(Xl.size());
    Xl.insert(Xl.end(), other.Xl.begin(), other.Xl.end());
    Yl.insert(Yl.end(), other.Yl.begin(), other.Yl.end());
    P2.insert(P2.end(), other.P2.begin(), other.P2.end());
    Q2.insert(Q2.end(), other.Q2.begin(), other.Q2.end());
  }
};

struct DemodSettings {
  double f_m = 0.0;        // Hz
  double bandwidth = 0.0;  // Hz
  std::size_t decimation = 0; // 0 -> default_decimation
  LowpassSpec filter;
};

/// Demodulates a trace at f_m and 2 f_m with one shared filter and returns the
/// calibrated quadratures (X~, Y~) and (P~, Q~).
inline DemodRecord demodulate(const HomodyneTrace& trace, const DemodSettings& set, const Calibration& cal,
                              const FirFilter* prepared = nullptr) {
  if (!(set.bandwidth < 0.5 * set.f_m))
    throw std::invalid_argument("demodulate: B must be below f_m/2 so the w_m and 2w_m bands do not overlap");
  if (cal.linear == 0.0 || cal.quadratic == 0.0)
    throw std::invalid_argument("demodulate: homodyne angle leaves a channel with zero gain");
  FirFilter local;
  if (!prepared) local = design_lowpass(set.bandwidth, trace.sample_rate, set.filter);
  const FirFilter& f = prepared ? *prepared : local;
  const std::size_t dec = set.decimation ? set.decimation : default_decimation(trace.sample_rate, set.bandwidth);
  const auto lin = lockin(trace.samples, trace.sample_rate, set.f_m, f, dec, 0.0);
  const auto quad = lockin(trace.samples, trace.sample_rate, 2.0 * set.f_m, f, dec, 0.0);
  DemodRecord r;
  r.rate = lin.rate;
  r.t0 = lin.t0;
  r.bandwidth = set.bandwidth;
  r.block_starts = {0};
  r.Xl.resize(lin.size());
  r.Yl.resize(lin.size());
  r.P2.resize(lin.size());
  r.Q2.resize(lin.size());
  for (std::size_t k = 0; k < lin.size(); ++k) {
    r.Xl[k] = lin.cos_q[k] / cal.linear;
    r.Yl[k] = lin.sin_q[k] / cal.linear;
    r.P2[k] = quad.cos_q[k] / cal.quadratic;
    r.Q2[k] = quad.sin_q[k] / cal.quadratic;
  }
  return r;
}

} // namespace optomech
