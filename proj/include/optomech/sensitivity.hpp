#pragma once

// Peak-to-floor signal-to-noise at w_m and 2 w_m, and the noise floor referred
// to displacement (m/sqrt(Hz)) and displacement squared (m^2/sqrt(Hz)).

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "params.hpp"
#include "spectrum.hpp"
#include "transducer.hpp"

namespace optomech {

struct SnrOptions {
  double rbw = 20.0;            // Hz
  double min_peak_db = 6.0;     // below this the line counts as missing
  double floor_lo_factor = 0.5; // floor = median PSD over [lo, hi] x f_m
  double floor_hi_factor = 4.5;
};

struct PeakSnr {
  bool found = false;
  double frequency = 0.0;  // Hz, bin of the maximum
  double peak_psd = 0.0;
  double snr_db = std::numeric_limits<double>::quiet_NaN();
  std::string problem;
};

struct SnrReport {
  double rbw = 0.0;
  double floor_psd = 0.0;        // trace units^2/Hz
  double floor_m = 0.0;          // m/sqrt(Hz), via the w_m gain at this angle
  double floor_m2 = 0.0;         // m^2/sqrt(Hz), via the 2 w_m gain at this angle
  PeakSnr linear, quadratic;
  Spectrum spectrum;
};

inline PeakSnr find_peak(const Spectrum& s, double f0, double floor, const SnrOptions& opt) {
  PeakSnr p;
  const std::size_t a = s.bin(f0 - 2.0 * opt.rbw), b = s.bin(f0 + 2.0 * opt.rbw);
  std::size_t best = a;
  for (std::size_t k = a; k <= b; ++k)
    if (s.psd[k] > s.psd[best]) best = k;
  p.frequency = s.frequency(best);
  p.peak_psd = s.psd[best];
  const double snr = 10.0 * std::log10(p.peak_psd / floor);
  if (!(snr >= opt.min_peak_db)) {
    std::ostringstream os;
    os << "no line at " << f0 << " Hz: peak/floor " << snr << " dB < " << opt.min_peak_db << " dB";
    p.problem = os.str();
    return p;
  }
  p.found = true;
  p.snr_db = snr;
  return p;
}

/// Accumulates a spectrum at the requested RBW (Hann, 50 % overlap) and reports
/// the lines at f_m and 2 f_m against the broadband white floor.
inline SnrReport snr_report(WelchAccumulator& acc, double f_m, double theta, const DerivedParams& d,
                            const SnrOptions& opt = {}) {
  SnrReport r;
  r.spectrum = acc.result();
  r.rbw = r.spectrum.rbw;
  r.floor_psd = median_density(r.spectrum, opt.floor_lo_factor * f_m,
                               std::min(opt.floor_hi_factor * f_m, r.spectrum.max_frequency()));
  const double g1 = std::abs(std::sin(theta)) * d.lambda / d.x_zp;
  const double g2 = std::abs(std::cos(theta)) * d.lambda * d.lambda / (d.x_zp * d.x_zp);
  const double amp = std::sqrt(r.floor_psd);
  r.floor_m = g1 > 0 ? amp / g1 : std::numeric_limits<double>::infinity();
  r.floor_m2 = g2 > 0 ? amp / g2 : std::numeric_limits<double>::infinity();
  r.linear = find_peak(r.spectrum, f_m, r.floor_psd, opt);
  r.quadratic = find_peak(r.spectrum, 2.0 * f_m, r.floor_psd, opt);
  return r;
}

inline WelchAccumulator snr_accumulator(double rate, const SnrOptions& opt = {}) {
  return WelchAccumulator(rate, segment_for_rbw(rate, opt.rbw), 0.5, Window::Hann);
}

inline std::string summary(const SnrReport& r) {
  std::ostringstream os;
  os << std::setprecision(4) << "RBW " << r.rbw << " Hz, floor " << r.floor_psd << " /Hz = " << r.floor_m
     << " m/sqrt(Hz) = " << r.floor_m2 << " m^2/sqrt(Hz)\n";
  for (const auto* p : {&r.linear, &r.quadratic}) {
    os << (p == &r.linear ? "  w_m : " : "  2w_m: ");
    if (p->found) os << "SNR " << p->snr_db << " dB at " << p->frequency << " Hz\n";
    else os << "MISSING (" << p->problem << ")\n";
  }
  return os.str();
}

} // namespace optomech
