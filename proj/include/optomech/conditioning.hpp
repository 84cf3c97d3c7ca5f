#pragma once

// Conditional state preparation: rotate each (P, Q) sample onto the P axis,
// rotate (X, Y) through the half angle, keep the samples whose aligned
// quadratic outcome falls in a window, and characterise the resulting
// two-peaked distribution of the rotated linear quadrature.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "lockin.hpp"
#include "spectrum.hpp"

namespace optomech {

struct AlignedRecord {
  double rate = 0.0;
  double bandwidth = 0.0;
  std::vector<double> phi;  // half angle, rad
  std::vector<double> Pmag; // sqrt(P^2 + Q^2)
  std::vector<double> Xr, Yr;
  std::vector<std::size_t> source_index; // sample index in the demodulated record
  std::size_t excluded = 0;              // samples with (P, Q) = (0, 0)

  [[nodiscard]] std::size_t size() const { return Pmag.size(); }
};

inline AlignedRecord align(const DemodRecord& r) {
  const std::size_t n = r.size();
  if (r.Yl.size() != n || r.P2.size() != n || r.Q2.size() != n)
    throw std::invalid_argument("align: demodulated series are not time-aligned");
  AlignedRecord a;
  a.rate = r.rate;
  a.bandwidth = r.bandwidth;
  a.phi.reserve(n);
  a.Pmag.reserve(n);
  a.Xr.reserve(n);
  a.Yr.reserve(n);
  a.source_index.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double P = r.P2[k], Q = r.Q2[k];
    if (P == 0.0 && Q == 0.0) {
      ++a.excluded;
      continue;
    }
    const double phi = 0.5 * std::atan2(Q, P);
    const double c = std::cos(phi), s = std::sin(phi);
    a.phi.push_back(phi);
    a.Pmag.push_back(std::hypot(P, Q));
    a.Xr.push_back(r.Xl[k] * c + r.Yl[k] * s);
    a.Yr.push_back(r.Yl[k] * c - r.Xl[k] * s);
    a.source_index.push_back(k);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Quadratic measurement uncertainty from an off-resonant band

/// Demodulated noise-only band, already divided by the quadratic gain.
struct NoiseReference {
  double rate = 0.0;
  double bandwidth = 0.0;
  double center = 0.0; // Hz
  std::vector<double> cos_q, sin_q;
};

inline NoiseReference noise_reference(const HomodyneTrace& trace, double center, const FirFilter& filter,
                                      std::size_t decimation, const Calibration& cal) {
  const auto out = lockin(trace.samples, trace.sample_rate, center, filter, decimation);
  NoiseReference ref{out.rate, filter.passband, center, out.cos_q, out.sin_q};
  const double g = std::abs(cal.quadratic);
  for (auto& v : ref.cos_q) v /= g;
  for (auto& v : ref.sin_q) v /= g;
  return ref;
}

inline void append(NoiseReference& dst, const NoiseReference& src) {
  if (dst.cos_q.empty()) {
    dst = src;
    return;
  }
  dst.cos_q.insert(dst.cos_q.end(), src.cos_q.begin(), src.cos_q.end());
  dst.sin_q.insert(dst.sin_q.end(), src.sin_q.begin(), src.sin_q.end());
}

class ContaminatedReference : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMaxReferenceFlatness = 2.0;

/// Max/median PSD of the reference quadratures over |f| < 0.9 B. A flat band
/// gives ~1; a spectral line in the band raises it.
inline double reference_flatness(const NoiseReference& ref) {
  const double df_target = ref.bandwidth / 8.0;
  auto seg = static_cast<std::size_t>(std::llround(ref.rate / df_target));
  seg = std::min(seg, ref.cos_q.size());
  if (seg < 16) throw std::invalid_argument("reference_flatness: reference record too short");
  WelchAccumulator acc(ref.rate, seg, 0.5, Window::Hann, true);
  acc.add(ref.cos_q);
  acc.add(ref.sin_q);
  const Spectrum s = acc.result();
  const std::size_t top = s.bin(0.9 * ref.bandwidth);
  std::vector<double> v(s.psd.begin() + 1, s.psd.begin() + static_cast<std::ptrdiff_t>(top) + 1);
  if (v.size() < 3) throw std::invalid_argument("reference_flatness: too few bins below 0.9 B");
  const double mx = *std::max_element(v.begin(), v.end());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return mx / v[v.size() / 2];
}

/// sigma_P: per-quadrature RMS of the noise-only demodulated band, in the
/// calibrated units of the 2 w_m channel.
inline double estimate_quadratic_uncertainty(const NoiseReference& ref, bool check_contamination = true) {
  if (ref.cos_q.empty() || ref.cos_q.size() != ref.sin_q.size())
    throw std::invalid_argument("estimate_quadratic_uncertainty: empty or misaligned reference");
  if (check_contamination) {
    const double flat = reference_flatness(ref);
    if (flat > kMaxReferenceFlatness) {
      std::ostringstream os;
      os << "reference band at " << ref.center << " Hz is contaminated: max/median PSD = " << flat << " (limit "
         << kMaxReferenceFlatness << ")";
      throw ContaminatedReference(os.str());
    }
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < ref.cos_q.size(); ++k) acc += ref.cos_q[k] * ref.cos_q[k] + ref.sin_q[k] * ref.sin_q[k];
  return std::sqrt(0.5 * acc / static_cast<double>(ref.cos_q.size()));
}

// ---------------------------------------------------------------------------
// Conditioning

struct ConditionedEnsemble {
  double C = 0.0;
  double window = 0.0;
  std::vector<double> Xr, Yr; // accepted samples after thinning
  std::size_t candidates = 0; // aligned samples examined
  std::size_t in_window = 0;  // before thinning
  std::size_t stride = 1;     // thinning stride, samples

  [[nodiscard]] double two_C() const { return 2.0 * C; }
  [[nodiscard]] std::size_t accepted() const { return Xr.size(); }
  [[nodiscard]] double acceptance_fraction() const {
    return candidates ? static_cast<double>(in_window) / static_cast<double>(candidates) : 0.0;
  }
};

class EmptyEnsemble : public std::runtime_error {
 public:
  EmptyEnsemble(const std::string& what, double quantile, double nearest)
      : std::runtime_error(what), quantile_(quantile), nearest_(nearest) {}
  [[nodiscard]] double quantile() const { return quantile_; }
  [[nodiscard]] double nearest() const { return nearest_; }

 private:
  double quantile_, nearest_;
};

/// Samples per filter correlation time (~1/B).
inline std::size_t correlation_stride(double rate, double bandwidth) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(rate / bandwidth)));
}

/// Accepts samples with |Pmag - C| < w/2, keeping at most one per `stride`
/// samples of the underlying record (0 -> one per 1/B).
inline ConditionedEnsemble condition(const AlignedRecord& a, double C, double w, std::size_t stride = 0) {
  if (!(C > 0.0)) throw std::invalid_argument("condition: C must be > 0");
  if (!(w > 0.0)) throw std::invalid_argument("condition: window must be > 0");
  ConditionedEnsemble e;
  e.C = C;
  e.window = w;
  e.candidates = a.size();
  e.stride = stride ? stride : (a.bandwidth > 0 ? correlation_stride(a.rate, a.bandwidth) : 1);
  bool have_last = false;
  std::size_t last = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!(std::abs(a.Pmag[k] - C) < 0.5 * w)) continue;
    ++e.in_window;
    const std::size_t idx = a.source_index[k];
    if (have_last && idx - last < e.stride) continue;
    have_last = true;
    last = idx;
    e.Xr.push_back(a.Xr[k]);
    e.Yr.push_back(a.Yr[k]);
  }
  if (e.Xr.empty()) {
    std::vector<double> sorted = a.Pmag;
    std::sort(sorted.begin(), sorted.end());
    double q = 0.0, nearest = std::numeric_limits<double>::quiet_NaN();
    if (!sorted.empty()) {
      const auto it = std::lower_bound(sorted.begin(), sorted.end(), C);
      q = static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
      nearest = it == sorted.end() ? sorted.back() : *it;
      if (it != sorted.begin() && (it == sorted.end() || C - *(it - 1) < *it - C)) nearest = *(it - 1);
    }
    std::ostringstream os;
    os << "no accepted samples for C = " << C << " (window " << w << "): C sits at Pmag quantile " << q
       << ", nearest Pmag " << nearest;
    throw EmptyEnsemble(os.str(), q, nearest);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Peak statistics

struct StateStats {
  double peak_1 = 0.0, peak_2 = 0.0; // -mu, +mu
  double separation = 0.0;           // 2 mu
  double separation_error = 0.0;
  double width = 0.0;                // common s
  bool bimodal = false;
  double expected_separation = 0.0;  // 2 sqrt(2C)
  std::size_t samples = 0;
  int iterations = 0;
  std::vector<double> kde_peaks;     // cross-check, ascending
};

inline constexpr std::size_t kMinStateSamples = 200;

/// Local maxima of a Gaussian kernel density estimate (Silverman bandwidth).
inline std::vector<double> kde_peaks(std::span<const double> x, std::size_t grid = 512) {
  if (x.size() < 2) return {};
  const double sd = std::sqrt(variance(x));
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = sorted[3 * sorted.size() / 4] - sorted[sorted.size() / 4];
  const double spread = std::min(sd, iqr > 0 ? iqr / 1.34 : sd);
  const double h = 0.9 * spread * std::pow(static_cast<double>(x.size()), -0.2);
  if (!(h > 0)) return {};
  std::vector<double> dens(grid), at(grid);
  for (std::size_t i = 0; i < grid; ++i) {
    at[i] = *lo + (*hi - *lo) * static_cast<double>(i) / static_cast<double>(grid - 1);
    double acc = 0.0;
    for (double v : x) acc += std::exp(-0.5 * (at[i] - v) * (at[i] - v) / (h * h));
    dens[i] = acc;
  }
  const double top = *std::max_element(dens.begin(), dens.end());
  std::vector<double> peaks;
  for (std::size_t i = 1; i + 1 < grid; ++i)
    if (dens[i] > dens[i - 1] && dens[i] >= dens[i + 1] && dens[i] > 0.1 * top) peaks.push_back(at[i]);
  return peaks;
}

/// Symmetric two-Gaussian mixture (means +/- mu, common width s, equal
/// weights) fitted to Xr by expectation-maximisation.
inline StateStats state_stats(const ConditionedEnsemble& e, int max_iterations = 10000) {
  const std::size_t n = e.Xr.size();
  if (n < kMinStateSamples)
    throw std::invalid_argument("state_stats: " + std::to_string(n) + " accepted samples, need at least " +
                                std::to_string(kMinStateSamples));
  double m2 = 0.0, mabs = 0.0;
  for (double v : e.Xr) {
    m2 += v * v;
    mabs += std::abs(v);
  }
  m2 /= static_cast<double>(n);
  mabs /= static_cast<double>(n);
  double mu = mabs, s2 = std::max(m2 - mu * mu, 1e-6 * m2);
  int it = 0;
  bool converged = false;
  for (; it < max_iterations; ++it) {
    double acc = 0.0;
    for (double v : e.Xr) acc += std::tanh(mu * v / s2) * v; // (2 r - 1) x
    const double mu_new = acc / static_cast<double>(n);
    const double s2_new = std::max(m2 - mu_new * mu_new, 1e-12 * m2);
    const bool done = std::abs(mu_new - mu) <= 1e-12 * std::max(1.0, std::abs(mu)) &&
                      std::abs(s2_new - s2) <= 1e-12 * std::max(1.0, s2);
    mu = mu_new;
    s2 = s2_new;
    if (done) {
      converged = true;
      break;
    }
  }
  if (!converged || !std::isfinite(mu)) throw std::runtime_error("state_stats: mixture fit did not converge");
  mu = std::abs(mu);
  StateStats st;
  st.peak_1 = -mu;
  st.peak_2 = mu;
  st.separation = 2.0 * mu;
  st.width = std::sqrt(s2);
  st.separation_error = 2.0 * st.width / std::sqrt(static_cast<double>(n));
  st.bimodal = mu > st.width;
  st.expected_separation = 2.0 * std::sqrt(2.0 * e.C);
  st.samples = n;
  st.iterations = it;
  st.kde_peaks = kde_peaks(e.Xr);
  return st;
}

// ---------------------------------------------------------------------------
// Export

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
};

inline Histogram histogram(std::span<const double> x, double lo, double hi, std::size_t bins) {
  if (!(hi > lo) || bins == 0) throw std::invalid_argument("histogram: bad range");
  Histogram h;
  h.counts.assign(bins, 0);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / bins);
  for (double v : x) {
    if (v < lo || v >= hi) continue;
    ++h.counts[std::min(bins - 1, static_cast<std::size_t>((v - lo) / (hi - lo) * bins))];
  }
  return h;
}

inline void write_histogram_csv(const std::string& path, const Histogram& h, const std::string& header = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  const std::size_t peak = h.counts.empty() ? 0 : *std::max_element(h.counts.begin(), h.counts.end());
  out << std::setprecision(10) << header << "bin_lo,bin_hi,count,normalized\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    out << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i] << ','
        << (peak ? static_cast<double>(h.counts[i]) / static_cast<double>(peak) : 0.0) << '\n';
}

inline void write_ensemble_csv(const std::string& path, const ConditionedEnsemble& e, const std::string& header = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << std::setprecision(10) << header << "# two_C=" << e.two_C() << "\n# window=" << e.window
      << "\n# acceptance_fraction=" << e.acceptance_fraction() << "\n# stride=" << e.stride
      << "\nXr_sigma,Yr_sigma\n";
  for (std::size_t k = 0; k < e.Xr.size(); ++k) out << e.Xr[k] << ',' << e.Yr[k] << '\n';
}

} // namespace optomech
