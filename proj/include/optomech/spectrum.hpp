#pragma once

// Welch power spectral density and band integration.

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <fftw3.h>

#include "params.hpp"

namespace optomech {

enum class Window { Hann, Rectangular };

inline const char* window_name(Window w) { return w == Window::Hann ? "hann" : "rectangular"; }

struct Spectrum {
  double sample_rate = 0.0;
  double df = 0.0;              // bin spacing, Hz
  std::vector<double> psd;      // one-sided, units^2/Hz, bin k at k*df
  double rbw = 0.0;             // equivalent noise bandwidth of the window, Hz
  Window window = Window::Hann;
  std::size_t segment_length = 0;
  double overlap = 0.0;
  std::size_t segments = 0;

  [[nodiscard]] double frequency(std::size_t k) const { return static_cast<double>(k) * df; }
  [[nodiscard]] double max_frequency() const { return psd.empty() ? 0.0 : frequency(psd.size() - 1); }
  [[nodiscard]] std::size_t bin(double f) const {
    const auto k = static_cast<long long>(std::llround(f / df));
    return static_cast<std::size_t>(std::clamp<long long>(k, 0, static_cast<long long>(psd.size()) - 1));
  }
};

namespace detail {

struct FftwPlan {
  std::size_t n;
  double* in;
  fftw_complex* out;
  fftw_plan plan;

  explicit FftwPlan(std::size_t len) : n(len) {
    in = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    if (!in || !out) throw std::bad_alloc();
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~FftwPlan() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
};

inline std::vector<double> make_window(Window w, std::size_t n) {
  std::vector<double> v(n, 1.0);
  if (w == Window::Hann)
    for (std::size_t k = 0; k < n; ++k)
      v[k] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(k) / static_cast<double>(n)); // periodic
  return v;
}

} // namespace detail

/// Accumulates Welch segments over any number of records (e.g. independent
/// blocks). The average is taken in segment order.
class WelchAccumulator {
 public:
  WelchAccumulator(double rate, std::size_t segment_length, double overlap = 0.5, Window window = Window::Hann,
                   bool detrend_mean = false)
      : rate_(rate), seg_(segment_length), overlap_(overlap), window_kind_(window), detrend_(detrend_mean) {
    if (seg_ < 2) throw std::invalid_argument("welch: segment length must be >= 2");
    if (!(overlap >= 0.0 && overlap < 1.0)) throw std::invalid_argument("welch: overlap must be in [0, 1)");
    window_ = detail::make_window(window, seg_);
    for (double w : window_) {
      wsum_ += w;
      wsq_ += w * w;
    }
    plan_ = std::make_unique<detail::FftwPlan>(seg_);
    acc_.assign(seg_ / 2 + 1, 0.0);
    step_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(seg_ * (1.0 - overlap))));
  }

  void add(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("welch: empty input");
    if (x.size() < seg_) throw std::invalid_argument("welch: segment length exceeds record length");
    for (std::size_t start = 0; start + seg_ <= x.size(); start += step_) {
      double mean = 0.0;
      if (detrend_) {
        for (std::size_t k = 0; k < seg_; ++k) mean += x[start + k];
        mean /= static_cast<double>(seg_);
      }
      for (std::size_t k = 0; k < seg_; ++k) plan_->in[k] = (x[start + k] - mean) * window_[k];
      fftw_execute(plan_->plan);
      for (std::size_t k = 0; k < acc_.size(); ++k) {
        const double re = plan_->out[k][0], im = plan_->out[k][1];
        acc_[k] += re * re + im * im;
      }
      ++segments_;
    }
  }

  [[nodiscard]] Spectrum result() const {
    if (segments_ == 0) throw std::invalid_argument("welch: no segments accumulated");
    Spectrum s;
    s.sample_rate = rate_;
    s.df = rate_ / static_cast<double>(seg_);
    s.rbw = rate_ * wsq_ / (wsum_ * wsum_);
    s.window = window_kind_;
    s.segment_length = seg_;
    s.overlap = overlap_;
    s.segments = segments_;
    s.psd.resize(acc_.size());
    const double scale = 1.0 / (rate_ * wsq_ * static_cast<double>(segments_));
    for (std::size_t k = 0; k < acc_.size(); ++k) {
      const bool edge = k == 0 || (seg_ % 2 == 0 && k == acc_.size() - 1);
      s.psd[k] = acc_[k] * scale * (edge ? 1.0 : 2.0);
    }
    return s;
  }

  [[nodiscard]] std::size_t segments() const { return segments_; }

 private:
  double rate_;
  std::size_t seg_;
  double overlap_;
  Window window_kind_;
  bool detrend_;
  std::vector<double> window_;
  double wsum_ = 0.0, wsq_ = 0.0;
  std::unique_ptr<detail::FftwPlan> plan_;
  std::vector<double> acc_;
  std::size_t step_ = 1;
  std::size_t segments_ = 0;
};

inline Spectrum welch_psd(std::span<const double> x, double rate, std::size_t segment_length, double overlap = 0.5,
                          Window window = Window::Hann, bool detrend_mean = false) {
  if (x.empty()) throw std::invalid_argument("welch: empty input");
  WelchAccumulator acc(rate, segment_length, overlap, window, detrend_mean);
  acc.add(x);
  return acc.result();
}

/// Segment length giving the requested equivalent noise bandwidth.
inline std::size_t segment_for_rbw(double rate, double rbw, Window w = Window::Hann) {
  const double enbw_bins = w == Window::Hann ? 1.5 : 1.0;
  return static_cast<std::size_t>(std::llround(enbw_bins * rate / rbw));
}

namespace detail {
inline double psd_at(const Spectrum& s, double f) {
  const double pos = f / s.df;
  const auto k = static_cast<std::size_t>(std::floor(pos));
  if (k + 1 >= s.psd.size()) return s.psd.back();
  const double t = pos - static_cast<double>(k);
  return s.psd[k] * (1.0 - t) + s.psd[k + 1] * t;
}
} // namespace detail

/// Trapezoidal integral of the PSD over [f0 - W/2, f0 + W/2], with linear
/// interpolation at the band edges.
inline double band_power(const Spectrum& s, double f0, double width) {
  const double lo = f0 - 0.5 * width, hi = f0 + 0.5 * width;
  if (!(width > 0.0) || lo < 0.0 || hi > s.max_frequency())
    throw std::invalid_argument("band_power: band lies outside the spectrum grid");
  const auto k_lo = static_cast<std::size_t>(std::ceil(lo / s.df));
  const auto k_hi = static_cast<std::size_t>(std::floor(hi / s.df));
  if (k_lo > k_hi) return 0.5 * (detail::psd_at(s, lo) + detail::psd_at(s, hi)) * (hi - lo);
  double acc = 0.5 * (detail::psd_at(s, lo) + s.psd[k_lo]) * (s.frequency(k_lo) - lo);
  for (std::size_t k = k_lo; k < k_hi; ++k) acc += 0.5 * (s.psd[k] + s.psd[k + 1]) * s.df;
  acc += 0.5 * (s.psd[k_hi] + detail::psd_at(s, hi)) * (hi - s.frequency(k_hi));
  return acc;
}

/// Median PSD over [f_lo, f_hi]; a robust floor estimate.
inline double median_density(const Spectrum& s, double f_lo, double f_hi) {
  const std::size_t a = s.bin(std::max(0.0, f_lo)), b = s.bin(f_hi);
  if (b < a) throw std::invalid_argument("median_density: empty range");
  std::vector<double> v(s.psd.begin() + static_cast<std::ptrdiff_t>(a), s.psd.begin() + static_cast<std::ptrdiff_t>(b) + 1);
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

inline void write_spectrum_csv(const std::string& path, const Spectrum& s, const std::string& header = {},
                               double f_lo = 0.0, double f_hi = -1.0) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << std::setprecision(10) << "# spectrum v1\n# rbw_hz=" << s.rbw << "\n# window=" << window_name(s.window)
      << "\n# segment_length=" << s.segment_length << "\n# overlap=" << s.overlap << "\n# segments=" << s.segments
      << '\n'
      << header << "frequency_hz,psd\n";
  const std::size_t a = s.bin(f_lo), b = f_hi < 0 ? s.psd.size() - 1 : s.bin(f_hi);
  for (std::size_t k = a; k <= b; ++k) out << s.frequency(k) << ',' << s.psd[k] << '\n';
}

} // namespace optomech
