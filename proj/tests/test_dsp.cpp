#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "optomech/analysis.hpp"
#include "optomech/lockin.hpp"
#include "optomech/lorentzian.hpp"
#include "optomech/pipeline.hpp"
#include "optomech/spectrum.hpp"

using namespace optomech;

namespace {

std::vector<double> white(std::size_t n, double sd, std::uint64_t seed) {
  NormalSource g(make_engine(seed, 0, Stream::Synthetic));
  std::vector<double> v(n);
  for (auto& x : v) x = sd * g();
  return v;
}

std::vector<double> tone(std::size_t n, double rate, double f, double a, double c = 0.0) {
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate;
    v[k] = a * std::cos(kTwoPi * f * t) + c * std::sin(kTwoPi * f * t);
  }
  return v;
}

} // namespace

// ---------------------------------------------------------------------------
// Filter

TEST(Filter, UnitDcGainAndOddSymmetric) {
  const auto f = design_lowpass(100.0, 50000.0);
  double sum = 0.0;
  for (double h : f.taps) sum += h;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(f.length() % 2, 1u);
  for (std::size_t k = 0; k < f.length(); ++k) EXPECT_DOUBLE_EQ(f.taps[k], f.taps[f.length() - 1 - k]);
  EXPECT_EQ(f.group_delay(), (f.length() - 1) / 2);
}

TEST(Filter, MeetsResponseSpec) {
  const auto f = design_lowpass(100.0, 50000.0);
  for (double fr = 0.0; fr <= 100.0; fr += 5.0) EXPECT_LT(std::abs(20 * std::log10(f.response(fr))), 0.1);
  EXPECT_LT(20 * std::log10(std::abs(f.response(300.0))), -60.0);
  for (double fr = 200.0; fr < 25000.0; fr += 97.0) EXPECT_LT(20 * std::log10(std::abs(f.response(fr))), -79.0);
}

TEST(Filter, ToneAtThreeBIsAttenuated) {
  const double rate = 5000.0, B = 50.0;
  const auto f = design_lowpass(B, rate);
  const auto x = tone(40000, rate, 3 * B, 1.0);
  double peak = 0.0;
  for (std::size_t c = f.group_delay(); c + f.group_delay() < x.size(); c += 7)
    peak = std::max(peak, std::abs(detail::fir_at(f.taps, x.data(), c)));
  EXPECT_LT(20 * std::log10(peak), -60.0);
}

TEST(Filter, RejectsUnmeetableSpec) {
  EXPECT_THROW(design_lowpass(20000.0, 50000.0), std::invalid_argument); // stopband above Nyquist
  LowpassSpec spec;
  spec.max_taps = 101;
  try {
    design_lowpass(1.0, 50000.0, spec);
    FAIL() << "expected a max_taps error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("max_taps"), std::string::npos);
  }
  spec = {};
  spec.attenuation_db = 40.0;
  EXPECT_THROW(design_lowpass(100.0, 50000.0, spec), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Lock-in

TEST(Lockin, CosineTone) {
  const double rate = 50000.0, f0 = 2000.0;
  const auto f = design_lowpass(100.0, rate);
  const auto x = tone(100000, rate, f0, 0.7, -0.2);
  const auto out = lockin(x, rate, f0, f, 50);
  ASSERT_GT(out.size(), 100u);
  for (std::size_t k = 0; k < out.size(); ++k) {
    EXPECT_NEAR(out.cos_q[k], 0.7, 1e-4);
    EXPECT_NEAR(out.sin_q[k], -0.2, 1e-4);
  }
  EXPECT_EQ(out.first_input % 50, 0u);
  EXPECT_GE(out.first_input, f.group_delay());
  EXPECT_DOUBLE_EQ(out.rate, 1000.0);
}

TEST(Lockin, OffsetToneRotates) {
  const double rate = 50000.0, f0 = 2000.0, delta = 10.0, A = 0.5;
  const auto f = design_lowpass(100.0, rate);
  const auto x = tone(200000, rate, f0 + delta, A);
  const auto out = lockin(x, rate, f0, f, 50);
  for (std::size_t k = 0; k < out.size(); k += 37) {
    EXPECT_NEAR(std::hypot(out.cos_q[k], out.sin_q[k]), A, 1e-3 * A);
    const double t = out.t0 + static_cast<double>(k) / out.rate;
    const double expect = std::remainder(kTwoPi * delta * t, kTwoPi);
    EXPECT_NEAR(std::remainder(std::atan2(-out.sin_q[k], out.cos_q[k]) - expect, kTwoPi), 0.0, 1e-3);
  }
}

TEST(Lockin, Linearity) {
  const double rate = 50000.0;
  const auto f = design_lowpass(100.0, rate);
  const auto s1 = white(60000, 1.0, 1), s2 = tone(60000, rate, 2010.0, 0.3);
  std::vector<double> mix(s1.size());
  for (std::size_t k = 0; k < mix.size(); ++k) mix[k] = 2.0 * s1[k] - 3.0 * s2[k];
  const auto a = lockin(s1, rate, 2000.0, f, 50), b = lockin(s2, rate, 2000.0, f, 50), m = lockin(mix, rate, 2000.0, f, 50);
  for (std::size_t k = 0; k < m.size(); ++k) {
    EXPECT_NEAR(m.cos_q[k], 2.0 * a.cos_q[k] - 3.0 * b.cos_q[k], 1e-12);
    EXPECT_NEAR(m.sin_q[k], 2.0 * a.sin_q[k] - 3.0 * b.sin_q[k], 1e-12);
  }
}

TEST(Lockin, CommonStepIsAlignedAcrossDemodulators) {
  // An amplitude step in tones at f0 and 2 f0 crosses half height at the same output index.
  const double rate = 50000.0, f0 = 2000.0;
  const auto f = design_lowpass(100.0, rate);
  const std::size_t n = 100000, step = 51234;
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate;
    const double a = k >= step ? 1.0 : 0.0;
    x[k] = a * (std::cos(kTwoPi * f0 * t) + std::cos(kTwoPi * 2 * f0 * t));
  }
  const auto l1 = lockin(x, rate, f0, f, 50), l2 = lockin(x, rate, 2 * f0, f, 50);
  auto crossing = [](const std::vector<double>& v) {
    for (std::size_t k = 0; k < v.size(); ++k)
      if (v[k] >= 0.5) return k;
    return v.size();
  };
  EXPECT_EQ(l1.first_input, l2.first_input);
  EXPECT_EQ(crossing(l1.cos_q), crossing(l2.cos_q));
  const std::size_t k = crossing(l1.cos_q);
  EXPECT_NEAR(static_cast<double>(l1.first_input + k * 50), static_cast<double>(step), 50.0);
}

TEST(Lockin, RejectsAliasing) {
  const auto f = design_lowpass(100.0, 50000.0);
  const std::vector<double> x(100000, 0.0);
  EXPECT_THROW(lockin(x, 50000.0, 24950.0, f, 10), std::invalid_argument);
  EXPECT_THROW(lockin(x, 50000.0, 2000.0, f, 300), std::invalid_argument);
  EXPECT_THROW(lockin(x, 40000.0, 2000.0, f, 10), std::invalid_argument);
}

TEST(Lockin, ShortRecordGivesNoOutput) {
  const auto f = design_lowpass(100.0, 50000.0);
  const std::vector<double> x(f.length() - 1, 1.0);
  EXPECT_EQ(lockin(x, 50000.0, 2000.0, f, 50).size(), 0u);
}

TEST(Demodulate, RejectsOverlappingBands) {
  HomodyneTrace tr;
  tr.sample_rate = 50000.0;
  tr.samples.assign(100000, 0.0);
  DemodSettings set{2000.0, 1200.0, 0, {}};
  EXPECT_THROW(demodulate(tr, set, Calibration{1.0, 1.0}), std::invalid_argument);
  set.bandwidth = 100.0;
  EXPECT_THROW(demodulate(tr, set, Calibration{0.0, 1.0}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Welch and band power

TEST(Welch, WhiteNoiseLevel) {
  const double rate = 1000.0, sd = 2.0;
  const auto x = white(1 << 20, sd, 2);
  const auto s = welch_psd(x, rate, 1024);
  double mean_psd = 0.0;
  for (std::size_t k = 1; k + 1 < s.psd.size(); ++k) mean_psd += s.psd[k];
  mean_psd /= static_cast<double>(s.psd.size() - 2);
  EXPECT_NEAR(mean_psd / (2 * sd * sd / rate), 1.0, 0.05);
  // Parseval: integral of the PSD = variance.
  EXPECT_NEAR(band_power(s, 250.0, 499.0) / (sd * sd), 1.0, 0.01 + 2.0 / 500.0);
  EXPECT_NEAR(s.rbw, 1.5 * rate / 1024, 1e-9);
}

TEST(Welch, ToneParseval) {
  const double rate = 10000.0, A = 3.0;
  const auto x = tone(1 << 18, rate, 1234.5, A);
  const auto s = welch_psd(x, rate, 8192);
  EXPECT_NEAR(band_power(s, 1234.5, 40.0) / (A * A / 2), 1.0, 0.02);
}

TEST(Welch, DcBlockedInputSuppressesZeroBin) {
  auto x = white(1 << 16, 1.0, 3);
  for (auto& v : x) v += 5.0;
  const auto raw = welch_psd(x, 1000.0, 1024);
  const auto blocked = welch_psd(x, 1000.0, 1024, 0.5, Window::Hann, true);
  EXPECT_LT(blocked.psd[0], 1e-3 * raw.psd[0]);
}

TEST(Welch, Errors) {
  const std::vector<double> empty;
  EXPECT_THROW(welch_psd(empty, 1.0, 4), std::invalid_argument);
  const std::vector<double> x(10, 0.0);
  EXPECT_THROW(welch_psd(x, 1.0, 16), std::invalid_argument);
  EXPECT_THROW(welch_psd(x, 1.0, 4, 1.0), std::invalid_argument);
}

TEST(BandPower, WhiteFloorTimesWidth) {
  Spectrum s;
  s.df = 0.5;
  s.psd.assign(2001, 3.0);
  EXPECT_NEAR(band_power(s, 100.0, 51.0), 153.0, 1e-9);
  EXPECT_NEAR(band_power(s, 100.2, 0.3), 0.9, 1e-9);
  EXPECT_THROW(band_power(s, 999.0, 10.0), std::invalid_argument);
  EXPECT_THROW(band_power(s, 2.0, 10.0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Lorentzian fit

TEST(Lorentzian, SyntheticRecovery) {
  Spectrum s;
  s.df = 0.25;
  s.rbw = 0.375;
  s.psd.resize(4001);
  LorentzianFit truth;
  truth.center = 500.0;
  truth.fwhm = 4.0;
  truth.area = 1.0;
  truth.floor = truth.area / (std::numbers::pi * 2.0) * 1e-6; // 60 dB below the peak density
  NormalSource g(make_engine(8, 0, Stream::Synthetic));
  for (std::size_t k = 0; k < s.psd.size(); ++k) {
    // chi-squared with 2*50 degrees of freedom: 50 averaged segments
    double chi = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double z = g();
      chi += z * z;
    }
    s.psd[k] = truth(s.frequency(k)) * chi / 100.0;
  }
  const auto fit = fit_lorentzian(s, 501.0, 40.0);
  EXPECT_NEAR(fit.center, 500.0, 0.05 * 4.0);
  EXPECT_NEAR(fit.fwhm / 4.0, 1.0, 0.05);
  EXPECT_NEAR(fit.area, 1.0, 0.05);
  EXPECT_GT(fit.fwhm_err(), 0.0);
}

TEST(Lorentzian, FlatSpectrumIsPeakBelowFloor) {
  Spectrum s;
  s.df = 0.25;
  s.rbw = 0.375;
  s.psd.assign(4001, 1.0);
  try {
    fit_lorentzian(s, 500.0, 20.0);
    FAIL();
  } catch (const FitError& e) {
    EXPECT_EQ(e.kind(), FitFailure::PeakBelowFloor);
  }
}

TEST(Lorentzian, UnderResolvedIsRejected) {
  Spectrum s;
  s.df = 0.25;
  s.rbw = 1.0;
  s.psd.resize(4001);
  LorentzianFit truth;
  truth.center = 500.0;
  truth.fwhm = 2.0;
  truth.area = 1.0;
  truth.floor = 1e-6;
  for (std::size_t k = 0; k < s.psd.size(); ++k) s.psd[k] = truth(s.frequency(k));
  try {
    fit_lorentzian(s, 500.0, 20.0);
    FAIL();
  } catch (const FitError& e) {
    EXPECT_EQ(e.kind(), FitFailure::UnderResolved);
  }
}

TEST(Lorentzian, InsufficientData) {
  Spectrum s;
  s.df = 1.0;
  s.psd.assign(100, 1.0);
  try {
    fit_lorentzian(s, 50.0, 2.0);
    FAIL();
  } catch (const FitError& e) {
    EXPECT_EQ(e.kind(), FitFailure::InsufficientData);
  }
}

// ---------------------------------------------------------------------------
// Thermal pipeline checks (desk preset)

TEST(ThermalPipeline, LinewidthAtPhaseQuadrature) {
  auto p = desk_preset();
  const Simulation sim(p);
  const double rate = p.sample_rate;
  WelchAccumulator acc(rate, 200000); // 4 s segments, RBW 0.375 Hz
  for (std::uint64_t b = 0; b < 30; ++b) acc.add(sim.block(std::numbers::pi / 2, 21, b).trace.samples);
  const auto s = acc.result();
  const auto fit = fit_lorentzian(s, 2000.0, 40.0);
  EXPECT_NEAR(fit.fwhm / 4.0, 1.0, 0.15);
  EXPECT_NEAR(fit.center, 2000.0, 0.5);
}

TEST(ThermalPipeline, PowerConservation) {
  auto p = desk_preset();
  const Simulation sim(p);
  const double B = default_bandwidth(p);
  const auto f = design_lowpass(B, p.sample_rate);
  WelchAccumulator acc(p.sample_rate, 50000);
  double sq = 0.0;
  std::size_t count = 0;
  for (std::uint64_t b = 0; b < 20; ++b) {
    const auto tr = sim.block(std::numbers::pi / 2, 22, b).trace;
    acc.add(tr.samples);
    const auto out = lockin(tr.samples, tr.sample_rate, 2000.0, f, 50);
    for (std::size_t k = 0; k < out.size(); ++k) sq += out.cos_q[k] * out.cos_q[k] + out.sin_q[k] * out.sin_q[k];
    count += out.size();
  }
  const double demod_power = 0.5 * sq / static_cast<double>(count);
  EXPECT_NEAR(demod_power / band_power(acc.result(), 2000.0, 2.0 * B), 1.0, 0.05);
}
