#pragma once

// Estimators on demodulated records: quadrature-square estimates, the
// linear/quadratic calibration regression, angle-sweep fits, moment tests and
// harmonic band powers.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fftw3.h>

#include "isserlis.hpp"
#include "spectrum.hpp"

namespace optomech {

// ---------------------------------------------------------------------------
// Quadrature squares from the 2 w_m channel

struct QuadEstimates {
  std::vector<double> X2, Y2;
};

/// X2 = sqrt(P^2 + Q^2) + P, Y2 = sqrt(P^2 + Q^2) - P.
inline QuadEstimates quad_estimators(std::span<const double> P, std::span<const double> Q) {
  if (P.size() != Q.size()) throw std::invalid_argument("quad_estimators: series not aligned");
  QuadEstimates q;
  q.X2.resize(P.size());
  q.Y2.resize(P.size());
  for (std::size_t k = 0; k < P.size(); ++k) {
    if (!std::isfinite(P[k]) || !std::isfinite(Q[k])) throw std::invalid_argument("quad_estimators: non-finite input");
    const double r = std::hypot(P[k], Q[k]);
    q.X2[k] = r + P[k];
    q.Y2[k] = r - P[k];
  }
  return q;
}

// ---------------------------------------------------------------------------
// Simple statistics

inline double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean: empty series");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance(std::span<const double> x) {
  const double m = mean(x);
  double acc = 0.0;
  for (double v : x) acc += (v - m) * (v - m);
  return acc / static_cast<double>(x.size());
}

/// Integrated autocorrelation time (in samples) with Sokal's self-consistent
/// window M >= c * tau. tau = 1 for white noise.
inline double autocorrelation_time(std::span<const double> x, double c = 5.0) {
  const std::size_t n = x.size();
  if (n < 4) throw std::invalid_argument("autocorrelation_time: series too short");
  std::size_t len = 1;
  while (len < 2 * n) len <<= 1;
  double* buf = static_cast<double*>(fftw_malloc(sizeof(double) * len));
  auto* spec = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (len / 2 + 1)));
  if (!buf || !spec) throw std::bad_alloc();
  fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(len), buf, spec, FFTW_ESTIMATE);
  fftw_plan inv = fftw_plan_dft_c2r_1d(static_cast<int>(len), spec, buf, FFTW_ESTIMATE);
  const double m = mean(x);
  for (std::size_t k = 0; k < len; ++k) buf[k] = k < n ? x[k] - m : 0.0;
  fftw_execute(fwd);
  for (std::size_t k = 0; k < len / 2 + 1; ++k) {
    spec[k][0] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
    spec[k][1] = 0.0;
  }
  fftw_execute(inv);
  const double c0 = buf[0];
  double tau = 1.0;
  if (c0 > 0.0) {
    for (std::size_t lag = 1; lag < n; ++lag) {
      tau += 2.0 * buf[lag] / c0; // biased (1/n) estimator, stable at long lags
      if (static_cast<double>(lag) >= c * tau) break;
    }
  }
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(inv);
  fftw_free(buf);
  fftw_free(spec);
  return std::max(tau, 1.0);
}

inline double effective_sample_size(std::span<const double> x) {
  return static_cast<double>(x.size()) / autocorrelation_time(x);
}

// ---------------------------------------------------------------------------
// Calibration regression

struct QuadraticCalibration {
  double slope = 0.0;   // X2 per unit Xl^2
  double gain = 0.0;    // 1/slope: rescales X2 into squared linear units
  double offset = 0.0;
  double slope_error = 0.0;
  double r_squared = 0.0;
  std::size_t samples = 0;
  bool uncalibratable = false;
  double expected_slope = 1.0;
  [[nodiscard]] double consistency() const { return slope / expected_slope; }
};

inline constexpr double kMinCalibrationR2 = 0.05;

/// Ordinary least squares of X2 on Xl^2. `expected_slope` is the value the
/// calibration constants predict (1 once both channels are normalized).
inline QuadraticCalibration calibrate_quadratic(std::span<const double> Xl, std::span<const double> X2,
                                                double expected_slope = 1.0) {
  if (Xl.size() != X2.size()) throw std::invalid_argument("calibrate_quadratic: series not aligned");
  if (Xl.size() < 100) throw std::invalid_argument("calibrate_quadratic: need at least 100 samples");
  const double sd = std::sqrt(variance(Xl));
  const auto [lo, hi] = std::minmax_element(Xl.begin(), Xl.end());
  if (!(sd > 0.0) || *hi - *lo < 2.0 * sd || *hi - *lo <= 1e-12 * std::max(std::abs(*hi), std::abs(*lo)))
    throw std::invalid_argument("calibrate_quadratic: degenerate spread in the linear channel");
  const std::size_t n = Xl.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += Xl[k] * Xl[k];
    my += X2[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = Xl[k] * Xl[k] - mx, dy = X2[k] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  QuadraticCalibration c;
  c.samples = n;
  c.expected_slope = expected_slope;
  c.slope = sxy / sxx;
  c.offset = my - c.slope * mx;
  c.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 0.0;
  const double resid = std::max(0.0, syy - c.slope * sxy);
  c.slope_error = std::sqrt(resid / std::max<double>(1.0, static_cast<double>(n) - 2.0) / sxx);
  c.uncalibratable = c.r_squared < kMinCalibrationR2 || !(c.slope > 0.0);
  c.gain = c.slope != 0.0 ? 1.0 / c.slope : std::numeric_limits<double>::infinity();
  return c;
}

// ---------------------------------------------------------------------------
// Angle sweep

struct BandFit {
  double amplitude = 0.0;
  double floor = 0.0;
  double r_squared = 0.0;
};

struct AngleSweepFit {
  BandFit linear;    // A sin^2(theta) + c, w_m band
  BandFit quadratic; // A' cos^2(theta) + c', 2 w_m band
  double suppression = 0.0; // c / A for the linear band
  [[nodiscard]] double suppression_db() const { return 10.0 * std::log10(suppression); }
};

namespace detail {
inline BandFit fit_shape(std::span<const double> shape, std::span<const double> y) {
  const auto n = static_cast<Eigen::Index>(y.size());
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    A(i, 0) = shape[static_cast<std::size_t>(i)];
    A(i, 1) = 1.0;
    b[i] = y[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector2d p = A.colPivHouseholderQr().solve(b);
  const double ybar = b.mean();
  const double ss_tot = (b.array() - ybar).square().sum();
  const double ss_res = (b - A * p).squaredNorm();
  return {p[0], p[1], ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0};
}
} // namespace detail

inline AngleSweepFit angle_sweep(std::span<const double> theta, std::span<const double> power_1,
                                 std::span<const double> power_2) {
  if (theta.size() != power_1.size() || theta.size() != power_2.size())
    throw std::invalid_argument("angle_sweep: series lengths differ");
  std::vector<double> distinct(theta.begin(), theta.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                 distinct.end());
  if (distinct.size() < 5) throw std::invalid_argument("angle_sweep: need at least 5 distinct angles");
  std::vector<double> s2(theta.size()), c2(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    s2[i] = std::sin(theta[i]) * std::sin(theta[i]);
    c2[i] = std::cos(theta[i]) * std::cos(theta[i]);
  }
  AngleSweepFit f;
  f.linear = detail::fit_shape(s2, power_1);
  f.quadratic = detail::fit_shape(c2, power_2);
  f.suppression = f.linear.amplitude != 0.0 ? f.linear.floor / f.linear.amplitude : 0.0;
  return f;
}

// ---------------------------------------------------------------------------
// Moment tests

struct MomentTest {
  std::string name;
  double value = 0.0;
  double expected = 0.0;
  double std_error = 0.0;
  double ess = 0.0;
  [[nodiscard]] double z() const { return std_error > 0 ? (value - expected) / std_error : 0.0; }
  [[nodiscard]] bool pass(double n_sigma = 5.0) const { return std::abs(z()) <= n_sigma; }
};

struct DistributionReport {
  std::vector<MomentTest> tests;
  double ess = 0.0; // effective sample size of the linear channel
  bool sufficient = false;
  [[nodiscard]] bool all_pass(double n_sigma = 5.0) const {
    return std::all_of(tests.begin(), tests.end(), [&](const MomentTest& t) { return t.pass(n_sigma); });
  }
  [[nodiscard]] const MomentTest& test(const std::string& name) const {
    for (const auto& t : tests)
      if (t.name == name) return t;
    throw std::out_of_range("no moment test '" + name + "'");
  }
};

inline constexpr double kMinEffectiveSamples = 1e4;

namespace detail {
/// Mean of `psi` with an autocorrelation-corrected standard error.
inline MomentTest influence_test(std::string name, double value, double expected, std::span<const double> psi) {
  MomentTest t{std::move(name), value, expected, 0.0, 0.0};
  t.ess = effective_sample_size(psi);
  t.std_error = std::sqrt(variance(psi) / t.ess);
  return t;
}
} // namespace detail

/// Gaussian moments of Xl and chi-squared (one degree of freedom) moments of
/// X2. Standard errors use each statistic's influence series and its own
/// effective sample size.
inline DistributionReport distribution_checks(std::span<const double> Xl, std::span<const double> X2, double sigma) {
  if (Xl.size() != X2.size()) throw std::invalid_argument("distribution_checks: series not aligned");
  if (Xl.size() < 16) throw std::invalid_argument("distribution_checks: series too short");
  const std::size_t n = Xl.size();
  DistributionReport r;
  r.ess = effective_sample_size(Xl);
  r.sufficient = r.ess >= kMinEffectiveSamples;

  const double m = mean(Xl);
  std::vector<double> psi(n);
  r.tests.push_back(detail::influence_test("x_mean", m, 0.0, Xl));

  for (std::size_t k = 0; k < n; ++k) psi[k] = (Xl[k] - m) * (Xl[k] - m);
  const double var = mean(psi);
  r.tests.push_back(detail::influence_test("x_variance", var, sigma * sigma, psi));

  double m3 = 0.0, m4 = 0.0;
  for (double v : Xl) {
    const double z = (v - m) / std::sqrt(var);
    m3 += z * z * z;
    m4 += z * z * z * z;
  }
  m3 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double z = (Xl[k] - m) / std::sqrt(var);
    psi[k] = z * z * z * z - 2.0 * m4 * z * z - 4.0 * m3 * z;
  }
  r.tests.push_back(detail::influence_test("x_excess_kurtosis", m4 - 3.0, 0.0, psi));

  const double m2 = mean(X2);
  r.tests.push_back(detail::influence_test("x2_mean", m2, sigma * sigma, X2));
  for (std::size_t k = 0; k < n; ++k) psi[k] = (X2[k] - m2) * (X2[k] - m2);
  r.tests.push_back(detail::influence_test("x2_variance", mean(psi), 2.0 * std::pow(sigma, 4), psi));
  return r;
}

inline std::string summary(const DistributionReport& r) {
  std::ostringstream os;
  os << std::setprecision(5) << "effective samples " << r.ess << (r.sufficient ? "" : " (INSUFFICIENT, < 1e4)")
     << '\n';
  for (const auto& t : r.tests)
    os << "  " << std::left << std::setw(18) << t.name << " value " << t.value << "  expected " << t.expected
       << "  se " << t.std_error << "  z " << t.z() << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Harmonic band powers from spectra

/// Half-width of the integration band around n f_m.
inline double harmonic_half_width(double f_m, int n) { return n * f_m / 16.0; }

/// Power in the n-th harmonic band with the local floor (mean of the flanking
/// bins between h and 2h from the line) subtracted. The mean rather than the
/// median: a median of few-segment Welch bins sits below the white level.
inline double harmonic_band_power(const Spectrum& s, double f_m, int n) {
  const double h = harmonic_half_width(f_m, n), f0 = n * f_m;
  const double total = band_power(s, f0, 2.0 * h);
  double flank = 0.0;
  std::size_t count = 0;
  for (std::size_t k = s.bin(f0 - 2.0 * h); k <= s.bin(f0 + 2.0 * h); ++k) {
    const double d = std::abs(s.frequency(k) - f0);
    if (d >= h && d <= 2.0 * h) {
      flank += s.psd[k];
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("harmonic_band_power: no flank bins");
  return total - flank / static_cast<double>(count) * 2.0 * h;
}

struct MeasuredHarmonics {
  std::vector<double> power, power_error;       // index n, 1..order
  std::vector<double> relative, relative_error; // normalized to the strongest harmonic
};

/// Combines per-block spectra; standard errors by delete-one-block jackknife.
inline MeasuredHarmonics measure_harmonics(const std::vector<Spectrum>& blocks, double f_m, int order) {
  if (blocks.size() < 3) throw std::invalid_argument("measure_harmonics: need at least 3 blocks");
  const std::size_t nb = blocks.size();
  std::vector<std::vector<double>> per(nb, std::vector<double>(order + 1, 0.0));
  std::vector<double> total(order + 1, 0.0);
  for (std::size_t b = 0; b < nb; ++b)
    for (int n = 1; n <= order; ++n) {
      per[b][n] = harmonic_band_power(blocks[b], f_m, n);
      total[n] += per[b][n];
    }
  auto estimate = [&](const std::vector<double>& sum, double count, std::vector<double>& pw,
                      std::vector<double>& rel) {
    pw.assign(order + 1, 0.0);
    rel.assign(order + 1, 0.0);
    double peak = 0.0;
    for (int n = 1; n <= order; ++n) {
      pw[n] = sum[n] / count;
      peak = std::max(peak, pw[n]);
    }
    for (int n = 1; n <= order; ++n) rel[n] = peak > 0 ? pw[n] / peak : 0.0;
  };
  MeasuredHarmonics out;
  estimate(total, static_cast<double>(nb), out.power, out.relative);
  const double B = static_cast<double>(nb);
  std::vector<std::vector<double>> jp(nb), jr(nb);
  std::vector<double> mp(order + 1, 0.0), mr(order + 1, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    std::vector<double> loo(order + 1);
    for (int n = 1; n <= order; ++n) loo[n] = total[n] - per[b][n];
    estimate(loo, B - 1.0, jp[b], jr[b]);
    for (int n = 1; n <= order; ++n) {
      mp[n] += jp[b][n] / B;
      mr[n] += jr[b][n] / B;
    }
  }
  out.power_error.assign(order + 1, 0.0);
  out.relative_error.assign(order + 1, 0.0);
  for (int n = 1; n <= order; ++n) {
    double vp = 0.0, vr = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      vp += (jp[b][n] - mp[n]) * (jp[b][n] - mp[n]);
      vr += (jr[b][n] - mr[n]) * (jr[b][n] - mr[n]);
    }
    out.power_error[n] = std::sqrt((B - 1.0) / B * vp);
    out.relative_error[n] = std::sqrt((B - 1.0) / B * vr);
  }
  return out;
}

inline void fill_measured(HarmonicTable& t, const MeasuredHarmonics& m) {
  for (auto& row : t.rows) {
    row.measured = m.relative.at(static_cast<std::size_t>(row.n));
    row.uncertainty = m.relative_error.at(static_cast<std::size_t>(row.n));
  }
}

inline void write_harmonic_table_csv(const std::string& path, const HarmonicTable& t, const std::string& header = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << std::setprecision(10) << "# harmonic table v1\n# lambda_eff=" << t.lambda_eff << "\n# order=" << t.order
      << "\n# theta_rad=" << t.theta << "\n# normalization=strongest harmonic\n"
      << header << "n,predicted_relative,measured_relative,uncertainty,predicted_absolute\n";
  for (const auto& r : t.rows)
    out << r.n << ',' << r.predicted << ',' << r.measured << ',' << r.uncertainty << ',' << r.absolute << '\n';
}

inline std::string summary(const HarmonicTable& t) {
  std::ostringstream os;
  os << std::setprecision(5) << "harmonics at theta = " << t.theta << " rad, lambda_eff = " << t.lambda_eff << '\n';
  for (const auto& r : t.rows)
    os << "  n=" << r.n << "  predicted " << std::setw(12) << r.predicted << "  measured " << std::setw(12)
       << r.measured << " +/- " << r.uncertainty << '\n';
  return os.str();
}

} // namespace optomech
