#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "optomech/analysis.hpp"
#include "optomech/rng.hpp"

using namespace optomech;

namespace {

std::vector<double> gaussian(std::size_t n, double sd, std::uint64_t seed) {
  NormalSource g(make_engine(seed, 0, Stream::Synthetic));
  std::vector<double> v(n);
  for (auto& x : v) x = sd * g();
  return v;
}

std::vector<double> ar1(std::size_t n, double rho, std::uint64_t seed) {
  NormalSource g(make_engine(seed, 0, Stream::Synthetic));
  std::vector<double> v(n);
  double x = g();
  for (auto& y : v) {
    y = x;
    x = rho * x + std::sqrt(1 - rho * rho) * g();
  }
  return v;
}

} // namespace

TEST(QuadEstimators, FormulaCases) {
  std::vector<double> P{2.0, 0.0}, Q{0.0, 3.0};
  const auto q = quad_estimators(P, Q);
  EXPECT_DOUBLE_EQ(q.X2[0], 4.0);
  EXPECT_DOUBLE_EQ(q.Y2[0], 0.0);
  EXPECT_DOUBLE_EQ(q.X2[1], 3.0);
  EXPECT_DOUBLE_EQ(q.Y2[1], 3.0);
}

TEST(QuadEstimators, NoiselessIdentityAndSum) {
  const auto X = gaussian(10000, 1.0, 1), Y = gaussian(10000, 1.0, 2);
  std::vector<double> P(X.size()), Q(X.size());
  for (std::size_t k = 0; k < X.size(); ++k) {
    P[k] = 0.5 * (X[k] * X[k] - Y[k] * Y[k]);
    Q[k] = X[k] * Y[k];
  }
  const auto q = quad_estimators(P, Q);
  for (std::size_t k = 0; k < X.size(); ++k) {
    EXPECT_NEAR(q.X2[k], X[k] * X[k], 1e-12 * (1 + X[k] * X[k] + Y[k] * Y[k]));
    EXPECT_NEAR(q.Y2[k], Y[k] * Y[k], 1e-12 * (1 + X[k] * X[k] + Y[k] * Y[k]));
    EXPECT_NEAR(q.X2[k] + q.Y2[k], 2.0 * std::hypot(P[k], Q[k]), 1e-15 * (1 + std::hypot(P[k], Q[k])));
    EXPECT_GE(q.X2[k], 0.0);
    EXPECT_GE(q.Y2[k], 0.0);
  }
}

TEST(QuadEstimators, Errors) {
  std::vector<double> P{1.0}, Q{1.0, 2.0};
  EXPECT_THROW(quad_estimators(P, Q), std::invalid_argument);
  std::vector<double> bad{std::nan("")};
  std::vector<double> one{1.0};
  EXPECT_THROW(quad_estimators(bad, one), std::invalid_argument);
}

TEST(Autocorrelation, WhiteAndAr1) {
  EXPECT_NEAR(autocorrelation_time(gaussian(1 << 16, 1.0, 3)), 1.0, 0.1);
  const double rho = 0.9; // tau = (1 + rho) / (1 - rho) = 19
  EXPECT_NEAR(autocorrelation_time(ar1(1 << 18, rho, 4)) / 19.0, 1.0, 0.1);
}

TEST(Calibration, ExactQuadratic) {
  const auto x = gaussian(1000, 1.0, 5);
  std::vector<double> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = 2.5 * x[k] * x[k];
  const auto c = calibrate_quadratic(x, y);
  EXPECT_NEAR(c.slope, 2.5, 1e-12);
  EXPECT_NEAR(c.gain, 0.4, 1e-12);
  EXPECT_NEAR(c.offset, 0.0, 1e-12);
  EXPECT_NEAR(c.r_squared, 1.0, 1e-12);
  EXPECT_FALSE(c.uncalibratable);
}

TEST(Calibration, IndependentNoiseIsUncalibratable) {
  const auto x = gaussian(5000, 1.0, 6), y = gaussian(5000, 1.0, 7);
  const auto c = calibrate_quadratic(x, y);
  EXPECT_LT(c.r_squared, 0.01);
  EXPECT_TRUE(c.uncalibratable);
}

TEST(Calibration, Errors) {
  std::vector<double> x(50, 1.0), y(50, 1.0);
  EXPECT_THROW(calibrate_quadratic(x, y), std::invalid_argument); // too few
  x.assign(200, 1.0);
  y.assign(200, 1.0);
  EXPECT_THROW(calibrate_quadratic(x, y), std::invalid_argument); // degenerate
  y.resize(10);
  EXPECT_THROW(calibrate_quadratic(x, y), std::invalid_argument);
}

TEST(Calibration, RobustToSmallLinearNoise) {
  const auto X = gaussian(200000, 1.0, 8), noise = gaussian(200000, 0.01, 9);
  std::vector<double> Xl(X.size()), X2(X.size());
  for (std::size_t k = 0; k < X.size(); ++k) {
    Xl[k] = X[k] + noise[k];
    X2[k] = X[k] * X[k];
  }
  const auto clean = calibrate_quadratic(X, X2), noisy = calibrate_quadratic(Xl, X2);
  EXPECT_LT(std::abs(noisy.slope / clean.slope - 1.0), 0.03);
}

TEST(AngleSweep, ExactShapes) {
  std::vector<double> th, p1, p2;
  for (int i = 0; i < 13; ++i) {
    const double t = std::numbers::pi * i / 12;
    th.push_back(t);
    p1.push_back(3.0 * std::sin(t) * std::sin(t) + 0.01);
    p2.push_back(0.5 * std::cos(t) * std::cos(t));
  }
  const auto f = angle_sweep(th, p1, p2);
  EXPECT_NEAR(f.linear.r_squared, 1.0, 1e-12);
  EXPECT_NEAR(f.quadratic.r_squared, 1.0, 1e-12);
  EXPECT_NEAR(f.linear.amplitude, 3.0, 1e-12);
  EXPECT_NEAR(f.linear.floor, 0.01, 1e-12);
  EXPECT_NEAR(f.quadratic.amplitude, 0.5, 1e-12);
  EXPECT_NEAR(f.suppression_db(), 10 * std::log10(0.01 / 3.0), 1e-9);
}

TEST(AngleSweep, NeedsFiveAngles) {
  std::vector<double> th{0, 0.1, 0.2, 0.3, 0.3}, p(5, 1.0);
  EXPECT_THROW(angle_sweep(th, p, p), std::invalid_argument);
}

TEST(Distribution, GaussianPasses) {
  const auto x = ar1(400000, 0.5, 10);
  std::vector<double> x2(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) x2[k] = x[k] * x[k];
  const auto r = distribution_checks(x, x2, 1.0);
  EXPECT_TRUE(r.sufficient);
  EXPECT_TRUE(r.all_pass()) << summary(r);
  EXPECT_NEAR(r.ess, 400000.0 / 3.0, 0.1 * 400000.0 / 3.0);
}

TEST(Distribution, UniformFailsKurtosis) {
  Engine e = make_engine(11, {0});
  std::uniform_real_distribution<double> u(-std::sqrt(3.0), std::sqrt(3.0));
  std::vector<double> x(100000), x2(100000);
  for (std::size_t k = 0; k < x.size(); ++k) {
    x[k] = u(e);
    x2[k] = x[k] * x[k];
  }
  const auto r = distribution_checks(x, x2, 1.0);
  const auto& kurt = r.test("x_excess_kurtosis");
  EXPECT_LT(kurt.value, -1.0);
  EXPECT_FALSE(kurt.pass());
  EXPECT_TRUE(r.test("x_variance").pass());
}

TEST(Distribution, FlagsShortRecords) {
  const auto x = ar1(20000, 0.99, 12);
  std::vector<double> x2(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) x2[k] = x[k] * x[k];
  EXPECT_FALSE(distribution_checks(x, x2, 1.0).sufficient);
}

TEST(Harmonics, BandPowerSubtractsFloor) {
  Spectrum s;
  s.df = 1.0;
  s.psd.assign(10001, 2.0);
  for (int k = 995; k <= 1005; ++k) s.psd[static_cast<std::size_t>(k)] += 10.0;
  // line: 11 bins x 10 = ~110 minus trapezoid edges
  EXPECT_NEAR(harmonic_band_power(s, 1000.0, 1), 110.0, 1e-9);
}

TEST(Harmonics, JackknifeOverBlocks) {
  std::vector<Spectrum> blocks;
  for (int b = 0; b < 5; ++b) {
    Spectrum s;
    s.df = 1.0;
    s.psd.assign(10001, 0.0);
    s.psd[1000] = 4.0 + b; // n = 1
    s.psd[2000] = 1.0;     // n = 2
    blocks.push_back(s);
  }
  const auto m = measure_harmonics(blocks, 1000.0, 2);
  EXPECT_NEAR(m.power[1], 6.0, 1e-12);
  EXPECT_NEAR(m.relative[2], 1.0 / 6.0, 1e-12);
  EXPECT_GT(m.relative_error[2], 0.0);
  EXPECT_NEAR(m.power_error[1], std::sqrt(2.5 / 5.0), 1e-12); // sd / sqrt(n) for a mean
}
