#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "optomech/conditioning.hpp"
#include "optomech/rng.hpp"

using namespace optomech;

namespace {

DemodRecord record_from(const std::vector<double>& X, const std::vector<double>& Y, double rate = 1000.0,
                        double bandwidth = 100.0) {
  DemodRecord r;
  r.rate = rate;
  r.bandwidth = bandwidth;
  r.Xl = X;
  r.Yl = Y;
  for (std::size_t k = 0; k < X.size(); ++k) {
    r.P2.push_back(0.5 * (X[k] * X[k] - Y[k] * Y[k]));
    r.Q2.push_back(X[k] * Y[k]);
  }
  return r;
}

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  NormalSource g(make_engine(seed, 0, Stream::Synthetic));
  std::vector<double> v(n);
  for (auto& x : v) x = g();
  return v;
}

} // namespace

TEST(Align, IdentityRotation) {
  DemodRecord r;
  r.Xl = {0.3};
  r.Yl = {-0.4};
  r.P2 = {2.0};
  r.Q2 = {0.0};
  const auto a = align(r);
  EXPECT_DOUBLE_EQ(a.phi[0], 0.0);
  EXPECT_DOUBLE_EQ(a.Xr[0], 0.3);
  EXPECT_DOUBLE_EQ(a.Yr[0], -0.4);
  EXPECT_DOUBLE_EQ(a.Pmag[0], 2.0);
}

TEST(Align, QuarterTurn) {
  DemodRecord r;
  r.Xl = {1.0};
  r.Yl = {0.0};
  r.P2 = {0.0};
  r.Q2 = {1.0};
  const auto a = align(r);
  EXPECT_NEAR(a.phi[0], std::numbers::pi / 4, 1e-15);
}

TEST(Align, ZeroVectorExcluded) {
  DemodRecord r;
  r.Xl = {1.0, 1.0};
  r.Yl = {0.0, 0.0};
  r.P2 = {0.0, 1.0};
  r.Q2 = {0.0, 0.0};
  const auto a = align(r);
  EXPECT_EQ(a.size(), 1u);
  EXPECT_EQ(a.excluded, 1u);
  EXPECT_EQ(a.source_index[0], 1u);
}

TEST(Align, NoiselessPolarIdentityAndInvariants) {
  const auto X = gaussian(20000, 1), Y = gaussian(20000, 2);
  const auto a = align(record_from(X, Y));
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double r2 = X[k] * X[k] + Y[k] * Y[k];
    EXPECT_NEAR(a.Xr[k] * a.Xr[k] + a.Yr[k] * a.Yr[k], r2, 1e-12 * (1 + r2));
    EXPECT_NEAR(2.0 * a.Pmag[k], a.Xr[k] * a.Xr[k], 1e-12 * (1 + r2));
    EXPECT_NEAR(a.Yr[k], 0.0, 1e-7 * (1 + std::sqrt(r2)));
    const double P = 0.5 * (X[k] * X[k] - Y[k] * Y[k]), Q = X[k] * Y[k];
    EXPECT_LE(std::abs(Q * std::cos(2 * a.phi[k]) - P * std::sin(2 * a.phi[k])), 1e-12 * a.Pmag[k] + 1e-300);
    EXPECT_GE(a.Pmag[k], 0.0);
  }
}

TEST(Align, RejectsMisalignedSeries) {
  DemodRecord r;
  r.Xl = {1.0, 2.0};
  r.Yl = {1.0};
  r.P2 = {1.0, 1.0};
  r.Q2 = {1.0, 1.0};
  EXPECT_THROW(align(r), std::invalid_argument);
}

TEST(Condition, EmptyEnsembleReportsQuantile) {
  const auto a = align(record_from(gaussian(1000, 3), gaussian(1000, 4)));
  try {
    condition(a, 1e6, 0.01);
    FAIL();
  } catch (const EmptyEnsemble& e) {
    EXPECT_DOUBLE_EQ(e.quantile(), 1.0);
    EXPECT_GT(e.nearest(), 0.0);
    EXPECT_NE(std::string(e.what()).find("quantile"), std::string::npos);
  }
  EXPECT_THROW(condition(a, -1.0, 0.1), std::invalid_argument);
  EXPECT_THROW(condition(a, 1.0, 0.0), std::invalid_argument);
}

TEST(Condition, InfiniteWindowKeepsEverything) {
  const auto a = align(record_from(gaussian(5000, 5), gaussian(5000, 6)));
  const auto e = condition(a, 1.0, 1e300, 1);
  EXPECT_EQ(e.accepted(), a.size());
  EXPECT_DOUBLE_EQ(e.acceptance_fraction(), 1.0);
}

TEST(Condition, WindowInvariantAndThinning) {
  const auto a = align(record_from(gaussian(50000, 7), gaussian(50000, 8)));
  const double C = 0.5, w = 0.05;
  const auto e = condition(a, C, w, 1);
  std::size_t expected = 0;
  for (double p : a.Pmag) expected += std::abs(p - C) < 0.5 * w;
  EXPECT_EQ(e.in_window, expected);
  EXPECT_EQ(e.accepted(), expected);
  for (double x : e.Xr) EXPECT_LT(std::abs(0.5 * x * x - C), 0.5 * w + 1e-12);
  const auto thin = condition(a, C, w, 10);
  EXPECT_LT(thin.accepted(), e.accepted());
  EXPECT_EQ(thin.in_window, e.in_window);
  EXPECT_EQ(correlation_stride(1000.0, 100.0), 10u);
}

TEST(StateStats, SymmetricMixture) {
  NormalSource g(make_engine(9, 0, Stream::Synthetic));
  ConditionedEnsemble e;
  e.C = 0.5;
  e.window = 0.01;
  for (int i = 0; i < 4000; ++i) {
    const double sign = i % 2 ? 1.0 : -1.0;
    e.Xr.push_back(sign * 1.0 + 0.1 * g());
    e.Yr.push_back(0.0);
  }
  const auto st = state_stats(e);
  EXPECT_NEAR(st.separation, 2.0, 0.02);
  EXPECT_NEAR(st.width, 0.1, 0.01);
  EXPECT_TRUE(st.bimodal);
  EXPECT_DOUBLE_EQ(st.expected_separation, 2.0);
  ASSERT_EQ(st.kde_peaks.size(), 2u);
  EXPECT_NEAR(st.kde_peaks[0], -1.0, 0.05);
  EXPECT_NEAR(st.kde_peaks[1], 1.0, 0.05);
}

TEST(StateStats, PredictedSeparations) {
  ConditionedEnsemble e;
  e.Xr.assign(300, 1.0);
  e.Xr[0] = -1.0;
  for (auto [two_c, sep] : {std::pair{0.2, 0.894}, {1.0, 2.0}, {2.0, 2.83}}) {
    e.C = two_c / 2.0;
    EXPECT_NEAR(state_stats(e).expected_separation, sep, 0.005);
  }
}

TEST(StateStats, NeedsEnoughSamples) {
  ConditionedEnsemble e;
  e.C = 0.5;
  e.Xr.assign(199, 1.0);
  EXPECT_THROW(state_stats(e), std::invalid_argument);
}

TEST(Uncertainty, WhiteReferenceRms) {
  NoiseReference ref;
  ref.rate = 1000.0;
  ref.bandwidth = 100.0;
  ref.center = 5000.0;
  ref.cos_q = gaussian(100000, 10);
  ref.sin_q = gaussian(100000, 11);
  for (auto& v : ref.cos_q) v *= 0.05;
  for (auto& v : ref.sin_q) v *= 0.05;
  EXPECT_NEAR(estimate_quadratic_uncertainty(ref), 0.05, 0.001);
}

TEST(Uncertainty, ContaminatedReferenceRejected) {
  NoiseReference ref;
  ref.rate = 1000.0;
  ref.bandwidth = 100.0;
  ref.center = 5000.0;
  ref.cos_q = gaussian(100000, 12);
  ref.sin_q = gaussian(100000, 13);
  for (std::size_t k = 0; k < ref.cos_q.size(); ++k) ref.cos_q[k] += 0.5 * std::cos(kTwoPi * 30.0 * k / 1000.0);
  EXPECT_THROW(estimate_quadratic_uncertainty(ref), ContaminatedReference);
  EXPECT_NO_THROW(estimate_quadratic_uncertainty(ref, false));
}

TEST(Histogram, CountsAndEdges) {
  std::vector<double> x{-0.9, -0.1, 0.1, 0.2, 0.9, 5.0};
  const auto h = histogram(x, -1.0, 1.0, 4);
  ASSERT_EQ(h.edges.size(), 5u);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{1, 1, 2, 1}));
}
