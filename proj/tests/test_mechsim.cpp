#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "optomech/analysis.hpp"
#include "optomech/mechsim.hpp"

using namespace optomech;

namespace {
ModeSpec unit_mode() { return {kTwoPi * 2000.0, kTwoPi * 4.0, 1.0}; }
}

TEST(OuAdvance, Recurrence) {
  std::vector<double> normals{1.0, -1.0, 0.5};
  std::vector<double> out(4);
  ou_advance(2.0, 0.5, 0.1, normals, out);
  EXPECT_DOUBLE_EQ(out[1], 1.1);
  EXPECT_DOUBLE_EQ(out[2], 0.45);
  EXPECT_DOUBLE_EQ(out[3], 0.275);
  std::vector<double> wrong(3);
  EXPECT_THROW(ou_advance(0.0, 0.5, 0.1, normals, wrong), std::invalid_argument);
}

TEST(Quadratures, StationaryVariance) {
  const std::vector<ModeSpec> modes{unit_mode()};
  const auto traj = simulate_quadratures(modes, 100.0, 4000.0, 11);
  for (const auto* q : {&traj.X[0], &traj.Y[0]}) {
    const double tau = autocorrelation_time(*q);
    const double se = std::sqrt(2.0 * tau / static_cast<double>(q->size()));
    EXPECT_NEAR(variance(*q), 1.0, 5.0 * se);
    EXPECT_NEAR(mean(*q), 0.0, 5.0 * std::sqrt(tau / static_cast<double>(q->size())));
  }
}

TEST(Quadratures, AutocorrelationDecaysAtHalfGamma) {
  // Corr(X(t), X(t + tau)) = exp(-gamma tau / 2).
  const std::vector<ModeSpec> modes{unit_mode()};
  const auto traj = simulate_quadratures(modes, 100.0, 4000.0, 12);
  const auto& X = traj.X[0];
  const std::size_t lag = 10; // 0.1 s
  double c = 0.0;
  for (std::size_t k = 0; k + lag < X.size(); ++k) c += X[k] * X[k + lag];
  c /= static_cast<double>(X.size() - lag);
  EXPECT_NEAR(c / variance(X), std::exp(-0.5 * modes[0].gamma * 0.1), 0.03);
}

TEST(Quadratures, IndependentQuadratures) {
  const std::vector<ModeSpec> modes{unit_mode()};
  const auto traj = simulate_quadratures(modes, 100.0, 4000.0, 13);
  double c = 0.0;
  for (std::size_t k = 0; k < traj.size(); ++k) c += traj.X[0][k] * traj.Y[0][k];
  c /= static_cast<double>(traj.size());
  const double tau = autocorrelation_time(traj.X[0]);
  EXPECT_NEAR(c, 0.0, 5.0 * std::sqrt(tau / static_cast<double>(traj.size())));
}

TEST(Quadratures, DeterministicPerBlock) {
  const std::vector<ModeSpec> modes{unit_mode()};
  const auto a = simulate_quadratures(modes, 100.0, 10.0, 7, 3);
  const auto b = simulate_quadratures(modes, 100.0, 10.0, 7, 3);
  const auto c = simulate_quadratures(modes, 100.0, 10.0, 7, 4);
  EXPECT_EQ(a.X, b.X);
  EXPECT_EQ(a.Y, b.Y);
  EXPECT_NE(a.X, c.X);
}

TEST(Quadratures, Errors) {
  std::vector<ModeSpec> modes{{kTwoPi * 10.0, 0.0, 1.0}};
  EXPECT_THROW(simulate_quadratures(modes, 100.0, 1.0, 1), std::invalid_argument);
  modes[0] = {kTwoPi * 10.0, 1.0, std::nan("")};
  EXPECT_THROW(simulate_quadratures(modes, 100.0, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(simulate_quadratures({}, 100.0, 1.0, 1), std::invalid_argument);
  modes[0] = unit_mode();
  EXPECT_THROW(simulate_quadratures(modes, 100.0, -1.0, 1), std::invalid_argument);
}

TEST(Quadratures, WarnsOnBroadMode) {
  EXPECT_TRUE(mode_warnings(unit_mode()).empty());
  EXPECT_FALSE(mode_warnings({1.0, 0.5, 1.0}).empty());
}

TEST(Displacement, UpsampledGridPassesThroughTrajectory) {
  const std::vector<ModeSpec> modes{unit_mode()};
  const std::size_t pad = kInterpHalfWidth + 1;
  const auto traj = simulate_quadratures(modes, 100.0, 1.0, 5, 0, pad);
  const auto x = displacement(traj, modes, 50000.0, 50000);
  for (std::size_t j = 0; j < 90; ++j) {
    const std::size_t k = 500 * j; // integer slow-grid points
    const double t = static_cast<double>(k) / 50000.0;
    const double expect = traj.X[0][j + pad] * std::cos(modes[0].omega * t) + traj.Y[0][j + pad] * std::sin(modes[0].omega * t);
    EXPECT_NEAR(x.samples[k], expect, 1e-9);
  }
}

TEST(Displacement, InterpolationMatchesQuadraturesAt) {
  const std::vector<ModeSpec> modes{unit_mode()};
  const auto traj = simulate_quadratures(modes, 100.0, 1.0, 5, 0, kInterpHalfWidth + 1);
  const auto x = displacement(traj, modes, 50000.0, 40000);
  std::vector<std::size_t> idx{0, 1, 777, 12345, 39999};
  const auto [X, Y] = quadratures_at(traj, 0, 50000.0, idx);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double t = static_cast<double>(idx[i]) / 50000.0;
    EXPECT_NEAR(x.samples[idx[i]], X[i] * std::cos(modes[0].omega * t) + Y[i] * std::sin(modes[0].omega * t), 1e-9);
  }
}

TEST(Displacement, RequiresIntegerRatioAndPadding) {
  const std::vector<ModeSpec> modes{unit_mode()};
  const auto unpadded = simulate_quadratures(modes, 100.0, 1.0, 5);
  EXPECT_THROW(displacement(unpadded, modes, 50000.0, 1000), std::invalid_argument);
  const auto padded = simulate_quadratures(modes, 100.0, 1.0, 5, 0, kInterpHalfWidth + 1);
  EXPECT_THROW(displacement(padded, modes, 50050.5, 1000), std::invalid_argument);
  EXPECT_THROW(displacement(padded, modes, 50000.0, 500000), std::invalid_argument);
}

TEST(Displacement, VarianceIsSigmaSquared) {
  // x = X cos + Y sin with independent unit quadratures has unit variance.
  const std::vector<ModeSpec> modes{unit_mode()};
  const auto traj = simulate_quadratures(modes, 100.0, 200.0, 9, 0, kInterpHalfWidth + 1);
  const auto x = displacement(traj, modes, 50000.0, 10'000'000);
  const double tau_s = 2.0 / modes[0].gamma;
  const double se = std::sqrt(2.0 * tau_s / 200.0);
  EXPECT_NEAR(variance(x.samples), 1.0, 5.0 * se);
}
