#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "optomech/analysis.hpp"
#include "optomech/conditioning.hpp"
#include "optomech/pipeline.hpp"

using namespace optomech;

namespace {

constexpr double kQuarter = std::numbers::pi / 4;

struct Oracle {
  std::vector<double> X, Y; // sigma_th units at the demod output times
};

Oracle oracle_for(const BlockData& b, const DemodRecord& r, const Simulation& sim, std::size_t dec) {
  const double fs = sim.params().sample_rate;
  const auto first = static_cast<std::size_t>(std::llround(r.t0 * fs));
  std::vector<std::size_t> idx(r.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = first + k * dec;
  auto [X, Y] = quadratures_at(b.trajectory, 0, fs, idx);
  const double s = sim.derived().sigma_th;
  for (auto& v : X) v /= s;
  for (auto& v : Y) v /= s;
  return {X, Y};
}

double rel_rms(const std::vector<double>& got, const std::vector<double>& want) {
  double e = 0.0, w = 0.0;
  for (std::size_t k = 0; k < got.size(); ++k) {
    e += (got[k] - want[k]) * (got[k] - want[k]);
    w += want[k] * want[k];
  }
  return std::sqrt(e / w);
}

} // namespace

TEST(Pipeline, QuadratureRateIsBandwidth) {
  const Simulation sim(desk_preset());
  EXPECT_DOUBLE_EQ(default_bandwidth(sim.params()), 100.0);
  EXPECT_DOUBLE_EQ(sim.quadrature_rate(), 100.0);
  const Simulation paper(paper_preset());
  EXPECT_NEAR(paper.quadrature_rate(), 17.5, 1e-3);
  EXPECT_EQ(sim.block_samples(), 400000u);
}

TEST(Pipeline, NoiselessOracleEquivalence) {
  Simulation sim(desk_preset());
  sim.set_transduction(TransductionMode::taylor(2));
  const auto b = sim.block(kQuarter, 31, 0, true);
  const auto cal = Calibration::from(kQuarter, sim.derived());
  const DemodSettings set{2000.0, 100.0, 50, {}};
  const auto r = demodulate(b.trace, set, cal);
  ASSERT_GT(r.size(), 7000u);
  const auto o = oracle_for(b, r, sim, 50);
  std::vector<double> P(o.X.size()), Q(o.X.size());
  for (std::size_t k = 0; k < P.size(); ++k) {
    P[k] = 0.5 * (o.X[k] * o.X[k] - o.Y[k] * o.Y[k]);
    Q[k] = o.X[k] * o.Y[k];
  }
  EXPECT_LT(rel_rms(r.Xl, o.X), 0.01);
  EXPECT_LT(rel_rms(r.Yl, o.Y), 0.01);
  EXPECT_LT(rel_rms(r.P2, P), 0.01);
  EXPECT_LT(rel_rms(r.Q2, Q), 0.01);
}

TEST(Pipeline, NoiselessCalibrationAndAlignment) {
  // Quadratic readout so the polar identity is exact up to filtering.
  Simulation sim(desk_preset());
  sim.set_transduction(TransductionMode::taylor(2));
  DemodRunOptions opt;
  opt.noiseless = true;
  const auto run = run_demodulation(sim, kQuarter, 32, 4, opt);
  const auto q = quad_estimators(run.record.P2, run.record.Q2);
  const auto c = calibrate_quadratic(run.record.Xl, q.X2);
  EXPECT_NEAR(c.slope, 1.0, 0.01);
  const auto a = align(run.record);
  double err = 0.0, ref = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    err += std::pow(2.0 * a.Pmag[k] - a.Xr[k] * a.Xr[k], 2);
    ref += a.Xr[k] * a.Xr[k];
  }
  EXPECT_LT(std::sqrt(err / a.size()), 0.01 * ref / a.size());
  EXPECT_LT(estimate_quadratic_uncertainty(run.reference, false), 1e-3);
}

TEST(Pipeline, WhiteNoiseQuadraticUncertainty) {
  const Simulation sim(desk_preset());
  const auto run = run_demodulation(sim, kQuarter, 33, 3);
  const double n = detection_noise_density(sim.derived(), sim.params().noise);
  double h2 = 0.0;
  for (double h : run.filter.taps) h2 += h * h;
  const double analytic = n * std::sqrt(sim.params().sample_rate * h2) / std::abs(run.calibration.quadratic);
  EXPECT_NEAR(estimate_quadratic_uncertainty(run.reference) / analytic, 1.0, 0.1);
}

TEST(Pipeline, AcceptanceFractionMatchesHistogram) {
  const Simulation sim(desk_preset());
  const auto run = run_demodulation(sim, kQuarter, 34, 6);
  const auto a = align(run.record);
  const double C = 0.5, w = 0.05;
  const auto e = condition(a, C, w);
  std::size_t inside = 0;
  for (double p : a.Pmag) inside += p > C - 0.5 * w && p < C + 0.5 * w;
  EXPECT_DOUBLE_EQ(e.acceptance_fraction(), static_cast<double>(inside) / a.size());
  EXPECT_GT(e.acceptance_fraction(), 0.0);
  EXPECT_LE(e.acceptance_fraction(), 1.0);
}

TEST(Pipeline, BlocksAreReproducible) {
  auto p = desk_preset();
  p.block_duration = 1.0;
  const Simulation sim(p);
  const auto a = run_demodulation(sim, kQuarter, 35, 2);
  const auto b = run_demodulation(sim, kQuarter, 35, 2);
  const auto tail = run_demodulation(sim, kQuarter, 35, 1, {}, 1);
  EXPECT_EQ(a.record.P2, b.record.P2);
  const std::vector<double> second(a.record.P2.begin() + static_cast<std::ptrdiff_t>(a.record.block_starts[1]),
                                   a.record.P2.end());
  EXPECT_EQ(second, tail.record.P2);
}
