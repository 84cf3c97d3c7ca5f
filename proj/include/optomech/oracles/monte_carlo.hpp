#pragma once

// Monte-Carlo harmonic powers: draw (X, Y) ~ N(0, 1), sample the readout over
// one mechanical period and take the exact DFT at each harmonic. Used to
// cross-check the symbolic expansion.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "../params.hpp"
#include "../rng.hpp"
#include "../transducer.hpp"

namespace optomech {

struct MonteCarloHarmonics {
  std::vector<double> power;     // index n = 1..order (index 0 unused)
  std::vector<double> std_error; // of power
  std::vector<double> relative;  // power / strongest harmonic
  std::vector<double> relative_error;
  std::size_t draws = 0;
};

/// draws must be a multiple of batches; standard errors come from a
/// delete-one-batch jackknife.
inline MonteCarloHarmonics monte_carlo_harmonics(double lambda_eff, int order, double theta, std::size_t draws,
                                                 std::uint64_t seed, std::size_t batches = 100) {
  if (order < 1 || 4 * order >= 64) throw std::invalid_argument("monte_carlo_harmonics: bad order");
  if (batches < 2 || draws % batches) throw std::invalid_argument("monte_carlo_harmonics: draws must split into batches");
  constexpr int M = 64; // samples per period; exact for harmonics of degree < M/2
  std::vector<double> cs(M), sn(M);
  std::vector<std::vector<double>> ch(order + 1, std::vector<double>(M)), sh = ch;
  for (int j = 0; j < M; ++j) {
    const double t = kTwoPi * j / M;
    cs[j] = std::cos(t);
    sn[j] = std::sin(t);
    for (int n = 1; n <= order; ++n) {
      ch[n][j] = std::cos(n * t);
      sh[n][j] = std::sin(n * t);
    }
  }
  const TransductionMode mode = TransductionMode::taylor(order);
  const double ct = std::cos(theta), st = std::sin(theta);

  std::vector<std::vector<double>> batch_sum(batches, std::vector<double>(order + 1, 0.0));
  NormalSource g(make_engine(seed, 0, Stream::MonteCarlo));
  const std::size_t per = draws / batches;
  std::vector<double> s(M);
  for (std::size_t b = 0; b < batches; ++b)
    for (std::size_t i = 0; i < per; ++i) {
      const double X = g(), Y = g();
      for (int j = 0; j < M; ++j) {
        const auto r = readout_response(lambda_eff * (X * cs[j] + Y * sn[j]), mode);
        s[j] = ct * r.amplitude + st * r.phase;
      }
      for (int n = 1; n <= order; ++n) {
        double c = 0.0, q = 0.0;
        for (int j = 0; j < M; ++j) {
          c += s[j] * ch[n][j];
          q += s[j] * sh[n][j];
        }
        c *= 2.0 / M;
        q *= 2.0 / M;
        batch_sum[b][n] += 0.5 * (c * c + q * q);
      }
    }

  MonteCarloHarmonics out;
  out.draws = draws;
  out.power.assign(order + 1, 0.0);
  out.std_error = out.relative = out.relative_error = out.power;
  std::vector<double> total(order + 1, 0.0);
  for (const auto& bs : batch_sum)
    for (int n = 1; n <= order; ++n) total[n] += bs[n];

  auto estimates = [&](const std::vector<double>& sum, double count, std::vector<double>& pw, std::vector<double>& rel) {
    pw.assign(order + 1, 0.0);
    rel.assign(order + 1, 0.0);
    double peak = 0.0;
    for (int n = 1; n <= order; ++n) {
      pw[n] = sum[n] / count;
      peak = std::max(peak, pw[n]);
    }
    for (int n = 1; n <= order; ++n) rel[n] = peak > 0 ? pw[n] / peak : 0.0;
  };
  std::vector<double> rel_full;
  estimates(total, static_cast<double>(draws), out.power, rel_full);
  out.relative = rel_full;

  // Jackknife over batches.
  const double B = static_cast<double>(batches);
  std::vector<std::vector<double>> jp(batches), jr(batches);
  std::vector<double> mp(order + 1, 0.0), mr(order + 1, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    std::vector<double> loo(order + 1);
    for (int n = 1; n <= order; ++n) loo[n] = total[n] - batch_sum[b][n];
    estimates(loo, static_cast<double>(draws - per), jp[b], jr[b]);
    for (int n = 1; n <= order; ++n) {
      mp[n] += jp[b][n] / B;
      mr[n] += jr[b][n] / B;
    }
  }
  for (int n = 1; n <= order; ++n) {
    double vp = 0.0, vr = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      vp += (jp[b][n] - mp[n]) * (jp[b][n] - mp[n]);
      vr += (jr[b][n] - mr[n]) * (jr[b][n] - mr[n]);
    }
    out.std_error[n] = std::sqrt((B - 1.0) / B * vp);
    out.relative_error[n] = std::sqrt((B - 1.0) / B * vr);
  }
  return out;
}

} // namespace optomech
