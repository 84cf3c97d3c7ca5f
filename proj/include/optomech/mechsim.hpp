#pragma once

// Thermal mechanical motion as slowly varying quadratures X(t), Y(t) of one or
// more modes: x(t) = sum_i X_i(t) cos(w_i t) + Y_i(t) sin(w_i t).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "carrier.hpp"
#include "params.hpp"
#include "rng.hpp"

namespace optomech {

struct ModeSpec {
  double omega = 0.0; // rad/s
  double gamma = 0.0; // energy decay rate, rad/s (quadratures relax at gamma/2)
  double sigma = 0.0; // thermal RMS displacement, m
};

inline std::vector<std::string> mode_warnings(const ModeSpec& m) {
  std::vector<std::string> w;
  if (m.gamma > m.omega / 10.0) w.push_back("mode gamma exceeds omega/10; quadrature picture is poor");
  return w;
}

inline void validate_mode(const ModeSpec& m) {
  if (!std::isfinite(m.omega) || !std::isfinite(m.gamma) || !std::isfinite(m.sigma))
    throw std::invalid_argument("mode parameters must be finite");
  if (m.omega <= 0 || m.gamma <= 0 || m.sigma < 0)
    throw std::invalid_argument("mode requires omega > 0, gamma > 0, sigma >= 0");
}

/// Modes implied by a parameter set: the primary mode plus the optional auxiliary one.
inline std::vector<ModeSpec> modes_from(const PhysicalParams& p, const DerivedParams& d) {
  std::vector<ModeSpec> modes{{p.omega_m, p.gamma, d.sigma_th}};
  if (p.aux_mode) modes.push_back({p.aux_mode->omega, p.aux_mode->gamma, p.aux_mode->sigma_rel * d.sigma_th});
  return modes;
}

struct QuadratureTrajectory {
  double sample_rate = 0.0;
  double t0 = 0.0; // time of sample 0, s (negative when the grid is padded)
  std::vector<std::vector<double>> X, Y;
  std::vector<std::uint64_t> seed_record;

  [[nodiscard]] std::size_t size() const { return X.empty() ? 0 : X.front().size(); }
  [[nodiscard]] std::size_t modes() const { return X.size(); }
  [[nodiscard]] double time(std::size_t n) const { return t0 + static_cast<double>(n) / sample_rate; }
};

/// Exact Ornstein-Uhlenbeck update: out[0] = x0, out[n+1] = out[n]*decay + kick*normals[n].
/// out must hold normals.size() + 1 values.
inline void ou_advance(double x0, double decay, double kick, std::span<const double> normals,
                       std::span<double> out) {
  if (out.size() != normals.size() + 1) throw std::invalid_argument("ou_advance: size mismatch");
  out[0] = x0;
  for (std::size_t n = 0; n < normals.size(); ++n) out[n + 1] = out[n] * decay + kick * normals[n];
}

/// Simulates independent stationary OU quadratures for every mode on a grid of
/// round(duration*sample_rate) + 2*pad samples starting at t = -pad/sample_rate.
/// Each (block, mode, quadrature) has its own random stream.
inline QuadratureTrajectory simulate_quadratures(std::span<const ModeSpec> modes, double sample_rate,
                                                 double duration, std::uint64_t seed,
                                                 std::uint64_t block = 0, std::size_t pad = 0) {
  if (modes.empty()) throw std::invalid_argument("simulate_quadratures: no modes");
  if (!std::isfinite(sample_rate) || !std::isfinite(duration) || sample_rate <= 0 || duration <= 0)
    throw std::invalid_argument("simulate_quadratures: rate and duration must be finite and > 0");
  for (const auto& m : modes) validate_mode(m);
  const auto core = static_cast<std::size_t>(std::llround(duration * sample_rate));
  const std::size_t n = core + 2 * pad;
  if (core < 2) throw std::invalid_argument("simulate_quadratures: fewer than 2 samples requested");

  QuadratureTrajectory traj;
  traj.sample_rate = sample_rate;
  traj.t0 = -static_cast<double>(pad) / sample_rate;
  traj.seed_record = {seed, block};
  const double dt = 1.0 / sample_rate;
  std::vector<double> normals(n - 1);
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const auto& m = modes[i];
    const double decay = std::exp(-0.5 * m.gamma * dt);
    const double kick = m.sigma * std::sqrt(-std::expm1(-m.gamma * dt));
    for (Stream which : {Stream::MechanicsX, Stream::MechanicsY}) {
      NormalSource gauss(make_engine(seed, block, which, i));
      const double x0 = m.sigma * gauss();
      for (auto& v : normals) v = gauss();
      std::vector<double> out(n);
      ou_advance(x0, decay, kick, normals, out);
      (which == Stream::MechanicsX ? traj.X : traj.Y).push_back(std::move(out));
    }
  }
  return traj;
}

struct SampledSignal {
  double sample_rate = 0.0;
  std::vector<double> samples;
};

/// x(t) on the trajectory's own grid.
inline SampledSignal displacement(const QuadratureTrajectory& traj, std::span<const ModeSpec> modes) {
  if (modes.size() != traj.modes()) throw std::invalid_argument("displacement: mode count mismatch");
  SampledSignal x{traj.sample_rate, std::vector<double>(traj.size(), 0.0)};
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const double w = modes[i].omega;
    for (std::size_t n = 0; n < traj.size(); ++n) {
      const double t = traj.time(n);
      x.samples[n] += traj.X[i][n] * std::cos(w * t) + traj.Y[i][n] * std::sin(w * t);
    }
  }
  return x;
}

/// Half-width (in trajectory samples) of the interpolation kernel used by the
/// upsampling overload of displacement(); trajectories must be padded by it.
inline constexpr std::size_t kInterpHalfWidth = 8;

namespace detail {

inline double lanczos(double x, double a) {
  if (x == 0.0) return 1.0;
  if (std::abs(x) >= a) return 0.0;
  const double px = std::numbers::pi * x;
  return a * std::sin(px) * std::sin(px / a) / (px * px);
}

/// Polyphase Lanczos table: row j holds the 2a weights for fractional offset j/U,
/// normalized to unit sum so constants are reproduced exactly.
inline std::vector<double> lanczos_table(std::size_t upsample) {
  constexpr std::size_t a = kInterpHalfWidth;
  std::vector<double> table(upsample * 2 * a);
  for (std::size_t j = 0; j < upsample; ++j) {
    const double frac = static_cast<double>(j) / static_cast<double>(upsample);
    double sum = 0.0;
    for (std::size_t m = 0; m < 2 * a; ++m) {
      const double offset = static_cast<double>(m) - static_cast<double>(a - 1) - frac;
      table[j * 2 * a + m] = lanczos(offset, static_cast<double>(a));
      sum += table[j * 2 * a + m];
    }
    for (std::size_t m = 0; m < 2 * a; ++m) table[j * 2 * a + m] /= sum;
  }
  return table;
}

} // namespace detail

/// x(t) at t_k = k/out_rate, k in [0, count): quadratures are band-limited
/// (Lanczos) interpolated from the slow grid, then multiplied by the carriers.
/// out_rate must be an integer multiple of the trajectory rate.
inline SampledSignal displacement(const QuadratureTrajectory& traj, std::span<const ModeSpec> modes,
                                  double out_rate, std::size_t count) {
  if (modes.size() != traj.modes()) throw std::invalid_argument("displacement: mode count mismatch");
  const double ratio = out_rate / traj.sample_rate;
  const auto up = static_cast<std::size_t>(std::llround(ratio));
  if (up < 1 || std::abs(ratio - static_cast<double>(up)) > 1e-9 * ratio)
    throw std::invalid_argument("displacement: output rate must be an integer multiple of the trajectory rate");
  if (up == 1 && traj.t0 == 0.0 && count <= traj.size()) {
    auto x = displacement(traj, modes);
    x.samples.resize(count);
    return x;
  }
  constexpr std::size_t a = kInterpHalfWidth;
  const double pad_exact = -traj.t0 * traj.sample_rate;
  const auto pad = static_cast<std::size_t>(std::llround(pad_exact));
  if (pad < a || std::abs(pad_exact - static_cast<double>(pad)) > 1e-6)
    throw std::invalid_argument("displacement: trajectory must be padded by the interpolation half-width");
  if ((count - 1) / up + pad + a >= traj.size())
    throw std::invalid_argument("displacement: trajectory too short for requested output");

  const std::vector<double> table = detail::lanczos_table(up);
  SampledSignal x{out_rate, std::vector<double>(count, 0.0)};
  constexpr std::size_t kChunk = 1 << 15;
  std::vector<double> c(kChunk), s(kChunk);
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const auto& X = traj.X[i];
    const auto& Y = traj.Y[i];
    const double f = rad_to_hz(modes[i].omega);
    for (std::size_t k0 = 0; k0 < count; k0 += kChunk) {
      const std::size_t len = std::min(kChunk, count - k0);
      carrier(f, out_rate, k0, std::span(c).first(len), std::span(s).first(len));
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t kk = k0 + k;
        const std::size_t base = kk / up + pad - (a - 1);
        const double* w = &table[(kk % up) * 2 * a];
        double xi = 0.0, yi = 0.0;
        for (std::size_t m = 0; m < 2 * a; ++m) {
          xi += w[m] * X[base + m];
          yi += w[m] * Y[base + m];
        }
        x.samples[kk] += xi * c[k] + yi * s[k];
      }
    }
  }
  return x;
}

/// Interpolated quadratures of one mode at output samples k/out_rate, using
/// the same kernel as displacement().
inline std::pair<std::vector<double>, std::vector<double>> quadratures_at(const QuadratureTrajectory& traj,
                                                                          std::size_t mode, double out_rate,
                                                                          std::span<const std::size_t> indices) {
  const auto up = static_cast<std::size_t>(std::llround(out_rate / traj.sample_rate));
  const auto pad = static_cast<std::size_t>(std::llround(-traj.t0 * traj.sample_rate));
  constexpr std::size_t a = kInterpHalfWidth;
  if (up < 1 || pad < a) throw std::invalid_argument("quadratures_at: trajectory not padded for interpolation");
  const std::vector<double> table = detail::lanczos_table(up);
  std::vector<double> X(indices.size()), Y(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t kk = indices[i];
    const std::size_t base = kk / up + pad - (a - 1);
    if (base + 2 * a > traj.size()) throw std::out_of_range("quadratures_at: index beyond trajectory");
    const double* w = &table[(kk % up) * 2 * a];
    for (std::size_t m = 0; m < 2 * a; ++m) {
      X[i] += w[m] * traj.X[mode][base + m];
      Y[i] += w[m] * traj.Y[mode][base + m];
    }
  }
  return {X, Y};
}

/// CSV dump: t, X_i, Y_i per mode, preceded by '#' metadata lines.
inline void write_trajectory_csv(const std::string& path, const QuadratureTrajectory& traj,
                                 const std::string& extra_header = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "# quadrature trajectory v1\n# sample_rate_hz=" << std::setprecision(17) << traj.sample_rate
      << "\n# seed_record=";
  for (std::size_t i = 0; i < traj.seed_record.size(); ++i) out << (i ? "," : "") << traj.seed_record[i];
  out << '\n' << extra_header;
  out << "t_s";
  for (std::size_t i = 0; i < traj.modes(); ++i) out << ",X" << i + 1 << "_m,Y" << i + 1 << "_m";
  out << '\n' << std::setprecision(10);
  for (std::size_t n = 0; n < traj.size(); ++n) {
    out << traj.time(n);
    for (std::size_t i = 0; i < traj.modes(); ++i) out << ',' << traj.X[i][n] << ',' << traj.Y[i][n];
    out << '\n';
  }
}

} // namespace optomech
