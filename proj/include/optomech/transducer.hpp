#pragma once

// Displacement -> homodyne photocurrent through the radiation-pressure readout.
//
// With v = lambda * x / x_zp the normalized output at homodyne angle theta is
//   s = cos(theta) A(v) + sin(theta) B(v),
//   A = 1/(1+v^2) = 1 - v^2 + v^4 - ...,   B = v/(1+v^2) = v - v^3 + ...
// Traces are expressed in units of the output gain G = 2 sqrt(kappa N), so a
// decoupled system (lambda = 0) reads s = cos(theta).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "carrier.hpp"
#include "mechsim.hpp"
#include "params.hpp"
#include "rng.hpp"

namespace optomech {

struct TransductionMode {
  TransductionKind kind = TransductionKind::Taylor;
  int order = 4; // highest retained power of v in Taylor mode

  static TransductionMode taylor(int k) { return {TransductionKind::Taylor, k}; }
  static TransductionMode exact() { return {TransductionKind::Exact, 0}; }
};

struct HomodyneTrace {
  double sample_rate = 0.0;
  std::vector<double> samples;
  double theta_nominal = 0.0;
  bool dc_blocked = false;
  double units_per_meter = 0.0; // G*lambda/x_zp with G = 1: trace units per metre at theta = pi/2
  double dc_removed = 0.0;      // value subtracted by the DC block
  std::vector<std::uint64_t> seed_record;
};

/// Even (amplitude) and odd (phase) response of the readout.
struct QuadratureResponse {
  double amplitude; // A(v)
  double phase;     // B(v)
};

inline QuadratureResponse readout_response(double v, TransductionMode mode) {
  if (mode.kind == TransductionKind::Exact) {
    const double inv = 1.0 / (1.0 + v * v);
    return {inv, v * inv};
  }
  // Horner over v^2 for the two alternating partial sums.
  const double v2 = v * v;
  const int even_terms = mode.order / 2;      // powers 2, 4, ..., 2*even_terms
  const int odd_terms = (mode.order - 1) / 2; // powers 3, 5, ..., 2*odd_terms+1
  double a = 0.0;
  for (int j = even_terms; j >= 1; --j) a = (j % 2 ? -1.0 : 1.0) + v2 * a;
  a = 1.0 + v2 * a;
  double b = 0.0;
  for (int j = odd_terms; j >= 1; --j) b = (j % 2 ? -1.0 : 1.0) + v2 * b;
  b = v * (1.0 + v2 * b);
  return {a, b};
}

/// E[A(v)] for v ~ N(0, var). Closed form for the Taylor series, Simpson
/// quadrature for the rational form.
inline double mean_amplitude_response(double var, TransductionMode mode) {
  if (var <= 0.0) return 1.0;
  if (mode.kind == TransductionKind::Taylor) {
    double sum = 1.0, moment = 1.0;
    for (int j = 1; 2 * j <= mode.order; ++j) {
      moment *= static_cast<double>(2 * j - 1) * var; // (2j-1)!! var^j
      sum += (j % 2 ? -1.0 : 1.0) * moment;
    }
    return sum;
  }
  const double sd = std::sqrt(var);
  constexpr int kIntervals = 4000;
  const double lo = -12.0 * sd, h = 24.0 * sd / kIntervals;
  double acc = 0.0;
  for (int i = 0; i <= kIntervals; ++i) {
    const double v = lo + i * h;
    const double w = (i == 0 || i == kIntervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * std::exp(-0.5 * v * v / var) / (1.0 + v * v);
  }
  return acc * h / 3.0 / (sd * std::sqrt(kTwoPi));
}

struct TransduceOptions {
  bool dc_block = false;
  int max_taylor_order = 4; // configured K; requesting a higher Taylor order is an error
  double thermal_variance_m2 = -1.0; // variance of x used by the DC block; < 0 -> sample variance
};

/// One-sided detection noise density in trace units / sqrt(Hz).
inline double detection_noise_density(const DerivedParams& d, const NoiseSpec& noise) {
  return d.linear_gain_per_meter() * noise.detection_noise_psd;
}

inline HomodyneTrace transduce(const SampledSignal& x, const DerivedParams& d, double theta,
                               const NoiseSpec& noise, TransductionMode mode, std::uint64_t seed,
                               std::uint64_t block = 0, const TransduceOptions& opt = {}) {
  if (mode.kind == TransductionKind::Taylor) {
    if (mode.order < 1) throw std::invalid_argument("transduce: Taylor order must be >= 1");
    if (mode.order > opt.max_taylor_order)
      throw std::invalid_argument("transduce: Taylor order " + std::to_string(mode.order) +
                                  " exceeds configured K = " + std::to_string(opt.max_taylor_order));
  }
  const double gain = d.linear_gain_per_meter(); // v per metre
  const std::size_t n = x.samples.size();
  const double fs = x.sample_rate;
  const double dt = 1.0 / fs;

  HomodyneTrace tr;
  tr.sample_rate = fs;
  tr.theta_nominal = theta;
  tr.units_per_meter = gain;
  tr.seed_record = {seed, block};
  tr.samples.resize(n);

  std::vector<double> jitter;
  if (noise.phase_jitter_std > 0.0) {
    jitter.resize(n);
    NormalSource g(make_engine(seed, block, Stream::Jitter));
    const double decay = noise.phase_jitter_corner > 0 ? std::exp(-noise.phase_jitter_corner * dt) : 0.0;
    const double kick = noise.phase_jitter_std * std::sqrt(1.0 - decay * decay);
    double j = noise.phase_jitter_std * g();
    for (std::size_t k = 0; k < n; ++k) {
      jitter[k] = j;
      j = j * decay + kick * g();
    }
  }

  std::vector<double> amp_noise;
  if (noise.low_freq_noise && noise.low_freq_noise->power > 0.0) {
    const auto& lf = *noise.low_freq_noise;
    amp_noise.resize(n);
    NormalSource g(make_engine(seed, block, Stream::LowFrequency));
    const double rate = std::numbers::pi * lf.bandwidth_hz; // Lorentzian FWHM = bandwidth
    const double decay = std::exp(-rate * dt);
    const double sd = std::sqrt(lf.power);
    const double kick = sd * std::sqrt(1.0 - decay * decay);
    double i_q = sd * g(), q_q = sd * g();
    constexpr std::size_t kChunk = 1 << 15;
    std::vector<double> c(kChunk), s(kChunk);
    for (std::size_t k0 = 0; k0 < n; k0 += kChunk) {
      const std::size_t len = std::min(kChunk, n - k0);
      carrier(lf.center_hz, fs, k0, std::span(c).first(len), std::span(s).first(len));
      for (std::size_t k = 0; k < len; ++k) {
        amp_noise[k0 + k] = i_q * c[k] + q_q * s[k];
        i_q = i_q * decay + kick * g();
        q_q = q_q * decay + kick * g();
      }
    }
  }

  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  for (std::size_t k = 0; k < n; ++k) {
    const double v = gain * x.samples[k];
    if (!std::isfinite(v)) throw std::invalid_argument("transduce: non-finite displacement");
    const auto r = readout_response(v, mode);
    double s;
    if (jitter.empty()) s = cos_t * r.amplitude + sin_t * r.phase;
    else s = std::cos(theta + jitter[k]) * r.amplitude + std::sin(theta + jitter[k]) * r.phase;
    if (!amp_noise.empty()) s *= 1.0 + amp_noise[k];
    tr.samples[k] = s;
  }

  const double density = detection_noise_density(d, noise);
  if (density > 0.0) {
    NormalSource g(make_engine(seed, block, Stream::Detection));
    const double sd = density * std::sqrt(0.5 * fs);
    for (auto& s : tr.samples) s += sd * g();
  }

  if (opt.dc_block) {
    double var_x = opt.thermal_variance_m2;
    if (var_x < 0.0) {
      double m = 0.0, m2 = 0.0;
      for (double v : x.samples) {
        m += v;
        m2 += v * v;
      }
      m /= static_cast<double>(std::max<std::size_t>(n, 1));
      var_x = m2 / static_cast<double>(std::max<std::size_t>(n, 1)) - m * m;
    }
    tr.dc_removed = cos_t * mean_amplitude_response(gain * gain * var_x, mode);
    for (auto& s : tr.samples) s -= tr.dc_removed;
    tr.dc_blocked = true;
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Trace files. Binary: raw little-endian float64 samples. Sidecar (<path>.txt):
// one line of space-separated key=value pairs, first token "optomech-trace-v1".

inline void write_trace_binary(const std::string& path, const HomodyneTrace& tr) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(tr.samples.data()),
              static_cast<std::streamsize>(tr.samples.size() * sizeof(double)));
  }
  std::ofstream side(path + ".txt");
  side << std::setprecision(17) << "optomech-trace-v1 fs=" << tr.sample_rate << " theta=" << tr.theta_nominal
       << " units_per_meter=" << tr.units_per_meter << " dc_blocked=" << (tr.dc_blocked ? 1 : 0)
       << " dc_removed=" << tr.dc_removed << " samples=" << tr.samples.size() << " seed=";
  for (std::size_t i = 0; i < tr.seed_record.size(); ++i) side << (i ? "," : "") << tr.seed_record[i];
  side << '\n';
}

inline HomodyneTrace read_trace_binary(const std::string& path) {
  std::ifstream side(path + ".txt");
  if (!side) throw std::runtime_error("missing trace sidecar '" + path + ".txt'");
  std::string line;
  std::getline(side, line);
  std::istringstream is(line);
  std::string tok;
  is >> tok;
  if (tok != "optomech-trace-v1") throw std::runtime_error("unsupported trace format '" + tok + "'");
  HomodyneTrace tr;
  std::size_t count = 0;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
    if (k == "fs") tr.sample_rate = std::stod(v);
    else if (k == "theta") tr.theta_nominal = std::stod(v);
    else if (k == "units_per_meter") tr.units_per_meter = std::stod(v);
    else if (k == "dc_blocked") tr.dc_blocked = v == "1";
    else if (k == "dc_removed") tr.dc_removed = std::stod(v);
    else if (k == "samples") count = std::stoull(v);
    else if (k == "seed") {
      std::istringstream ss(v);
      std::string part;
      while (std::getline(ss, part, ',')) tr.seed_record.push_back(std::stoull(part));
    }
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  tr.samples.resize(count);
  in.read(reinterpret_cast<char*>(tr.samples.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
    throw std::runtime_error("trace '" + path + "' is shorter than its sidecar states");
  return tr;
}

inline void write_trace_csv(const std::string& path, const HomodyneTrace& tr, const std::string& header = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "# optomech-trace-v1 csv\n" << std::setprecision(17) << "# fs_hz=" << tr.sample_rate
      << "\n# theta_rad=" << tr.theta_nominal << "\n# units_per_meter=" << tr.units_per_meter
      << "\n# dc_blocked=" << (tr.dc_blocked ? 1 : 0) << '\n'
      << header << "t_s,s\n";
  out << std::setprecision(12);
  for (std::size_t k = 0; k < tr.samples.size(); ++k)
    out << static_cast<double>(k) / tr.sample_rate << ',' << tr.samples[k] << '\n';
}

} // namespace optomech
