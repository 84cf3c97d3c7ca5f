#pragma once

// Physical constants, experiment parameters and the scalar quantities derived
// from them. All stored rates are angular (rad/s); human-facing output divides
// by 2*pi and prints Hz.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace optomech {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kHbar = 1.054571817e-34;   // J s
inline constexpr double kBoltzmann = 1.380649e-23; // J/K

inline double hz_to_rad(double hz) { return kTwoPi * hz; }
inline double rad_to_hz(double rad) { return rad / kTwoPi; }

/// Narrowband relative fluctuation of the optical drive amplitude.
struct LowFrequencyNoise {
  double center_hz = 0.0;
  double bandwidth_hz = 0.0;
  double power = 0.0; // variance of the relative amplitude fluctuation
};

struct NoiseSpec {
  double detection_noise_psd = 0.0; // m/sqrt(Hz), referred to the phase quadrature
  double phase_jitter_std = 0.0;    // rad
  double phase_jitter_corner = 0.0; // rad/s, 0 = white
  std::optional<LowFrequencyNoise> low_freq_noise;
};

/// Additional mechanical mode, used to reproduce sum-frequency mixing.
struct AuxMode {
  double omega = 0.0;     // rad/s
  double gamma = 0.0;     // rad/s
  double sigma_rel = 0.0; // thermal RMS relative to the primary sigma_th
};

enum class TransductionKind { Taylor, Exact };

struct PhysicalParams {
  double omega_m = 0.0;
  double gamma = 0.0;
  double mass = 0.0;
  double temperature = 0.0;
  double kappa = 0.0;
  double g0 = 0.0;
  double photon_number = 0.0;
  double homodyne_angle = 0.0; // 0 = amplitude quadrature, pi/2 = phase quadrature
  double sample_rate = 0.0;
  double block_duration = 0.0;
  int taylor_order = 4;
  NoiseSpec noise;

  std::optional<double> sigma_th_override; // m
  std::optional<AuxMode> aux_mode;
  TransductionKind transduction = TransductionKind::Taylor;
  bool dc_block = true;

  [[nodiscard]] std::size_t block_samples() const {
    return static_cast<std::size_t>(std::llround(block_duration * sample_rate));
  }
};

struct DerivedParams {
  double lambda = 0.0;              // sqrt(2) g0 / kappa
  double x_zp = 0.0;                // sqrt(hbar / 2 m omega_m)
  double sigma_th = 0.0;            // effective thermal RMS displacement (override if set)
  double sigma_th_equipartition = 0.0;
  double n_bar = 0.0;               // kB T / (hbar omega_m)
  double quad_rate = 0.0;           // g0^2 / kappa, rad/s
  double thermal_decoherence = 0.0; // gamma n_bar, rad/s
  double enhanced_quad_rate = 0.0;  // sqrt(N) g0^2 / kappa, rad/s

  /// lambda * sigma_th / x_zp: the dimensionless thermal modulation depth.
  [[nodiscard]] double lambda_eff() const { return x_zp > 0 ? lambda * sigma_th / x_zp : 0.0; }
  /// Trace units per metre of displacement in the phase quadrature.
  [[nodiscard]] double linear_gain_per_meter() const { return lambda / x_zp; }
};

class RegimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void validate(const PhysicalParams& p) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("invalid parameters: " + what);
  };
  auto positive = [&](double v, const char* name) {
    require(std::isfinite(v) && v > 0.0, std::string(name) + " must be finite and > 0");
  };
  positive(p.omega_m, "omega_m");
  positive(p.gamma, "gamma");
  positive(p.mass, "mass");
  positive(p.temperature, "temperature");
  positive(p.kappa, "kappa");
  positive(p.photon_number, "photon_number");
  positive(p.sample_rate, "sample_rate");
  positive(p.block_duration, "block_duration");
  require(std::isfinite(p.g0) && p.g0 >= 0.0, "g0 must be finite and >= 0");
  require(std::isfinite(p.homodyne_angle), "homodyne_angle must be finite");
  require(p.taylor_order >= 1, "taylor_order must be >= 1");
  const double f_top = p.taylor_order * rad_to_hz(p.omega_m);
  require(p.sample_rate > 2.0 * f_top,
          "sample_rate must exceed 2*K*f_m = " + std::to_string(2.0 * f_top) + " Hz");
  const double n = p.block_duration * p.sample_rate;
  require(std::abs(n - std::round(n)) < 1e-6 * std::max(1.0, n),
          "block_duration * sample_rate must be a whole number of samples");
  const auto& nz = p.noise;
  require(nz.detection_noise_psd >= 0 && nz.phase_jitter_std >= 0 && nz.phase_jitter_corner >= 0,
          "noise entries must be >= 0");
  if (nz.low_freq_noise) {
    const auto& lf = *nz.low_freq_noise;
    require(lf.center_hz >= 0 && lf.bandwidth_hz >= 0 && lf.power >= 0,
            "low-frequency noise entries must be >= 0");
  }
  if (p.sigma_th_override) require(*p.sigma_th_override >= 0, "sigma_th must be >= 0");
  if (p.aux_mode) {
    positive(p.aux_mode->omega, "aux mode omega");
    positive(p.aux_mode->gamma, "aux mode gamma");
    require(p.aux_mode->sigma_rel >= 0, "aux mode sigma_rel must be >= 0");
  }
}

/// Computes every derived quantity. Rejects configurations where the thermal
/// modulation depth lambda*sigma_th/x_zp reaches 1 (Taylor series diverges).
inline DerivedParams derive(const PhysicalParams& p) {
  validate(p);
  DerivedParams d;
  d.lambda = std::sqrt(2.0) * p.g0 / p.kappa;
  d.x_zp = std::sqrt(kHbar / (2.0 * p.mass * p.omega_m));
  d.sigma_th_equipartition = std::sqrt(kBoltzmann * p.temperature / (p.mass * p.omega_m * p.omega_m));
  d.sigma_th = p.sigma_th_override.value_or(d.sigma_th_equipartition);
  d.n_bar = kBoltzmann * p.temperature / (kHbar * p.omega_m);
  d.quad_rate = p.g0 * p.g0 / p.kappa;
  d.thermal_decoherence = p.gamma * d.n_bar;
  d.enhanced_quad_rate = std::sqrt(p.photon_number) * d.quad_rate;
  const double ratio = d.lambda_eff();
  if (ratio >= 1.0) {
    std::ostringstream os;
    os << "regime violation: lambda*sigma_th/x_zp = " << ratio << " >= 1";
    throw RegimeError(os.str());
  }
  return d;
}

struct RegimeReport {
  double kappa_over_omega = 0.0;
  double lambda_eff = 0.0;
  double truncation_bound = 0.0; // max |lambda u|^(K+1) for |u| <= 5 sigma
  bool unresolved_sideband_ok = false;
  std::vector<std::string> warnings;
};

inline constexpr double kUnresolvedSidebandMinRatio = 10.0;

inline RegimeReport check_regime(const PhysicalParams& p) {
  RegimeReport r;
  r.kappa_over_omega = p.kappa / p.omega_m;
  const double lam = std::sqrt(2.0) * p.g0 / p.kappa;
  const double xzp = std::sqrt(kHbar / (2.0 * p.mass * p.omega_m));
  const double sig = p.sigma_th_override.value_or(
      std::sqrt(kBoltzmann * p.temperature / (p.mass * p.omega_m * p.omega_m)));
  r.lambda_eff = lam * sig / xzp;
  r.truncation_bound = lam == 0.0 ? 0.0 : std::pow(5.0 * r.lambda_eff, p.taylor_order + 1);
  r.unresolved_sideband_ok = r.kappa_over_omega >= kUnresolvedSidebandMinRatio;
  if (!r.unresolved_sideband_ok) {
    std::ostringstream os;
    os << "kappa/omega_m = " << r.kappa_over_omega
       << " is not >> 1; adiabatic cavity approximation is questionable";
    r.warnings.push_back(os.str());
  }
  if (r.lambda_eff >= 1.0)
    r.warnings.push_back("lambda*sigma_th/x_zp >= 1: Taylor expansion diverges");
  else if (5.0 * r.lambda_eff >= 1.0)
    r.warnings.push_back("5-sigma excursions exceed the Taylor radius of convergence");
  if (p.gamma > p.omega_m / 10.0) r.warnings.push_back("gamma is not << omega_m");
  return r;
}

inline constexpr double kQuotedRethermalizationTemperature = 2.5e-6; // K

struct RethermalizationBound {
  bool unbounded = false;
  double t_max = 0.0; // K
  double ratio_to_quoted = 0.0;
  std::string convention;
};

/// Largest bath temperature at which sqrt(N) g0^2/kappa exceeds gamma*n_bar.
inline RethermalizationBound rethermalization_bound(const PhysicalParams& p) {
  RethermalizationBound b;
  b.convention =
      "both sides in rad/s: sqrt(N)*g0^2/kappa = gamma*kB*T/(hbar*omega_m); "
      "the 2*pi factors cancel, so the Hz form gives the same T";
  if (p.gamma == 0.0) {
    b.unbounded = true;
    b.t_max = std::numeric_limits<double>::infinity();
    b.ratio_to_quoted = std::numeric_limits<double>::infinity();
    return b;
  }
  const double rate = std::sqrt(p.photon_number) * p.g0 * p.g0 / p.kappa;
  b.t_max = rate * kHbar * p.omega_m / (p.gamma * kBoltzmann);
  b.ratio_to_quoted = b.t_max / kQuotedRethermalizationTemperature;
  return b;
}

// ---------------------------------------------------------------------------
// Presets

inline PhysicalParams paper_preset() {
  PhysicalParams p;
  p.omega_m = hz_to_rad(100.2e3);
  p.gamma = hz_to_rad(0.7);
  p.mass = 0.86e-12;
  p.temperature = 300.0;
  p.kappa = hz_to_rad(25.6e6);
  p.g0 = hz_to_rad(75.0);
  p.photon_number = 2.4e4;
  p.homodyne_angle = std::numbers::pi / 4.0;
  p.sample_rate = 5.0e6;
  p.block_duration = 4.0;
  p.taylor_order = 4;
  p.sigma_th_override = 124e-12;
  p.noise.detection_noise_psd = 1.3e-15;
  p.noise.phase_jitter_corner = hz_to_rad(10.0);
  return p;
}

/// Bench-scale variant: 2 kHz mode, 50 kS/s. sigma_th is chosen so that
/// lambda*sigma_th/x_zp equals the paper preset value, and the detection floor
/// so that the noise energy per linewidth relative to sigma_th^2 matches too.
inline PhysicalParams desk_preset() {
  const PhysicalParams paper = paper_preset();
  const double xzp_paper = std::sqrt(kHbar / (2.0 * paper.mass * paper.omega_m));
  const double depth = *paper.sigma_th_override / xzp_paper;

  PhysicalParams p = paper;
  p.omega_m = hz_to_rad(2.0e3);
  p.gamma = hz_to_rad(4.0);
  p.sample_rate = 50.0e3;
  p.block_duration = 8.0;
  const double xzp = std::sqrt(kHbar / (2.0 * p.mass * p.omega_m));
  p.sigma_th_override = depth * xzp;
  p.noise.detection_noise_psd = paper.noise.detection_noise_psd * (*p.sigma_th_override / *paper.sigma_th_override) *
                                std::sqrt(paper.gamma / p.gamma);
  p.noise.phase_jitter_std = 0.0;
  p.noise.phase_jitter_corner = hz_to_rad(10.0);
  return p;
}

/// Second mode for the desk preset at an incommensurate frequency (sqrt(2) f_m).
inline AuxMode desk_aux_mode(const PhysicalParams& desk) {
  return AuxMode{desk.omega_m * std::numbers::sqrt2, desk.gamma, 0.5};
}

inline PhysicalParams preset(const std::string& name) {
  if (name == "paper") return paper_preset();
  if (name == "desk") return desk_preset();
  throw std::invalid_argument("unknown preset '" + name + "' (expected paper|desk)");
}

// ---------------------------------------------------------------------------
// key=value configuration. Frequencies are given in Hz, angles in rad, the
// rest in SI units.

inline void apply_setting(PhysicalParams& p, const std::string& key, const std::string& value) {
  auto num = [&]() {
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(value, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != value.size())
      throw std::invalid_argument("config key '" + key + "': not a number: '" + value + "'");
    return v;
  };
  auto lf = [&]() -> LowFrequencyNoise& {
    if (!p.noise.low_freq_noise) p.noise.low_freq_noise = LowFrequencyNoise{};
    return *p.noise.low_freq_noise;
  };
  auto aux = [&]() -> AuxMode& {
    if (!p.aux_mode) p.aux_mode = AuxMode{0.0, p.gamma, 0.5};
    return *p.aux_mode;
  };

  if (key == "omega_m_hz") p.omega_m = hz_to_rad(num());
  else if (key == "linewidth_hz") p.gamma = hz_to_rad(num());
  else if (key == "mass_kg") p.mass = num();
  else if (key == "temperature_k") p.temperature = num();
  else if (key == "kappa_hz") p.kappa = hz_to_rad(num());
  else if (key == "g0_hz") p.g0 = hz_to_rad(num());
  else if (key == "photon_number") p.photon_number = num();
  else if (key == "homodyne_angle") p.homodyne_angle = num();
  else if (key == "sample_rate") p.sample_rate = num();
  else if (key == "block_duration") p.block_duration = num();
  else if (key == "taylor_order") p.taylor_order = static_cast<int>(num());
  else if (key == "sigma_th_m") {
    const double v = num();
    if (v > 0) p.sigma_th_override = v;
    else p.sigma_th_override.reset();
  } else if (key == "detection_noise_psd") p.noise.detection_noise_psd = num();
  else if (key == "phase_jitter_std") p.noise.phase_jitter_std = num();
  else if (key == "phase_jitter_corner_hz") p.noise.phase_jitter_corner = hz_to_rad(num());
  else if (key == "lf_noise_center_hz") lf().center_hz = num();
  else if (key == "lf_noise_bandwidth_hz") lf().bandwidth_hz = num();
  else if (key == "lf_noise_power") lf().power = num();
  else if (key == "mode2_freq_hz") {
    const double v = num();
    if (v > 0) aux().omega = hz_to_rad(v);
    else p.aux_mode.reset();
  } else if (key == "mode2_linewidth_hz") aux().gamma = hz_to_rad(num());
  else if (key == "mode2_sigma_rel") aux().sigma_rel = num();
  else if (key == "transduction") {
    if (value == "taylor") p.transduction = TransductionKind::Taylor;
    else if (value == "exact") p.transduction = TransductionKind::Exact;
    else throw std::invalid_argument("transduction must be taylor|exact");
  } else if (key == "dc_block") p.dc_block = num() != 0.0;
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Parses key=value lines ('#' starts a comment). A `preset` key, if present,
/// must come first and selects the base parameter set.
inline PhysicalParams parse_config(std::istream& in, PhysicalParams base = desk_preset()) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "preset") base = preset(value);
    else apply_setting(base, key, value);
  }
  return base;
}

inline PhysicalParams load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  return parse_config(in);
}

/// Serializes every parameter as key=value lines that parse_config accepts.
inline std::string to_config(const PhysicalParams& p) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "omega_m_hz=" << rad_to_hz(p.omega_m) << '\n'
     << "linewidth_hz=" << rad_to_hz(p.gamma) << '\n'
     << "mass_kg=" << p.mass << '\n'
     << "temperature_k=" << p.temperature << '\n'
     << "kappa_hz=" << rad_to_hz(p.kappa) << '\n'
     << "g0_hz=" << rad_to_hz(p.g0) << '\n'
     << "photon_number=" << p.photon_number << '\n'
     << "homodyne_angle=" << p.homodyne_angle << '\n'
     << "sample_rate=" << p.sample_rate << '\n'
     << "block_duration=" << p.block_duration << '\n'
     << "taylor_order=" << p.taylor_order << '\n'
     << "sigma_th_m=" << p.sigma_th_override.value_or(0.0) << '\n'
     << "detection_noise_psd=" << p.noise.detection_noise_psd << '\n'
     << "phase_jitter_std=" << p.noise.phase_jitter_std << '\n'
     << "phase_jitter_corner_hz=" << rad_to_hz(p.noise.phase_jitter_corner) << '\n';
  if (p.noise.low_freq_noise) {
    os << "lf_noise_center_hz=" << p.noise.low_freq_noise->center_hz << '\n'
       << "lf_noise_bandwidth_hz=" << p.noise.low_freq_noise->bandwidth_hz << '\n'
       << "lf_noise_power=" << p.noise.low_freq_noise->power << '\n';
  }
  if (p.aux_mode) {
    os << "mode2_freq_hz=" << rad_to_hz(p.aux_mode->omega) << '\n'
       << "mode2_linewidth_hz=" << rad_to_hz(p.aux_mode->gamma) << '\n'
       << "mode2_sigma_rel=" << p.aux_mode->sigma_rel << '\n';
  }
  os << "transduction=" << (p.transduction == TransductionKind::Exact ? "exact" : "taylor") << '\n'
     << "dc_block=" << (p.dc_block ? 1 : 0) << '\n';
  return os.str();
}

inline std::string derive_report(const PhysicalParams& p) {
  const DerivedParams d = derive(p);
  const RegimeReport r = check_regime(p);
  const RethermalizationBound b = rethermalization_bound(p);
  std::ostringstream os;
  os << std::setprecision(4);
  os << "lambda                  = " << d.lambda << '\n'
     << "x_zp                    = " << d.x_zp << " m\n"
     << "sigma_th                = " << d.sigma_th << " m"
     << (p.sigma_th_override ? " (pinned)" : " (equipartition)") << '\n'
     << "sigma_th (equipartition)= " << d.sigma_th_equipartition << " m\n"
     << "n_bar                   = " << d.n_bar << '\n'
     << "lambda*sigma_th/x_zp    = " << d.lambda_eff() << '\n'
     << "lambda^2 n_bar          = " << d.lambda * d.lambda * d.n_bar << '\n'
     << "g0^2/2pi kappa          = " << rad_to_hz(d.quad_rate) << " Hz\n"
     << "gamma n_bar / 2pi       = " << rad_to_hz(d.thermal_decoherence) << " Hz\n"
     << "sqrt(N) g0^2/2pi kappa  = " << rad_to_hz(d.enhanced_quad_rate) << " Hz\n"
     << "kappa/omega_m           = " << r.kappa_over_omega
     << (r.unresolved_sideband_ok ? "  (unresolved-sideband regime OK)" : "") << '\n'
     << "truncation bound (5 sd) = " << r.truncation_bound << '\n';
  if (b.unbounded) os << "rethermalization T_max  = unbounded (gamma = 0)\n";
  else
    os << "rethermalization T_max  = " << b.t_max << " K  (ratio to quoted 2.5 uK: "
       << b.ratio_to_quoted << ")\n";
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  return os.str();
}

} // namespace optomech
