#pragma once

// Block-wise simulation: quadratures -> displacement -> homodyne trace ->
// demodulated record. Every block is reproducible from (seed, block index).

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "conditioning.hpp"
#include "filter.hpp"
#include "lockin.hpp"
#include "mechsim.hpp"
#include "params.hpp"
#include "transducer.hpp"

namespace optomech {

/// Quadratures are simulated at this multiple of the linewidth (in Hz) and
/// interpolated up to the sample rate; it is also the default demod bandwidth.
inline constexpr double kBandwidthPerLinewidth = 25.0;

inline double default_bandwidth(const PhysicalParams& p) { return kBandwidthPerLinewidth * rad_to_hz(p.gamma); }

struct BlockData {
  QuadratureTrajectory trajectory;
  SampledSignal x;
  HomodyneTrace trace;
};

class Simulation {
 public:
  explicit Simulation(PhysicalParams p) : params_(std::move(p)) {
    validate(params_);
    derived_ = derive(params_);
    modes_ = modes_from(params_, derived_);
    const double target = default_bandwidth(params_);
    upsample_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(params_.sample_rate / target)));
    quad_rate_ = params_.sample_rate / static_cast<double>(upsample_);
    mode_ = params_.transduction == TransductionKind::Exact ? TransductionMode::exact()
                                                             : TransductionMode::taylor(params_.taylor_order);
  }

  [[nodiscard]] const PhysicalParams& params() const { return params_; }
  [[nodiscard]] const DerivedParams& derived() const { return derived_; }
  [[nodiscard]] const std::vector<ModeSpec>& modes() const { return modes_; }
  [[nodiscard]] double quadrature_rate() const { return quad_rate_; }
  [[nodiscard]] TransductionMode transduction() const { return mode_; }
  void set_transduction(TransductionMode m) { mode_ = m; }

  [[nodiscard]] std::size_t block_samples() const {
    return static_cast<std::size_t>(std::llround(params_.block_duration * params_.sample_rate));
  }

  [[nodiscard]] double thermal_variance() const {
    double v = 0.0;
    for (const auto& m : modes_) v += m.sigma * m.sigma;
    return v;
  }

  /// Simulates one block. `noiseless` drops every NoiseSpec contribution.
  [[nodiscard]] BlockData block(double theta, std::uint64_t seed, std::uint64_t index, bool noiseless = false,
                                bool keep_x = false) const {
    BlockData b;
    const std::size_t count = block_samples();
    const double duration = static_cast<double>((count + upsample_ - 1) / upsample_ + 1) / quad_rate_;
    b.trajectory = simulate_quadratures(modes_, quad_rate_, duration, seed, index, kInterpHalfWidth + 1);
    b.x = displacement(b.trajectory, modes_, params_.sample_rate, count);
    TransduceOptions opt;
    opt.dc_block = params_.dc_block;
    opt.max_taylor_order = std::max(params_.taylor_order, mode_.order);
    opt.thermal_variance_m2 = thermal_variance();
    b.trace = transduce(b.x, derived_, theta, noiseless ? NoiseSpec{} : params_.noise, mode_, seed, index, opt);
    if (!keep_x) b.x = {};
    return b;
  }

 private:
  PhysicalParams params_;
  DerivedParams derived_;
  std::vector<ModeSpec> modes_;
  std::size_t upsample_ = 1;
  double quad_rate_ = 0.0;
  TransductionMode mode_;
};

struct DemodRun {
  DemodRecord record;
  NoiseReference reference;
  FirFilter filter;
  std::size_t decimation = 1;
  Calibration calibration;
};

struct DemodRunOptions {
  double bandwidth = 0.0; // 0 -> default_bandwidth
  std::size_t decimation = 0;
  bool noiseless = false;
  bool with_reference = true;
};

/// Demodulates `blocks` consecutive blocks at w_m and 2 w_m (plus the
/// off-resonant reference at 2 f_m + 10 B) and concatenates the records.
inline DemodRun run_demodulation(const Simulation& sim, double theta, std::uint64_t seed, std::size_t blocks,
                                 const DemodRunOptions& opt = {}, std::uint64_t first_block = 0) {
  const auto& p = sim.params();
  DemodRun run;
  const double B = opt.bandwidth > 0 ? opt.bandwidth : default_bandwidth(p);
  run.filter = design_lowpass(B, p.sample_rate);
  run.decimation = opt.decimation ? opt.decimation : default_decimation(p.sample_rate, B);
  run.calibration = Calibration::from(theta, sim.derived());
  const DemodSettings set{rad_to_hz(p.omega_m), B, run.decimation, {}};
  const double ref_center = 2.0 * rad_to_hz(p.omega_m) + 10.0 * B;
  for (std::size_t i = 0; i < blocks; ++i) {
    const auto b = sim.block(theta, seed, first_block + i, opt.noiseless);
    run.record.append(demodulate(b.trace, set, run.calibration, &run.filter));
    if (opt.with_reference)
      append(run.reference, noise_reference(b.trace, ref_center, run.filter, run.decimation, run.calibration));
  }
  return run;
}

} // namespace optomech
