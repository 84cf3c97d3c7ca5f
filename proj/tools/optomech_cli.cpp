// optomech: command-line front end. Every file written carries the run
// metadata header, so `optomech rerun FILE` regenerates it exactly.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "optomech/acceptance.hpp"
#include "optomech/optomech.hpp"

namespace fs = std::filesystem;
using namespace optomech;

namespace {

constexpr const char* kOutEnv = "OPTOMECH_OUT";

using Options = std::map<std::string, std::string>;

struct Request {
  std::string command;
  PhysicalParams params;
  std::uint64_t seed = 1;
  Options opts;
  fs::path out;
};

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v[i]);
  return s;
}

double to_double(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw std::invalid_argument("--" + key + ": not a number: '" + s + "'");
  return v;
}

// Angles accept "pi" multiples: "pi/4", "0.5pi".
double to_angle(const std::string& key, std::string s) {
  const auto p = s.find("pi");
  if (p == std::string::npos) return to_double(key, s);
  std::string pre = s.substr(0, p), post = s.substr(p + 2);
  double v = std::numbers::pi;
  if (!pre.empty()) v *= pre == "-" ? -1.0 : to_double(key, pre);
  if (!post.empty()) {
    if (post[0] != '/') throw std::invalid_argument("--" + key + ": bad angle '" + s + "'");
    v /= to_double(key, post.substr(1));
  }
  return v;
}

std::vector<double> to_list(const std::string& key, const std::string& s, bool angles = false) {
  std::vector<double> out;
  std::istringstream is(s);
  for (std::string part; std::getline(is, part, ',');) {
    part = trim(part);
    if (!part.empty()) out.push_back(angles ? to_angle(key, part) : to_double(key, part));
  }
  if (out.empty()) throw std::invalid_argument("--" + key + ": empty list");
  return out;
}

std::size_t to_count(const std::string& key, const std::string& s) {
  const double v = to_double(key, s);
  if (!(v >= 1.0) || v != std::floor(v)) throw std::invalid_argument("--" + key + ": expected a positive integer");
  return static_cast<std::size_t>(v);
}

// Normalizes command options in place: defaults are filled in and numeric
// values canonicalized, so the header records exactly what ran.
struct OptionReader {
  Options& o;
  double angle(const std::string& k, double def) {
    const auto it = o.find(k);
    const double v = it == o.end() ? def : to_angle(k, it->second);
    o[k] = num(v);
    return v;
  }
  double real(const std::string& k, double def) {
    const auto it = o.find(k);
    const double v = it == o.end() ? def : to_double(k, it->second);
    o[k] = num(v);
    return v;
  }
  std::size_t count(const std::string& k, std::size_t def) {
    const auto it = o.find(k);
    const std::size_t v = it == o.end() ? def : to_count(k, it->second);
    o[k] = std::to_string(v);
    return v;
  }
  std::vector<double> list(const std::string& k, const std::vector<double>& def, bool angles = false) {
    const auto it = o.find(k);
    const auto v = it == o.end() ? def : to_list(k, it->second, angles);
    o[k] = join(v);
    return v;
  }
  std::string word(const std::string& k, const std::string& def, const std::set<std::string>& allowed) {
    const auto it = o.find(k);
    const std::string v = it == o.end() ? def : it->second;
    if (!allowed.contains(v)) throw std::invalid_argument("--" + k + ": unsupported value '" + v + "'");
    o[k] = v;
    return v;
  }
};

// Tracks written files so a failed run leaves nothing half-done behind.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}
  fs::path add(const std::string& name) {
    if (!fs::exists(dir_)) {
      fs::create_directories(dir_);
      created_dir_ = true;
    }
    const fs::path p = dir_ / name;
    files_.push_back(p);
    return p;
  }
  void also(const fs::path& p) { files_.push_back(p); }
  void discard() {
    std::error_code ec;
    for (const auto& f : files_) fs::remove(f, ec);
    if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
    files_.clear();
  }
  [[nodiscard]] const std::vector<fs::path>& files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
  bool created_dir_ = false;
};

std::string tag(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

void write_text(const fs::path& p, const std::string& header, const std::string& body) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << header << body;
}

// ---------------------------------------------------------------------------
// Commands. Each normalizes its options first, then builds the header.

using Command = std::function<int(Request&, Outputs&)>;

RunMetadata metadata(const Request& r) {
  RunMetadata m;
  m.command = r.command;
  m.seed = r.seed;
  m.config = to_config(r.params);
  m.options = r.opts;
  return m;
}

int cmd_derive(Request& r, Outputs& out) {
  const std::string report = derive_report(r.params);
  write_text(out.add("derive.txt"), metadata(r).header(), report);
  std::cout << report;
  return 0;
}

int cmd_simulate(Request& r, Outputs& out) {
  OptionReader o{r.opts};
  const double theta = o.angle("theta", r.params.homodyne_angle);
  const std::size_t blocks = o.count("blocks", 1);
  const std::size_t first = o.count("first-block", 1) - 1;
  const std::string format = o.word("format", "csv", {"csv", "binary"});
  const std::string header = metadata(r).header();
  const Simulation sim(r.params);
  for (std::size_t i = 0; i < blocks; ++i) {
    const auto b = sim.block(theta, r.seed, first + i);
    const std::string stem = "trace_" + std::to_string(first + i);
    if (format == "csv") {
      write_trace_csv(out.add(stem + ".csv").string(), b.trace, header);
    } else {
      const fs::path p = out.add(stem + ".bin");
      out.also(p.string() + ".txt");
      write_trace_binary(p.string(), b.trace);
      write_text(out.add(stem + ".bin.meta"), header, "");
    }
  }
  std::cout << "wrote " << blocks << " block(s) of " << sim.block_samples() << " samples at theta = " << theta
            << " rad\n";
  return 0;
}

int cmd_spectrum(Request& r, Outputs& out) {
  OptionReader o{r.opts};
  const auto thetas = o.list("theta", {0.0, std::numbers::pi / 2}, true);
  const std::size_t blocks = o.count("blocks", 4);
  const double rbw = o.real("rbw", 20.0);
  const std::string header = metadata(r).header();
  const Simulation sim(r.params);
  const double fm = rad_to_hz(r.params.omega_m);
  SnrOptions opt;
  opt.rbw = rbw;
  std::ostringstream report;
  std::size_t first = 0;
  for (double theta : thetas) {
    auto acc = snr_accumulator(r.params.sample_rate, opt);
    for (std::size_t i = 0; i < blocks; ++i) acc.add(sim.block(theta, r.seed, first + i).trace.samples);
    first += blocks;
    const auto rep = snr_report(acc, fm, theta, sim.derived(), opt);
    write_spectrum_csv(out.add("spectrum_theta" + tag(theta) + ".csv").string(), rep.spectrum, header, 0.0,
                       std::min(rep.spectrum.max_frequency(), 6.0 * fm));
    report << "theta = " << theta << " rad\n" << summary(rep);
  }
  write_text(out.add("spectrum_summary.txt"), header, report.str());
  std::cout << report.str();
  return 0;
}

int cmd_angle_sweep(Request& r, Outputs& out) {
  OptionReader o{r.opts};
  const std::size_t points = o.count("points", 13);
  const std::size_t blocks = o.count("blocks", acceptance::kSweepBlocks);
  const double band = o.real("band", acceptance::kSweepBand);
  if (points < 5) throw std::invalid_argument("--points: need at least 5 angles");
  const std::string header = metadata(r).header();
  const Simulation sim(r.params);
  const double fm = rad_to_hz(r.params.omega_m);
  std::vector<double> th, p1, p2;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = std::numbers::pi * static_cast<double>(i) / static_cast<double>(points - 1);
    const auto pw = acceptance::detail::band_powers(sim, t, r.seed, i * blocks, blocks, acceptance::kSweepSegment,
                                                    {fm, 2.0 * fm}, band);
    th.push_back(t);
    p1.push_back(pw[0]);
    p2.push_back(pw[1]);
  }
  const auto fit = angle_sweep(th, p1, p2);
  std::ofstream csv(out.add("angle_sweep.csv"));
  csv << header << std::setprecision(10) << "# band_hz=" << band << "\n# power unit: trace units^2\n"
      << "theta_rad,power_wm,power_2wm,fit_wm,fit_2wm\n";
  for (std::size_t i = 0; i < th.size(); ++i) {
    const double s = std::sin(th[i]), c = std::cos(th[i]);
    csv << th[i] << ',' << p1[i] << ',' << p2[i] << ',' << fit.linear.amplitude * s * s + fit.linear.floor << ','
        << fit.quadratic.amplitude * c * c + fit.quadratic.floor << '\n';
  }
  if (!csv) throw std::runtime_error("failed writing angle_sweep.csv");
  std::ostringstream rep;
  rep << std::setprecision(5) << "w_m  band: A sin^2 + c,  A = " << fit.linear.amplitude << ", c = " << fit.linear.floor
      << ", R2 = " << fit.linear.r_squared << '\n'
      << "2w_m band: A cos^2 + c,  A = " << fit.quadratic.amplitude << ", c = " << fit.quadratic.floor
      << ", R2 = " << fit.quadratic.r_squared << '\n'
      << "linear suppression c/A = " << fit.suppression_db() << " dB\n";
  write_text(out.add("angle_sweep_summary.txt"), header, rep.str());
  std::cout << rep.str();
  return 0;
}

int cmd_harmonics(Request& r, Outputs& out) {
  OptionReader o{r.opts};
  const auto thetas = o.list("theta", {0.0, std::numbers::pi / 2}, true);
  const std::size_t blocks = o.count("blocks", acceptance::kHarmonicBlocks);
  const std::string header = metadata(r).header();
  const Simulation sim(r.params);
  const auto& p = sim.params();
  const double fm = rad_to_hz(p.omega_m);
  const int order = std::min(p.taylor_order, kMaxIsserlisOrder);
  std::size_t first = 0;
  for (double theta : thetas) {
    auto table = isserlis_powers(sim.derived().lambda_eff(), order, theta);
    std::vector<Spectrum> spectra;
    for (std::size_t i = 0; i < blocks; ++i)
      spectra.push_back(
          welch_psd(sim.block(theta, r.seed, first + i).trace.samples, p.sample_rate, acceptance::kHarmonicSegment));
    first += blocks;
    fill_measured(table, measure_harmonics(spectra, fm, order));
    write_harmonic_table_csv(out.add("harmonics_theta" + tag(theta) + ".csv").string(), table, header);
    std::cout << summary(table);
  }
  return 0;
}

int cmd_calibrate(Request& r, Outputs& out) {
  OptionReader o{r.opts};
  const double theta = o.angle("theta", std::numbers::pi / 4);
  const std::size_t blocks = o.count("blocks", 20);
  const std::string header = metadata(r).header();
  const Simulation sim(r.params);
  DemodRunOptions opt;
  opt.with_reference = false;
  const auto run = run_demodulation(sim, theta, r.seed, blocks, opt);
  const auto q = quad_estimators(run.record.P2, run.record.Q2);
  const auto c = calibrate_quadratic(run.record.Xl, q.X2);
  std::ostringstream rep;
  rep << std::setprecision(6) << "regression X2(2w_m) on X^2(w_m), sigma_th units\n"
      << "samples     = " << c.samples << '\n'
      << "slope       = " << c.slope << " +/- " << c.slope_error << '\n'
      << "offset      = " << c.offset << '\n'
      << "R2          = " << c.r_squared << '\n'
      << "gain        = " << c.gain << '\n'
      << "consistency = " << c.consistency() << '\n'
      << (c.uncalibratable ? "status      = uncalibratable\n" : "status      = ok\n");
  write_text(out.add("calibration.txt"), header, rep.str());
  std::cout << rep.str();
  return c.uncalibratable ? 1 : 0;
}

int cmd_condition(Request& r, Outputs& out) {
  OptionReader o{r.opts};
  const auto two_c = o.list("C2", {0.2, 1.0, 2.0});
  const double theta = o.angle("theta", std::numbers::pi / 4);
  const std::size_t blocks = o.count("blocks", acceptance::kSharedBlocks);
  const double window_per_sigma = o.real("window-per-sigma", acceptance::kWindowPerSigmaP);
  const std::size_t bins = o.count("bins", 60);
  const std::string header = metadata(r).header();
  const Simulation sim(r.params);
  const auto run = run_demodulation(sim, theta, r.seed, blocks);
  const double sigma_p = estimate_quadratic_uncertainty(run.reference);
  const double w = window_per_sigma * sigma_p;
  const auto aligned = align(run.record);
  std::ofstream csv(out.add("condition_summary.csv"));
  csv << header << "# units: sigma_th\n"
      << "two_C,window,accepted,acceptance_fraction,separation,separation_error,expected_separation,width,bimodal\n"
      << std::setprecision(8);
  std::ostringstream rep;
  rep << std::setprecision(4) << "sigma_P = " << sigma_p << ", window w = " << w << '\n';
  for (double c2 : two_c) {
    const auto e = condition(aligned, 0.5 * c2, w);
    const std::string t = tag(c2);
    write_ensemble_csv(out.add("ensemble_2C" + t + ".csv").string(), e, header);
    const double lim = 1.5 * std::sqrt(2.0 * c2) + 1.0;
    write_histogram_csv(out.add("histogram_2C" + t + ".csv").string(), histogram(e.Xr, -lim, lim, bins), header);
    const auto st = state_stats(e);
    csv << c2 << ',' << w << ',' << e.accepted() << ',' << e.acceptance_fraction() << ',' << st.separation << ','
        << st.separation_error << ',' << st.expected_separation << ',' << st.width << ',' << (st.bimodal ? 1 : 0)
        << '\n';
    rep << "2C = " << c2 << ": separation " << st.separation << " +/- " << st.separation_error << " (predicted "
        << st.expected_separation << "), width " << st.width << ", " << (st.bimodal ? "bimodal" : "unimodal") << ", "
        << e.accepted() << " samples\n";
  }
  if (!csv) throw std::runtime_error("failed writing condition_summary.csv");
  std::cout << rep.str();
  return 0;
}

int cmd_acceptance(Request& r, Outputs& out) {
  OptionReader o{r.opts};
  std::set<int> ids;
  if (r.opts.contains("only"))
    for (double v : o.list("only", {})) ids.insert(static_cast<int>(v));
  acceptance::Config cfg;
  cfg.seed = r.seed;
  std::ostringstream log;
  const auto results = acceptance::run(cfg, log, ids);
  const bool ok = acceptance::all_pass(results);
  log << (ok ? "ALL CRITERIA PASS\n" : "SOME CRITERIA FAILED\n");
  write_text(out.add("acceptance.txt"), metadata(r).header(), log.str());
  std::cout << log.str();
  return ok ? 0 : 1;
}

const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> table{
      {"derive", cmd_derive},           {"simulate", cmd_simulate}, {"spectrum", cmd_spectrum},
      {"angle-sweep", cmd_angle_sweep}, {"harmonics", cmd_harmonics}, {"condition", cmd_condition},
      {"calibrate", cmd_calibrate},     {"acceptance", cmd_acceptance}};
  return table;
}

int execute(Request& r) {
  const auto it = commands().find(r.command);
  if (it == commands().end()) throw std::invalid_argument("unknown command '" + r.command + "'");
  Outputs out(r.out);
  try {
    const int status = it->second(r, out);
    for (const auto& f : out.files()) std::cerr << "  " << f.string() << '\n';
    return status;
  } catch (...) {
    out.discard();
    throw;
  }
}

fs::path default_out() {
  const char* env = std::getenv(kOutEnv);
  return env && *env ? fs::path(env) : fs::path(".");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"optomech: nonlinear optomechanical readout simulator"};
  app.require_subcommand(1);

  std::string preset_name = "desk", config_path, out_dir;
  std::vector<std::string> settings;
  std::uint64_t seed = 1;
  auto common = [&](CLI::App* sc) {
    sc->add_option("--preset", preset_name, "Base parameter set: desk|paper")->capture_default_str();
    sc->add_option("--config", config_path, "key=value parameter file, applied over the preset");
    sc->add_option("--set", settings, "Parameter override key=value (repeatable)");
    sc->add_option("--seed", seed, "Random seed")->capture_default_str();
    sc->add_option("--out", out_dir, std::string("Output directory (default $") + kOutEnv + " or .)");
  };

  std::map<std::string, std::string> raw;
  auto opt = [&](CLI::App* sc, const std::string& name, const std::string& help) {
    sc->add_option("--" + name, raw[name], help);
  };

  std::map<std::string, CLI::App*> subs;
  auto sub = [&](const std::string& name, const std::string& help) {
    auto* sc = app.add_subcommand(name, help);
    common(sc);
    subs[name] = sc;
    return sc;
  };
  sub("derive", "Derived-parameter and regime report");
  {
    auto* sc = sub("simulate", "Write homodyne trace blocks");
    opt(sc, "theta", "Homodyne angle, rad ('pi/4' accepted)");
    opt(sc, "blocks", "Number of blocks");
    opt(sc, "first-block", "1-based index of the first block");
    opt(sc, "format", "csv|binary");
  }
  {
    auto* sc = sub("spectrum", "PSD and SNR at a list of homodyne angles");
    opt(sc, "theta", "Comma-separated angles, rad");
    opt(sc, "blocks", "Blocks averaged per angle");
    opt(sc, "rbw", "Resolution bandwidth, Hz");
  }
  {
    auto* sc = sub("angle-sweep", "w_m and 2w_m band powers over theta in [0, pi]");
    opt(sc, "points", "Number of angles");
    opt(sc, "blocks", "Blocks per angle");
    opt(sc, "band", "Band-power width, Hz");
  }
  {
    auto* sc = sub("harmonics", "Harmonic powers against the closed-form prediction");
    opt(sc, "theta", "Comma-separated angles, rad");
    opt(sc, "blocks", "Blocks per angle");
  }
  {
    auto* sc = sub("condition", "Post-selected ensembles for a list of 2C values");
    opt(sc, "C2", "Comma-separated 2C values, sigma_th^2 units");
    opt(sc, "theta", "Homodyne angle, rad");
    opt(sc, "blocks", "Blocks demodulated");
    opt(sc, "window-per-sigma", "Window width in units of the quadratic uncertainty");
    opt(sc, "bins", "Histogram bins");
  }
  {
    auto* sc = sub("calibrate", "Regression of the 2w_m estimator on X^2");
    opt(sc, "theta", "Homodyne angle, rad");
    opt(sc, "blocks", "Blocks demodulated");
  }
  {
    auto* sc = sub("acceptance", "Run the acceptance criteria");
    opt(sc, "only", "Comma-separated criterion numbers");
  }
  std::string rerun_file;
  {
    auto* sc = app.add_subcommand("rerun", "Regenerate an output from its embedded metadata");
    sc->add_option("file", rerun_file, "Any file written by optomech")->required();
    sc->add_option("--out", out_dir, "Output directory");
    subs["rerun"] = sc;
  }

  CLI11_PARSE(app, argc, argv);

  try {
    Request req;
    req.out = out_dir.empty() ? default_out() : fs::path(out_dir);
    if (subs["rerun"]->parsed()) {
      const auto m = read_metadata(rerun_file);
      std::istringstream cfg(m.config);
      req.command = m.command;
      req.params = parse_config(cfg);
      req.seed = m.seed;
      req.opts = m.options;
      return execute(req);
    }
    for (const auto& [name, sc] : subs)
      if (sc->parsed()) req.command = name;
    req.params = preset(preset_name);
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw std::runtime_error("cannot open config file '" + config_path + "'");
      req.params = parse_config(in, req.params);
    }
    for (const auto& kv : settings) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      apply_setting(req.params, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    validate(req.params);
    req.seed = seed;
    for (const auto& [k, v] : raw)
      if (!v.empty()) req.opts[k] = v;
    return execute(req);
  } catch (const std::exception& e) {
    std::cerr << "optomech: error: " << e.what() << '\n';
    return 2;
  }
}
