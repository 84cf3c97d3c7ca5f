#pragma once

// Weighted nonlinear least-squares fit of a Lorentzian peak on a flat floor:
//   S(f) = floor + (area/pi) * h / ((f - center)^2 + h^2),  FWHM = 2h,
// so `area` is the integrated peak power.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spectrum.hpp"

namespace optomech {

enum class FitFailure { NonConvergence, PeakBelowFloor, UnderResolved, InsufficientData };

inline const char* to_string(FitFailure f) {
  switch (f) {
    case FitFailure::NonConvergence: return "non-convergence";
    case FitFailure::PeakBelowFloor: return "peak below floor";
    case FitFailure::UnderResolved: return "under-resolved linewidth";
    case FitFailure::InsufficientData: return "insufficient data";
  }
  return "unknown";
}

class FitError : public std::runtime_error {
 public:
  FitError(FitFailure kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  [[nodiscard]] FitFailure kind() const { return kind_; }

 private:
  FitFailure kind_;
};

struct LorentzianFit {
  double center = 0.0, fwhm = 0.0, area = 0.0, floor = 0.0;
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero(); // order: center, fwhm, area, floor
  int iterations = 0;

  [[nodiscard]] double center_err() const { return std::sqrt(covariance(0, 0)); }
  [[nodiscard]] double fwhm_err() const { return std::sqrt(covariance(1, 1)); }
  [[nodiscard]] double area_err() const { return std::sqrt(covariance(2, 2)); }
  [[nodiscard]] double operator()(double f) const {
    const double h = 0.5 * fwhm, d = f - center;
    return floor + area / std::numbers::pi * h / (d * d + h * h);
  }
};

struct LorentzianOptions {
  double min_peak_to_floor = 4.0; // peak bin over floor estimate
  double min_fwhm_over_rbw = 3.0;
  double min_points_across = 5.0;
  int max_iterations = 200;
};

/// Fits the peak nearest `initial_center` using bins within +/- half_window Hz.
inline LorentzianFit fit_lorentzian(const Spectrum& s, double initial_center, double half_window,
                                    const LorentzianOptions& opt = {}) {
  const std::size_t a = s.bin(initial_center - half_window), b = s.bin(initial_center + half_window);
  if (b <= a || b - a + 1 < 8) throw FitError(FitFailure::InsufficientData, "fewer than 8 bins in the fit window");
  const std::size_t n = b - a + 1;
  Eigen::VectorXd f(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    f[static_cast<Eigen::Index>(i)] = s.frequency(a + i);
    y[static_cast<Eigen::Index>(i)] = s.psd[a + i];
  }

  std::vector<double> sorted(y.data(), y.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double floor0 = sorted[n / 5];
  Eigen::Index ipk = 0;
  const double peak = y.maxCoeff(&ipk);
  if (!(peak > opt.min_peak_to_floor * floor0) || peak <= 0.0)
    throw FitError(FitFailure::PeakBelowFloor, "peak/floor = " + std::to_string(peak / floor0));

  const double half = floor0 + 0.5 * (peak - floor0);
  Eigen::Index lo = ipk, hi = ipk;
  while (lo > 0 && y[lo] > half) --lo;
  while (hi < static_cast<Eigen::Index>(n) - 1 && y[hi] > half) ++hi;
  double h = std::max(0.5 * (f[hi] - f[lo]), 0.25 * s.df);
  double c = f[ipk];
  double area = std::max((peak - floor0) * std::numbers::pi * h, 1e-300);
  double fl = floor0;

  // params: c, log h, log area, floor
  Eigen::Vector4d p(c, std::log(h), std::log(area), fl);
  auto model = [&](const Eigen::Vector4d& q, Eigen::VectorXd& m, Eigen::MatrixXd* jac) {
    const double hh = std::exp(q[1]), aa = std::exp(q[2]);
    m.resize(static_cast<Eigen::Index>(n));
    if (jac) jac->resize(static_cast<Eigen::Index>(n), 4);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
      const double d = f[i] - q[0], den = d * d + hh * hh;
      const double lor = hh / den / std::numbers::pi;
      m[i] = q[3] + aa * lor;
      if (jac) {
        (*jac)(i, 0) = aa / std::numbers::pi * hh * 2.0 * d / (den * den);
        (*jac)(i, 1) = aa / std::numbers::pi * (d * d - hh * hh) / (den * den) * hh;
        (*jac)(i, 2) = aa * lor;
        (*jac)(i, 3) = 1.0;
      }
    }
  };

  Eigen::VectorXd m, w(static_cast<Eigen::Index>(n));
  Eigen::MatrixXd J;
  int iters = 0;
  bool converged = false;
  // Iteratively reweighted: Welch estimates have standard deviation proportional to their mean.
  for (int outer = 0; outer < 6; ++outer) {
    model(p, m, nullptr);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
      const double sd = std::max(std::abs(m[i]), 1e-12 * peak);
      w[i] = 1.0 / (sd * sd);
    }
    double lambda = 1e-3;
    model(p, m, &J);
    double chi2 = ((y - m).array().square() * w.array()).sum();
    converged = false;
    for (int it = 0; it < opt.max_iterations; ++it, ++iters) {
      const Eigen::MatrixXd jw = J.transpose() * w.asDiagonal();
      Eigen::Matrix4d jtj = jw * J;
      const Eigen::Vector4d g = jw * (y - m);
      Eigen::Matrix4d damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
      const Eigen::Vector4d step = damped.ldlt().solve(g);
      Eigen::Vector4d trial = p + step;
      Eigen::VectorXd mt;
      model(trial, mt, nullptr);
      const double chi2t = ((y - mt).array().square() * w.array()).sum();
      if (std::isfinite(chi2t) && chi2t <= chi2) {
        const double rel = (chi2 - chi2t) / std::max(chi2, 1e-300);
        p = trial;
        model(p, m, &J);
        chi2 = chi2t;
        lambda = std::max(lambda / 10.0, 1e-12);
        if (rel < 1e-12 || step.norm() < 1e-12) {
          converged = true;
          break;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e12) {
          converged = true; // no downhill direction left: at the minimum to working precision
          break;
        }
      }
    }
    if (!converged) break;
  }
  if (!converged) throw FitError(FitFailure::NonConvergence, "Levenberg-Marquardt iteration limit reached");

  LorentzianFit out;
  out.center = p[0];
  out.fwhm = 2.0 * std::exp(p[1]);
  out.area = std::exp(p[2]);
  out.floor = p[3];
  out.iterations = iters;
  if (out.center < f[0] || out.center > f[static_cast<Eigen::Index>(n) - 1])
    throw FitError(FitFailure::NonConvergence, "fitted centre left the fit window");

  model(p, m, &J);
  const Eigen::MatrixXd jw = J.transpose() * w.asDiagonal();
  const Eigen::Matrix4d jtj = jw * J;
  const double dof = std::max<double>(1.0, static_cast<double>(n) - 4.0);
  const double s2 = ((y - m).array().square() * w.array()).sum() / dof;
  const Eigen::Matrix4d cov_q = jtj.inverse() * s2;
  Eigen::Matrix4d t = Eigen::Matrix4d::Zero();
  t(0, 0) = 1.0;
  t(1, 1) = out.fwhm; // d fwhm / d log h
  t(2, 2) = out.area;
  t(3, 3) = 1.0;
  out.covariance = t * cov_q * t.transpose();

  if (out.fwhm < opt.min_fwhm_over_rbw * s.rbw)
    throw FitError(FitFailure::UnderResolved, "FWHM " + std::to_string(out.fwhm) + " Hz < " +
                                                  std::to_string(opt.min_fwhm_over_rbw) + " x RBW (" +
                                                  std::to_string(s.rbw) + " Hz)");
  if (out.fwhm < opt.min_points_across * s.df)
    throw FitError(FitFailure::UnderResolved, "fewer than " + std::to_string(opt.min_points_across) +
                                                  " bins across the FWHM");
  return out;
}

} // namespace optomech
