#pragma once

// Harmonic band powers of the homodyne signal for a thermal (Gaussian) state,
// computed symbolically.
//
// With x = X cos(wt) + Y sin(wt), X, Y independent unit normals, every power
// u^k is expanded into harmonics cos(nwt), sin(nwt) whose coefficients are
// polynomials in X, Y with exact rational coefficients. Band powers
// 1/2 E[C_n^2 + S_n^2] follow from the Gaussian moments
// E[X^a Y^b] = (a-1)!! (b-1)!! (a, b even), i.e. Isserlis pairings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/rational.hpp>

namespace optomech {

using Rational = boost::rational<std::int64_t>;

namespace isserlis {

/// Polynomial in X, Y: (a, b) -> coefficient of X^a Y^b.
using Poly = std::map<std::pair<int, int>, Rational>;

enum Kind : int { Cos = 0, Sin = 1 };

/// Trigonometric polynomial: (harmonic, kind) -> Poly coefficient.
using TrigPoly = std::map<std::pair<int, int>, Poly>;

inline void add_term(Poly& p, int a, int b, const Rational& c) {
  if (c.numerator() == 0) return;
  auto& slot = p[{a, b}];
  slot += c;
  if (slot.numerator() == 0) p.erase({a, b});
}

inline void add_scaled(TrigPoly& out, int harmonic, int kind, const Poly& p, const Rational& scale, int da, int db) {
  int sign = 1;
  if (harmonic < 0) {
    harmonic = -harmonic;
    if (kind == Sin) sign = -1;
  }
  if (harmonic == 0 && kind == Sin) return;
  auto& dst = out[{harmonic, kind}];
  for (const auto& [mono, c] : p) add_term(dst, mono.first + da, mono.second + db, c * scale * sign);
}

/// Multiplies by x = X cos(wt) + Y sin(wt) using product-to-sum identities.
inline TrigPoly times_x(const TrigPoly& in) {
  TrigPoly out;
  const Rational half(1, 2);
  for (const auto& [key, poly] : in) {
    const auto [m, kind] = key;
    if (kind == Cos) {
      // cos m cos 1 = 1/2 [cos(m+1) + cos(m-1)];  cos m sin 1 = 1/2 [sin(m+1) - sin(m-1)]
      add_scaled(out, m + 1, Cos, poly, half, 1, 0);
      add_scaled(out, m - 1, Cos, poly, half, 1, 0);
      add_scaled(out, m + 1, Sin, poly, half, 0, 1);
      add_scaled(out, m - 1, Sin, poly, -half, 0, 1);
    } else {
      // sin m cos 1 = 1/2 [sin(m+1) + sin(m-1)];  sin m sin 1 = 1/2 [cos(m-1) - cos(m+1)]
      add_scaled(out, m + 1, Sin, poly, half, 1, 0);
      add_scaled(out, m - 1, Sin, poly, half, 1, 0);
      add_scaled(out, m - 1, Cos, poly, half, 0, 1);
      add_scaled(out, m + 1, Cos, poly, -half, 0, 1);
    }
  }
  for (auto it = out.begin(); it != out.end();) it = it->second.empty() ? out.erase(it) : std::next(it);
  return out;
}

inline std::int64_t double_factorial_odd(int a) { // (a-1)!! for even a
  std::int64_t r = 1;
  for (int k = a - 1; k > 1; k -= 2) r *= k;
  return r;
}

/// E[p * q] for independent unit normals X, Y.
inline Rational expect_product(const Poly& p, const Poly& q) {
  Rational acc = 0;
  for (const auto& [m1, c1] : p)
    for (const auto& [m2, c2] : q) {
      const int a = m1.first + m2.first, b = m1.second + m2.second;
      if (a % 2 || b % 2) continue;
      acc += c1 * c2 * Rational(double_factorial_odd(a) * double_factorial_odd(b));
    }
  return acc;
}

} // namespace isserlis

inline constexpr int kMaxIsserlisOrder = 6;

/// Band powers as exact polynomials in lambda_eff, split into the amplitude
/// (even, cos(theta)) and phase (odd, sin(theta)) channels:
///   P_n(theta) = cos^2(theta) sum_p amplitude[n][p] le^p + sin^2(theta) sum_p phase[n][p] le^p.
/// Cross terms vanish because the amplitude channel only has even harmonics
/// and the phase channel only odd ones.
class IsserlisExpansion {
 public:
  explicit IsserlisExpansion(int order) : order_(order) {
    if (order < 1 || order > kMaxIsserlisOrder)
      throw std::invalid_argument("isserlis: order must be in [1, " + std::to_string(kMaxIsserlisOrder) + "]");
    using namespace isserlis;
    std::vector<TrigPoly> powers(order + 1);
    powers[0][{0, Cos}][{0, 0}] = Rational(1);
    for (int k = 1; k <= order; ++k) powers[k] = times_x(powers[k - 1]);
    powers_ = powers;

    amplitude_.assign(order + 1, std::vector<Rational>(2 * order + 1, Rational(0)));
    phase_ = amplitude_;
    for (int n = 1; n <= order; ++n)
      for (int k = 0; k <= order; ++k)
        for (int k2 = 0; k2 <= order; ++k2) {
          if ((k % 2) != (k2 % 2)) continue;
          Rational e = 0;
          for (int kind : {Cos, Sin}) {
            const auto i1 = powers[k].find({n, kind}), i2 = powers[k2].find({n, kind});
            if (i1 == powers[k].end() || i2 == powers[k2].end()) continue;
            e += expect_product(i1->second, i2->second);
          }
          if (e.numerator() == 0) continue;
          const Rational term = Rational(1, 2) * Rational(series_sign(k) * series_sign(k2)) * e;
          (k % 2 == 0 ? amplitude_ : phase_)[n][k + k2] += term;
        }
  }

  [[nodiscard]] int order() const { return order_; }

  /// Coefficient polynomial (index = power of lambda_eff) for harmonic n.
  [[nodiscard]] const std::vector<Rational>& amplitude_coefficients(int n) const { return amplitude_.at(n); }
  [[nodiscard]] const std::vector<Rational>& phase_coefficients(int n) const { return phase_.at(n); }

  /// Harmonic-n coefficient polynomial of x^k (cos or sin part).
  [[nodiscard]] isserlis::Poly harmonic_of_power(int k, int n, isserlis::Kind kind) const {
    const auto it = powers_.at(k).find({n, kind});
    return it == powers_.at(k).end() ? isserlis::Poly{} : it->second;
  }

  /// Mean band power at n * w_m, in units of the output gain squared.
  [[nodiscard]] double power(int n, double lambda_eff, double theta) const {
    if (n < 1 || n > order_) throw std::invalid_argument("isserlis: harmonic out of range");
    const double c = std::cos(theta), s = std::sin(theta);
    return c * c * eval(amplitude_[n], lambda_eff) + s * s * eval(phase_[n], lambda_eff);
  }

 private:
  static int series_sign(int k) { // coefficient of v^k in A (even k) or B (odd k)
    const int j = k / 2;
    return j % 2 ? -1 : 1;
  }
  static double eval(const std::vector<Rational>& coeff, double x) {
    double acc = 0.0;
    for (std::size_t p = coeff.size(); p-- > 0;)
      acc = acc * x + boost::rational_cast<double>(coeff[p]);
    return acc;
  }

  int order_;
  std::vector<isserlis::TrigPoly> powers_;
  std::vector<std::vector<Rational>> amplitude_, phase_;
};

struct HarmonicRow {
  int n = 0;
  double predicted = 0.0;   // relative to the strongest harmonic
  double measured = std::numeric_limits<double>::quiet_NaN();
  double uncertainty = std::numeric_limits<double>::quiet_NaN();
  double absolute = 0.0;    // predicted band power, output-gain units squared
};

struct HarmonicTable {
  double lambda_eff = 0.0;
  int order = 0;
  double theta = 0.0;
  std::vector<HarmonicRow> rows; // n = 1..order
};

/// Predicted harmonic powers, normalized to the strongest harmonic at this theta.
inline HarmonicTable isserlis_powers(double lambda_eff, int order, double theta) {
  if (!(lambda_eff >= 0.0 && lambda_eff < 1.0)) throw std::invalid_argument("isserlis_powers: need 0 <= lambda_eff < 1");
  const IsserlisExpansion ex(order);
  HarmonicTable t{lambda_eff, order, theta, {}};
  double peak = 0.0;
  for (int n = 1; n <= order; ++n) {
    HarmonicRow r;
    r.n = n;
    r.absolute = ex.power(n, lambda_eff, theta);
    peak = std::max(peak, r.absolute);
    t.rows.push_back(r);
  }
  for (auto& r : t.rows) r.predicted = peak > 0.0 ? r.absolute / peak : 0.0;
  return t;
}

} // namespace optomech
