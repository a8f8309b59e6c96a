#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "actreg/error.hpp"

/// Special functions and distribution tails used for p-values. Internal
/// tolerance is 1e-10 or tighter throughout.
namespace actreg::stats::special {

namespace detail {

/// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 1000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("incomplete_beta: x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(F > f) for an F(d1, d2) variable.
inline double f_survival(double f, double d1, double d2) {
  if (!(f > 0.0)) return 1.0;
  if (std::isinf(f)) return 0.0;
  return std::clamp(incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)), 0.0, 1.0);
}

/// Two-sided P(|T| > |t|) for Student's t with df degrees of freedom.
inline double t_two_sided(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return std::clamp(incomplete_beta(df / 2.0, 0.5, df / (df + t * t)), 0.0, 1.0);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// Adaptive Gauss-Kronrod (7/15) quadrature on [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b, double abs_tol = 1e-12,
                        int max_depth = 40) {
  static constexpr double xk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                   0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                   0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                   0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
  static constexpr double wk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                   0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                   0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                   0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
  static constexpr double wg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                   0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

  std::function<double(double, double, double, int)> step = [&](double lo, double hi, double tol, int depth) {
    const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    const double fc = f(c);
    double kronrod = wk[7] * fc;
    double gauss = wg[3] * fc;
    for (int j = 0; j < 7; ++j) {
      const double dx = h * xk[j];
      const double s = f(c - dx) + f(c + dx);
      kronrod += wk[j] * s;
      if (j % 2 == 1) gauss += wg[j / 2] * s;
    }
    kronrod *= h;
    gauss *= h;
    if (std::abs(kronrod - gauss) <= tol || depth >= max_depth) return kronrod;
    return step(lo, c, tol / 2.0, depth + 1) + step(c, hi, tol / 2.0, depth + 1);
  };
  return step(a, b, abs_tol, 0);
}

/// CDF of the range of k independent standard normals.
inline double range_cdf_infinite_df(double w, int k) {
  if (!(w > 0.0)) return 0.0;
  const double z_hi = 8.5;
  const double value = integrate(
      [&](double z) {
        const double d = normal_cdf(z) - normal_cdf(z - w);
        return normal_pdf(z) * std::pow(std::max(d, 0.0), k - 1);
      },
      -z_hi, z_hi, 1e-13);
  return std::clamp(k * value, 0.0, 1.0);
}

/// CDF of the studentized range Q(k, df): P(Q <= q). Integrates the
/// infinite-df range CDF against the density of sqrt(chi2_df / df).
inline double studentized_range_cdf(double q, int k, double df) {
  if (k < 2) throw ValidationError("studentized range: need k >= 2");
  if (!(df > 0.0)) throw ValidationError("studentized range: df must be positive");
  if (!(q > 0.0)) return 0.0;
  if (std::isinf(q)) return 1.0;
  if (df > 25000.0) return range_cdf_infinite_df(q, k);

  const double log_norm = 0.5 * df * std::log(df) - std::lgamma(0.5 * df) - (0.5 * df - 1.0) * std::numbers::ln2;
  auto density = [&](double s) {
    if (s <= 0.0) return 0.0;
    return std::exp(log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s);
  };
  const double spread = 10.0 / std::sqrt(df);
  const double lo = std::max(0.0, 1.0 - spread);
  const double hi = 1.0 + spread + (df < 4.0 ? 10.0 : 0.0);
  const double mode = df > 1.0 ? std::sqrt((df - 1.0) / df) : lo;
  auto integrand = [&](double s) { return density(s) * range_cdf_infinite_df(q * s, k); };
  double value = integrate(integrand, lo, std::max(lo, std::min(mode, hi)), 1e-11) +
                 integrate(integrand, std::max(lo, std::min(mode, hi)), hi, 1e-11);
  return std::clamp(value, 0.0, 1.0);
}

/// Upper-tail quantile: q such that P(Q > q) = alpha.
inline double studentized_range_critical(double alpha, int k, double df) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("studentized range: alpha must lie in (0, 1)");
  double lo = 0.0, hi = 1.0;
  while (1.0 - studentized_range_cdf(hi, k, df) > alpha) hi *= 2.0;
  for (int i = 0; i < 100 && hi - lo > 1e-10; ++i) {
    const double mid = 0.5 * (lo + hi);
    (1.0 - studentized_range_cdf(mid, k, df) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace actreg::stats::special
