#pragma once

// Reference computations for the tests. Nothing here calls into riskcap or
// Boost: special functions are evaluated from series, continued fractions
// and quadrature so that agreement with the library is a real cross-check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

namespace oracle {

/// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, std::size_t n = 20000) {
  if (n % 2) ++n;
  const double h = (b - a) / static_cast<double>(n);
  double s = f(a) + f(b);
  for (std::size_t i = 1; i < n; ++i) s += f(a + h * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a, sum = term;
    for (int k = 1; k < 100000; ++k) {
      term *= x / (a + k);
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-17) break;
    }
    return sum * std::exp(log_prefix);
  }
  // Lentz continued fraction for Q(a, x).
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(log_prefix) * h;
}

/// Inverse of a monotone increasing CDF by bisection on [lo, hi].
inline double invert(const std::function<double(double)>& cdf, double p, double lo, double hi) {
  for (int i = 0; i < 300; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
    if (hi - lo <= 1e-15 * std::max(1.0, std::fabs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

inline double gamma_cdf(double shape, double scale, double x) { return gamma_p(shape, x / scale); }

inline double gamma_quantile(double shape, double scale, double p) {
  double hi = shape * scale + 50.0 * std::sqrt(shape) * scale + 50.0 * scale;
  return invert([&](double x) { return gamma_cdf(shape, scale, x); }, p, 0.0, hi);
}

inline double chi_squared_quantile(double dof, double p) { return gamma_quantile(0.5 * dof, 2.0, p); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_quantile(double p) { return invert(normal_cdf, p, -40.0, 40.0); }

inline double student_t_density(double dof, double t) {
  return std::exp(std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) - 0.5 * std::log(dof * std::numbers::pi) -
                  0.5 * (dof + 1.0) * std::log1p(t * t / dof));
}

/// CDF by quadrature of the density from 0, via the substitution t = tan(u)
/// which keeps heavy tails on a finite range.
inline double student_t_cdf(double dof, double t) {
  const double u_end = std::atan(t);
  const double half = simpson(
      [&](double u) {
        const double c = std::cos(u);
        return student_t_density(dof, std::tan(u)) / (c * c);
      },
      0.0, u_end, 4000);
  return 0.5 + half;
}

inline double student_t_quantile(double dof, double p) {
  return invert([&](double t) { return student_t_cdf(dof, t); }, p, -1e6, 1e6);
}

/// Order-statistic interval for the q-quantile of K draws at level gamma,
/// evaluated in long double with the integer snap applied to exact products.
inline std::pair<long long, long long> quantile_ci_indices(long long K, double q, double gamma) {
  const long double z = normal_quantile(0.5 + 0.5 * gamma);
  const long double kq = static_cast<long double>(K) * q;
  const long double kq_snapped = std::fabs(kq - std::roundl(kq)) < 1e-7L ? std::roundl(kq) : kq;
  const long double half = z * std::sqrt(static_cast<long double>(K) * q * (1.0L - q));
  long long r = static_cast<long long>(std::floor(kq_snapped - half));
  long long s = static_cast<long long>(std::ceil(kq_snapped + half));
  r = std::clamp(r, 1LL, K);
  s = std::clamp(s, 1LL, K);
  return {r, s};
}

/// Lognormal quantile exp(mu + sigma z_p).
inline double lognormal_quantile(double mu, double sigma, double p) { return std::exp(mu + sigma * normal_quantile(p)); }

/// Largest gap between an empirical CDF of `xs` and `cdf`.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

/// 1% critical value of the one-sample KS statistic.
inline double ks_critical_1pct(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double variance(const std::vector<double>& xs) {
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

inline double rel_diff(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(a), std::fabs(b)); }

// Values produced by the routines above (and cross-checked against an
// independent scientific-computing package), frozen so a regression in the
// oracle itself would also be caught.
namespace frozen {
inline constexpr double gamma_6_half_lower = 1.10095;     // Gamma(6, 1/2), 0.025
inline constexpr double gamma_6_half_upper = 5.83417;     // Gamma(6, 1/2), 0.975
inline constexpr double gamma_4004_lower = 9.70232;       // Gamma(4004, 1/400), 0.025
inline constexpr double gamma_4004_upper = 10.32241;      // Gamma(4004, 1/400), 0.975
inline constexpr double gamma_3_third_above_1 = 0.42319;  // Pr[Gamma(3, 1/3) > 1]
inline constexpr double chi2_4_median = 3.35669;
inline constexpr double z_975 = 1.959964;
inline constexpr double lognormal_1_2_q999 = 1313.518;    // exp(1 + 2 z_0.999)
}  // namespace frozen

}  // namespace oracle
