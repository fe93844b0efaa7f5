#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>
#include <variant>

#include <boost/math/special_functions/gamma.hpp>

#include "riskcap/error.hpp"
#include "riskcap/rng.hpp"

namespace riskcap {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Parameter value types. Each constructor enforces the family's invariants.
// ---------------------------------------------------------------------------

/// Annual event count rate.
class PoissonParams {
 public:
  explicit PoissonParams(double lambda) : lambda_(lambda) {
    detail::require(lambda > 0.0 && std::isfinite(lambda), "Poisson rate must be positive and finite");
  }
  double lambda() const noexcept { return lambda_; }
  double mean() const noexcept { return lambda_; }
  double variance() const noexcept { return lambda_; }

 private:
  double lambda_;
};

/// Lognormal on the log scale: ln X ~ Normal(mu, sigma_sq).
class LognormalParams {
 public:
  LognormalParams(double mu, double sigma_sq) : mu_(mu), sigma_sq_(sigma_sq) {
    detail::require(std::isfinite(mu), "lognormal mu must be finite");
    detail::require(sigma_sq > 0.0 && std::isfinite(sigma_sq), "lognormal sigma^2 must be positive and finite");
  }
  static LognormalParams from_sigma(double mu, double sigma) {
    detail::require(sigma > 0.0, "lognormal sigma must be positive");
    return {mu, sigma * sigma};
  }
  double mu() const noexcept { return mu_; }
  double sigma_sq() const noexcept { return sigma_sq_; }
  double sigma() const noexcept { return std::sqrt(sigma_sq_); }
  double mean() const noexcept { return std::exp(mu_ + 0.5 * sigma_sq_); }

 private:
  double mu_;
  double sigma_sq_;
};

/// Single-parameter Pareto on [threshold, inf): density (xi/L)(x/L)^(-xi-1).
class ParetoParams {
 public:
  ParetoParams(double xi, double threshold) : xi_(xi), threshold_(threshold) {
    detail::require(xi > 0.0 && std::isfinite(xi), "Pareto tail index must be positive and finite");
    detail::require(threshold > 0.0 && std::isfinite(threshold), "Pareto threshold must be positive and finite");
  }
  double xi() const noexcept { return xi_; }
  double threshold() const noexcept { return threshold_; }
  /// Infinite when xi <= 1.
  double mean() const noexcept { return xi_ > 1.0 ? threshold_ * xi_ / (xi_ - 1.0) : kPosInf; }

 private:
  double xi_;
  double threshold_;
};

/// Gamma with shape alpha and scale beta (mean alpha*beta, variance alpha*beta^2).
class GammaParams {
 public:
  GammaParams(double shape, double scale) : shape_(shape), scale_(scale) {
    detail::require(shape > 0.0 && std::isfinite(shape), "Gamma shape must be positive and finite");
    detail::require(scale > 0.0 && std::isfinite(scale), "Gamma scale must be positive and finite");
  }
  double shape() const noexcept { return shape_; }
  double scale() const noexcept { return scale_; }
  double mean() const noexcept { return shape_ * scale_; }
  double variance() const noexcept { return shape_ * scale_ * scale_; }

 private:
  double shape_;
  double scale_;
};

/// Scaled inverse chi-squared: density proportional to
/// x^(-dof/2 - 1) exp(-scale_beta / (2x)), i.e. x = scale_beta / W with
/// W ~ chi-squared(dof).
class InvChiSqParams {
 public:
  InvChiSqParams(double dof, double scale_beta) : dof_(dof), scale_beta_(scale_beta) {
    detail::require(dof > 0.0 && std::isfinite(dof), "inverse chi-squared dof must be positive and finite");
    detail::require(scale_beta > 0.0 && std::isfinite(scale_beta),
                    "inverse chi-squared scale must be positive and finite");
  }
  double dof() const noexcept { return dof_; }
  double scale_beta() const noexcept { return scale_beta_; }
  /// Finite only for dof > 2.
  double mean() const noexcept { return dof_ > 2.0 ? scale_beta_ / (dof_ - 2.0) : kPosInf; }

 private:
  double dof_;
  double scale_beta_;
};

class NormalParams {
 public:
  NormalParams(double mean, double variance) : mean_(mean), variance_(variance) {
    detail::require(std::isfinite(mean), "normal mean must be finite");
    detail::require(variance > 0.0 && std::isfinite(variance), "normal variance must be positive and finite");
  }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return variance_; }

 private:
  double mean_;
  double variance_;
};

enum class SeverityFamily { lognormal, pareto };

constexpr std::string_view to_string(SeverityFamily family) noexcept {
  return family == SeverityFamily::lognormal ? "lognormal" : "pareto";
}

using SeverityParams = std::variant<LognormalParams, ParetoParams>;

using FamilyParams =
    std::variant<PoissonParams, LognormalParams, ParetoParams, GammaParams, InvChiSqParams, NormalParams>;

// ---------------------------------------------------------------------------
// Samplers. All randomness is drawn from the caller's stream.
// ---------------------------------------------------------------------------

inline double sample_normal(const NormalParams& p, RngStream& rng) {
  return p.mean() + std::sqrt(p.variance()) * rng.normal();
}

/// Inversion by sequential search for small rates; Hormann's PTRS
/// transformed rejection otherwise.
inline std::uint64_t sample_poisson(const PoissonParams& p, RngStream& rng) {
  const double lambda = p.lambda();
  if (lambda < 10.0) {
    const double u = rng.uniform();
    double prob = std::exp(-lambda);
    double cdf = prob;
    std::uint64_t k = 0;
    // The cap guards the loop against u rounding above the computed CDF.
    while (u > cdf && k < 1000) {
      ++k;
      prob *= lambda / static_cast<double>(k);
      cdf += prob;
    }
    return k;
  }

  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::fabs(u);
    const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -lambda + k * loglam - boost::math::lgamma(k + 1.0)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

inline double sample_lognormal(const LognormalParams& p, RngStream& rng) {
  return std::exp(p.mu() + std::sqrt(p.sigma_sq()) * rng.normal());
}

/// Inverse CDF: x = L (1 - u)^(-1/xi) for u in [0, 1).
inline double pareto_from_uniform(const ParetoParams& p, double u) noexcept {
  return p.threshold() * std::pow(1.0 - u, -1.0 / p.xi());
}

inline double sample_pareto(const ParetoParams& p, RngStream& rng) {
  return pareto_from_uniform(p, rng.uniform());
}

inline double sample_severity(const SeverityParams& p, RngStream& rng) {
  if (const auto* ln = std::get_if<LognormalParams>(&p)) return sample_lognormal(*ln, rng);
  return sample_pareto(std::get<ParetoParams>(p), rng);
}

/// Marsaglia-Tsang squeeze/rejection. Shapes below one are boosted:
/// G(a) = G(a + 1) * U^(1/a).
inline double sample_gamma(const GammaParams& p, RngStream& rng) {
  const double shape = p.shape();
  if (shape < 1.0) {
    const double boosted = sample_gamma(GammaParams(shape + 1.0, p.scale()), rng);
    const double draw = boosted * std::exp(std::log(rng.uniform_open()) / shape);
    // Underflow for tiny shapes would break strict positivity.
    return draw > 0.0 ? draw : std::numeric_limits<double>::denorm_min();
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = rng.normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = rng.uniform_open();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v * p.scale();
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v * p.scale();
  }
}

/// sigma^2 = scale_beta / W, W ~ chi-squared(dof) = Gamma(dof/2, 2).
inline double sample_inv_chi_sq(const InvChiSqParams& p, RngStream& rng) {
  const double w = sample_gamma(GammaParams(0.5 * p.dof(), 2.0), rng);
  return p.scale_beta() / w;
}

// ---------------------------------------------------------------------------
// Log densities. Points outside the support give negative infinity.
// ---------------------------------------------------------------------------

inline double log_density(const PoissonParams& p, double n) {
  if (n < 0.0 || n != std::floor(n) || !std::isfinite(n)) return kNegInf;
  return -p.lambda() + n * std::log(p.lambda()) - boost::math::lgamma(n + 1.0);
}

inline double log_density(const LognormalParams& p, double x) {
  if (!(x > 0.0) || !std::isfinite(x)) return kNegInf;
  const double z = std::log(x) - p.mu();
  return -std::log(x) - 0.5 * std::log(2.0 * std::numbers::pi * p.sigma_sq()) - z * z / (2.0 * p.sigma_sq());
}

inline double log_density(const ParetoParams& p, double x) {
  if (!(x >= p.threshold()) || !std::isfinite(x)) return kNegInf;
  return std::log(p.xi()) - std::log(p.threshold()) - (p.xi() + 1.0) * std::log(x / p.threshold());
}

inline double log_density(const GammaParams& p, double x) {
  if (!(x > 0.0) || !std::isfinite(x)) return kNegInf;
  return (p.shape() - 1.0) * std::log(x) - x / p.scale() - boost::math::lgamma(p.shape()) -
         p.shape() * std::log(p.scale());
}

inline double log_density(const InvChiSqParams& p, double x) {
  if (!(x > 0.0) || !std::isfinite(x)) return kNegInf;
  const double half_nu = 0.5 * p.dof();
  return half_nu * std::log(0.5 * p.scale_beta()) - boost::math::lgamma(half_nu) - (half_nu + 1.0) * std::log(x) -
         p.scale_beta() / (2.0 * x);
}

inline double log_density(const NormalParams& p, double x) {
  if (!std::isfinite(x)) return kNegInf;
  const double z = x - p.mean();
  return -0.5 * std::log(2.0 * std::numbers::pi * p.variance()) - z * z / (2.0 * p.variance());
}

inline double log_density(const FamilyParams& p, double x) {
  return std::visit([x](const auto& params) { return log_density(params, x); }, p);
}

}  // namespace riskcap
