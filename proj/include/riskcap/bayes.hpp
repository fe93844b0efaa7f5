#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "riskcap/distributions.hpp"
#include "riskcap/error.hpp"
#include "riskcap/rng.hpp"

namespace riskcap {

/// Normal-inverse-chi-squared prior/posterior for the lognormal (mu, sigma^2):
/// sigma^2 ~ InvChiSq(dof_nu, scale_beta), mu | sigma^2 ~ N(loc_theta, sigma^2 / prec_phi).
class NIXParams {
 public:
  NIXParams(double dof_nu, double scale_beta, double loc_theta, double prec_phi)
      : dof_nu_(dof_nu), scale_beta_(scale_beta), loc_theta_(loc_theta), prec_phi_(prec_phi) {
    detail::require(std::isfinite(dof_nu), "NIX dof must be finite");
    detail::require(scale_beta > 0.0 && std::isfinite(scale_beta), "NIX scale beta must be positive and finite");
    detail::require(std::isfinite(loc_theta), "NIX location theta must be finite");
    detail::require(prec_phi > 0.0 && std::isfinite(prec_phi), "NIX precision phi must be positive and finite");
  }
  double dof_nu() const noexcept { return dof_nu_; }
  double scale_beta() const noexcept { return scale_beta_; }
  double loc_theta() const noexcept { return loc_theta_; }
  double prec_phi() const noexcept { return prec_phi_; }

 private:
  double dof_nu_;
  double scale_beta_;
  double loc_theta_;
  double prec_phi_;
};

/// Location-scale Student t: (mu - center) / scale_gamma ~ t(dof).
class ShiftedTParams {
 public:
  ShiftedTParams(double dof, double center, double scale_gamma)
      : dof_(dof), center_(center), scale_gamma_(scale_gamma) {
    detail::require(dof > 0.0 && std::isfinite(dof), "t dof must be positive and finite");
    detail::require(std::isfinite(center), "t center must be finite");
    detail::require(scale_gamma > 0.0 && std::isfinite(scale_gamma), "t scale must be positive and finite");
  }
  double dof() const noexcept { return dof_; }
  double center() const noexcept { return center_; }
  double scale_gamma() const noexcept { return scale_gamma_; }

 private:
  double dof_;
  double center_;
  double scale_gamma_;
};

inline double log_density(const ShiftedTParams& p, double x) {
  if (!std::isfinite(x)) return kNegInf;
  const double nu = p.dof();
  const double z = (x - p.center()) / p.scale_gamma();
  return boost::math::lgamma(0.5 * (nu + 1.0)) - boost::math::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi) - std::log(p.scale_gamma()) -
         0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

struct Interval {
  double lower = kNegInf;
  double upper = kPosInf;

  bool contains(double x) const noexcept { return x > lower && x < upper; }
  bool unbounded() const noexcept { return lower == kNegInf && upper == kPosInf; }
};

enum class ParameterFamily { poisson_rate, lognormal, pareto_tail };

/// One parameter draw: lambda, (mu, sigma^2), or xi.
struct ParameterDraw {
  std::array<double, 2> values{};
  std::size_t size = 0;

  double operator[](std::size_t i) const noexcept { return values[i]; }
};

/// Conjugate posterior over one parameter block, optionally truncated.
class PosteriorState {
 public:
  static PosteriorState poisson_rate(const GammaParams& g) { return PosteriorState(ParameterFamily::poisson_rate, g, 0.0); }
  static PosteriorState lognormal(const NIXParams& nix) { return PosteriorState(ParameterFamily::lognormal, nix, 0.0); }
  static PosteriorState pareto_tail(const GammaParams& g, double threshold) {
    detail::require(threshold > 0.0 && std::isfinite(threshold), "Pareto threshold must be positive and finite");
    return PosteriorState(ParameterFamily::pareto_tail, g, threshold);
  }

  ParameterFamily family() const noexcept { return family_; }
  std::size_t dimension() const noexcept { return family_ == ParameterFamily::lognormal ? 2 : 1; }

  const GammaParams& gamma() const {
    if (const auto* g = std::get_if<GammaParams>(&payload_)) return *g;
    throw std::invalid_argument("posterior payload is not Gamma");
  }
  const NIXParams& nix() const {
    if (const auto* n = std::get_if<NIXParams>(&payload_)) return *n;
    throw std::invalid_argument("posterior payload is not Normal-inverse-chi-squared");
  }

  /// Pareto threshold L; zero for the other families.
  double threshold() const noexcept { return threshold_; }

  const Interval& bounds(std::size_t i) const { return bounds_.at(i); }
  bool truncated() const noexcept {
    return !(bounds_[0].unbounded() && bounds_[1].unbounded());
  }
  /// Posterior mass of the truncation region (1 when untruncated). Exact for
  /// Gamma payloads, a probe estimate otherwise.
  double acceptance() const noexcept { return acceptance_; }

  std::vector<std::string_view> parameter_names() const {
    switch (family_) {
      case ParameterFamily::poisson_rate:
        return {"lambda"};
      case ParameterFamily::lognormal:
        return {"mu", "sigma_sq"};
      case ParameterFamily::pareto_tail:
        return {"xi"};
    }
    return {};
  }

  bool in_bounds(const ParameterDraw& d) const noexcept {
    for (std::size_t i = 0; i < d.size; ++i) {
      if (!bounds_[i].contains(d[i])) return false;
    }
    return true;
  }

 private:
  template <class Payload>
  PosteriorState(ParameterFamily family, const Payload& payload, double threshold)
      : family_(family), payload_(payload), threshold_(threshold) {}

  friend PosteriorState truncate_posterior(const PosteriorState&, std::span<const Interval>);

  ParameterFamily family_;
  std::variant<GammaParams, NIXParams> payload_;
  double threshold_;
  std::array<Interval, 2> bounds_{};
  double acceptance_ = 1.0;
};

namespace detail {

inline double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sum of squared deviations about the mean (two-pass).
inline double centered_sum_sq(std::span<const double> xs, double mean) {
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return s;
}

inline double sum_log_excess(std::span<const double> severities, double threshold) {
  detail::require(threshold > 0.0 && std::isfinite(threshold), "Pareto threshold must be positive and finite");
  double s = 0.0;
  for (double x : severities) {
    if (!(x >= threshold)) throw std::invalid_argument("severity below threshold");
    s += std::log(x / threshold);
  }
  return s;
}

inline std::uint64_t total_count(std::span<const std::uint64_t> counts) {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conjugate updates
// ---------------------------------------------------------------------------

/// Gamma prior on the Poisson rate updated with annual counts.
inline GammaParams update_poisson_gamma(const GammaParams& prior, std::span<const std::uint64_t> counts) {
  const double n = static_cast<double>(counts.size());
  const double total = static_cast<double>(detail::total_count(counts));
  return {prior.shape() + total, prior.scale() / (1.0 + prior.scale() * n)};
}

/// Posterior under a flat prior on lambda: Gamma(sum + 1, 1/n).
inline GammaParams noninformative_poisson(std::span<const std::uint64_t> counts) {
  if (counts.empty()) throw InsufficientDataError("insufficient data: at least one observation year is required");
  const double n = static_cast<double>(counts.size());
  return {static_cast<double>(detail::total_count(counts)) + 1.0, 1.0 / n};
}

/// Normal-inverse-chi-squared update with log-severities Y.
///
/// The scale update is evaluated in the completed-square form
/// beta + sum (Y - Ybar)^2 + phi n (Ybar - theta)^2 / (phi + n), which is
/// algebraically the textbook expression but stays non-negative in floating
/// point.
inline NIXParams update_lognormal(const NIXParams& prior, std::span<const double> log_severities) {
  if (log_severities.empty()) return prior;
  const double n = static_cast<double>(log_severities.size());
  const double ybar = detail::mean_of(log_severities);
  const double sum_sq = detail::centered_sum_sq(log_severities, ybar);
  const double phi = prior.prec_phi();
  const double theta = prior.loc_theta();
  const double diff = ybar - theta;
  return {prior.dof_nu() + n, prior.scale_beta() + sum_sq + phi * n * diff * diff / (phi + n),
          (phi * theta + n * ybar) / (phi + n), phi + n};
}

/// Posterior under a flat prior on (mu, sigma^2): (n - 3, n * var(Y), Ybar, n).
inline NIXParams noninformative_lognormal(std::span<const double> log_severities) {
  if (log_severities.size() < 4) {
    throw InsufficientDataError(
        "insufficient data for non-informative lognormal posterior: need at least 4 severities, got " +
        std::to_string(log_severities.size()));
  }
  const auto [lo, hi] = std::minmax_element(log_severities.begin(), log_severities.end());
  if (*lo == *hi) throw InsufficientDataError("insufficient data: log-severities have zero sample variance");
  const double n = static_cast<double>(log_severities.size());
  const double ybar = detail::mean_of(log_severities);
  return {n - 3.0, detail::centered_sum_sq(log_severities, ybar), ybar, n};
}

/// Marginal posterior of mu: t(dof) shifted to theta, scaled by sqrt(beta / (phi nu)).
inline ShiftedTParams marginal_mu(const NIXParams& posterior) {
  if (!(posterior.dof_nu() > 0.0)) throw std::invalid_argument("marginal of mu requires positive dof");
  return {posterior.dof_nu(), posterior.loc_theta(),
          std::sqrt(posterior.scale_beta() / (posterior.prec_phi() * posterior.dof_nu()))};
}

/// Gamma prior on the Pareto tail index updated with severities above L.
inline GammaParams update_pareto(const GammaParams& prior, std::span<const double> severities, double threshold) {
  const double sum_log = detail::sum_log_excess(severities, threshold);
  if (severities.empty()) return prior;
  return {prior.shape() + static_cast<double>(severities.size()), 1.0 / (1.0 / prior.scale() + sum_log)};
}

/// Posterior under a flat prior on xi: Gamma(n + 1, 1 / sum ln(X/L)).
inline GammaParams noninformative_pareto(std::span<const double> severities, double threshold) {
  if (severities.empty()) throw InsufficientDataError("insufficient data: no severities above threshold");
  const double sum_log = detail::sum_log_excess(severities, threshold);
  if (!(sum_log > 0.0)) throw InsufficientDataError("insufficient data: all severities equal the threshold");
  return {static_cast<double>(severities.size()) + 1.0, 1.0 / sum_log};
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Acceptance below this rate makes rejection sampling from a truncated
/// posterior impractical.
inline constexpr double kMinTruncationAcceptance = 1e-4;

namespace detail {

inline ParameterDraw sample_untruncated(const PosteriorState& state, RngStream& rng) {
  if (state.family() == ParameterFamily::lognormal) {
    const NIXParams& nix = state.nix();
    if (!(nix.dof_nu() > 0.0)) throw std::invalid_argument("lognormal posterior is not samplable: dof must be positive");
    const double sigma_sq = sample_inv_chi_sq(InvChiSqParams(nix.dof_nu(), nix.scale_beta()), rng);
    const double mu = nix.loc_theta() + std::sqrt(sigma_sq / nix.prec_phi()) * rng.normal();
    return {{mu, sigma_sq}, 2};
  }
  return {{sample_gamma(state.gamma(), rng), 0.0}, 1};
}

}  // namespace detail

/// One parameter draw from the posterior, by rejection when truncated.
inline ParameterDraw sample_posterior(const PosteriorState& state, RngStream& rng) {
  if (!state.truncated()) return detail::sample_untruncated(state, rng);
  constexpr std::size_t kMaxAttempts = static_cast<std::size_t>(100.0 / kMinTruncationAcceptance);
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    ParameterDraw d = detail::sample_untruncated(state, rng);
    if (state.in_bounds(d)) return d;
  }
  throw ComputationError("truncated posterior sampling exhausted its attempt budget");
}

namespace detail {

inline double gamma_mass(const GammaParams& g, const Interval& b) {
  const boost::math::gamma_distribution<double> dist(g.shape(), g.scale());
  const double lo = b.lower > 0.0 ? boost::math::cdf(dist, b.lower) : 0.0;
  const double hi = std::isfinite(b.upper) ? (b.upper > 0.0 ? boost::math::cdf(dist, b.upper) : 0.0) : 1.0;
  return hi - lo;
}

}  // namespace detail

/// Restricts the posterior to the given per-parameter bounds (intersected with
/// any existing truncation). Throws ComputationError when the region carries
/// less than kMinTruncationAcceptance of the posterior mass.
inline PosteriorState truncate_posterior(const PosteriorState& state, std::span<const Interval> bounds) {
  if (bounds.size() != state.dimension()) {
    throw std::invalid_argument("truncation bounds must match the posterior dimension");
  }
  PosteriorState out = state;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (!(bounds[i].lower < bounds[i].upper) || std::isnan(bounds[i].lower) || std::isnan(bounds[i].upper)) {
      throw std::invalid_argument("truncation bounds require lower < upper");
    }
    out.bounds_[i].lower = std::max(out.bounds_[i].lower, bounds[i].lower);
    out.bounds_[i].upper = std::min(out.bounds_[i].upper, bounds[i].upper);
    if (!(out.bounds_[i].lower < out.bounds_[i].upper)) {
      throw ComputationError("truncation region is empty after intersecting with existing bounds");
    }
  }
  if (!out.truncated()) {
    out.acceptance_ = 1.0;
    return out;
  }
  if (out.family_ == ParameterFamily::lognormal) {
    constexpr std::size_t kProbe = 100000;
    RngStream probe(0x7E57AB1E5EEDULL, 0);
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < kProbe; ++i) {
      if (out.in_bounds(detail::sample_untruncated(out, probe))) ++accepted;
    }
    out.acceptance_ = static_cast<double>(accepted) / static_cast<double>(kProbe);
  } else {
    out.acceptance_ = detail::gamma_mass(out.gamma(), out.bounds_[0]);
  }
  if (out.acceptance_ < kMinTruncationAcceptance) {
    throw ComputationError("truncation region has negligible posterior mass (" + std::to_string(out.acceptance_) + ")");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

/// Unnormalized for truncated states; outside the bounds gives -inf.
inline double log_posterior_density(const PosteriorState& state, const ParameterDraw& theta) {
  if (theta.size != state.dimension()) throw std::invalid_argument("parameter dimension mismatch");
  if (!state.in_bounds(theta)) return kNegInf;
  if (state.family() == ParameterFamily::lognormal) {
    const NIXParams& nix = state.nix();
    if (!(nix.dof_nu() > 0.0)) throw std::invalid_argument("lognormal posterior density requires positive dof");
    const double sigma_sq = theta[1];
    if (!(sigma_sq > 0.0)) return kNegInf;
    return log_density(InvChiSqParams(nix.dof_nu(), nix.scale_beta()), sigma_sq) +
           log_density(NormalParams(nix.loc_theta(), sigma_sq / nix.prec_phi()), theta[0]);
  }
  return log_density(state.gamma(), theta[0]);
}

/// Posterior mode, clamped into the truncation region (both families are
/// unimodal, so clamping gives the constrained maximum).
///
/// Lognormal: the joint density is proportional to
/// s^(-(nu+3)/2) exp(-(beta + phi (mu - theta)^2) / (2 s)) in (mu, s = sigma^2),
/// maximized at mu = theta, s = beta / (nu + 3).
inline ParameterDraw posterior_mode(const PosteriorState& state) {
  if (state.family() == ParameterFamily::lognormal) {
    const NIXParams& nix = state.nix();
    if (!(nix.dof_nu() + 3.0 > 0.0)) throw std::invalid_argument("lognormal posterior mode undefined for dof <= -3");
    const Interval& bm = state.bounds(0);
    const Interval& bs = state.bounds(1);
    const double mu = std::clamp(nix.loc_theta(), bm.lower, bm.upper);
    const double d = mu - nix.loc_theta();
    const double s = (nix.scale_beta() + nix.prec_phi() * d * d) / (nix.dof_nu() + 3.0);
    return {{mu, std::clamp(s, bs.lower, bs.upper)}, 2};
  }
  const GammaParams& g = state.gamma();
  const double unconstrained = g.shape() >= 1.0 ? (g.shape() - 1.0) * g.scale() : 0.0;
  const Interval& b = state.bounds(0);
  return {{std::clamp(unconstrained, std::max(b.lower, 0.0), b.upper), 0.0}, 1};
}

/// Marginal posterior variances (untruncated). Lognormal needs dof > 4.
inline std::vector<double> posterior_variance(const PosteriorState& state) {
  if (state.family() == ParameterFamily::lognormal) {
    const NIXParams& nix = state.nix();
    const double nu = nix.dof_nu();
    if (!(nu > 4.0)) throw std::invalid_argument("lognormal posterior variances need dof > 4");
    const double beta = nix.scale_beta();
    return {beta / (nix.prec_phi() * (nu - 2.0)), 2.0 * beta * beta / ((nu - 2.0) * (nu - 2.0) * (nu - 4.0))};
  }
  return {state.gamma().variance()};
}

/// Central (equal-tail) credible interval for each parameter.
///
/// Untruncated and Gamma-truncated states invert the marginal CDF exactly
/// (Gamma; shifted t for mu; scaled inverse chi-squared for sigma^2).
/// Truncated lognormal states use empirical quantiles of 10^6 draws from a
/// fixed internal stream.
inline std::vector<Interval> credible_interval(const PosteriorState& state, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("credible level must lie in (0, 1)");
  const double p_lo = 0.5 * (1.0 - level);
  const double p_hi = 0.5 * (1.0 + level);

  if (state.family() != ParameterFamily::lognormal) {
    const GammaParams& g = state.gamma();
    const boost::math::gamma_distribution<double> dist(g.shape(), g.scale());
    const Interval& b = state.bounds(0);
    const double f_lo = b.lower > 0.0 ? boost::math::cdf(dist, b.lower) : 0.0;
    const double f_hi = std::isfinite(b.upper) ? boost::math::cdf(dist, b.upper) : 1.0;
    auto q = [&](double p) { return boost::math::quantile(dist, f_lo + p * (f_hi - f_lo)); };
    return {Interval{q(p_lo), q(p_hi)}};
  }

  const NIXParams& nix = state.nix();
  if (!(nix.dof_nu() > 0.0)) throw std::invalid_argument("credible interval requires positive dof");

  if (!state.truncated()) {
    const ShiftedTParams t = marginal_mu(nix);
    const boost::math::students_t_distribution<double> student(t.dof());
    const boost::math::chi_squared_distribution<double> chi2(nix.dof_nu());
    const Interval mu{t.center() + t.scale_gamma() * boost::math::quantile(student, p_lo),
                      t.center() + t.scale_gamma() * boost::math::quantile(student, p_hi)};
    const Interval sigma_sq{nix.scale_beta() / boost::math::quantile(chi2, p_hi),
                            nix.scale_beta() / boost::math::quantile(chi2, p_lo)};
    return {mu, sigma_sq};
  }

  constexpr std::size_t kDraws = 1000000;
  RngStream rng(0xC4ED1B1E5EEDULL, 0);
  std::vector<double> mus(kDraws);
  std::vector<double> sigmas(kDraws);
  for (std::size_t i = 0; i < kDraws; ++i) {
    const ParameterDraw d = sample_posterior(state, rng);
    mus[i] = d[0];
    sigmas[i] = d[1];
  }
  auto empirical = [](std::vector<double>& xs, double p) {
    const auto idx = std::min(static_cast<std::size_t>(std::floor(p * static_cast<double>(xs.size()))), xs.size() - 1);
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(idx), xs.end());
    return xs[idx];
  };
  return {Interval{empirical(mus, p_lo), empirical(mus, p_hi)},
          Interval{empirical(sigmas, p_lo), empirical(sigmas, p_hi)}};
}

/// Pr[xi <= 1] under a Pareto-tail posterior, respecting truncation. A
/// positive value means the predictive annual loss has infinite mean.
inline double pareto_infinite_mean_probability(const PosteriorState& state) {
  if (state.family() != ParameterFamily::pareto_tail) {
    throw std::invalid_argument("infinite-mean probability applies to Pareto-tail posteriors only");
  }
  const Interval& b = state.bounds(0);
  if (b.lower >= 1.0) return 0.0;
  const double below = detail::gamma_mass(state.gamma(), Interval{b.lower, std::min(1.0, b.upper)});
  return below / detail::gamma_mass(state.gamma(), b);
}

/// Warn when Pr[xi <= 1] exceeds this.
inline constexpr double kInfiniteMeanWarningThreshold = 1e-6;

}  // namespace riskcap
