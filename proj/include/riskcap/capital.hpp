#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "riskcap/bayes.hpp"
#include "riskcap/distributions.hpp"
#include "riskcap/error.hpp"
#include "riskcap/estimators.hpp"
#include "riskcap/mc_engine.hpp"

namespace riskcap {

/// Priors and restrictions for one cell. Absent priors mean the flat
/// (non-informative) prior.
struct PriorSpec {
  std::optional<GammaParams> frequency;
  std::optional<NIXParams> lognormal;
  std::optional<GammaParams> pareto;

  std::optional<Interval> lambda_bounds;
  std::optional<Interval> mu_bounds;
  std::optional<Interval> sigma_sq_bounds;
  std::optional<Interval> xi_bounds;
  /// Restrict the Pareto tail index to xi > 1 so the predictive mean is finite.
  bool finite_mean = false;
};

struct CellModel {
  std::string cell_id;
  SeverityFamily severity = SeverityFamily::lognormal;
  double threshold = 0.0;  // Pareto lower bound L
  PriorSpec prior;

  void validate() const {
    if (cell_id.empty()) throw std::invalid_argument("cell id must not be empty");
    if (severity == SeverityFamily::pareto && !(threshold > 0.0 && std::isfinite(threshold))) {
      throw std::invalid_argument("cell '" + cell_id + "': Pareto severity needs a positive threshold");
    }
    if (severity == SeverityFamily::pareto && prior.lognormal) {
      throw std::invalid_argument("cell '" + cell_id + "': lognormal prior given for a Pareto cell");
    }
    if (severity == SeverityFamily::lognormal && (prior.pareto || prior.xi_bounds || prior.finite_mean)) {
      throw std::invalid_argument("cell '" + cell_id + "': Pareto prior options given for a lognormal cell");
    }
  }
};

/// Observed history: one count per year and the individual severities.
struct LossData {
  std::vector<std::uint64_t> annual_counts;
  std::vector<double> severities;

  std::size_t years() const noexcept { return annual_counts.size(); }
  std::uint64_t total_events() const noexcept { return detail::total_count(annual_counts); }

  void validate() const {
    if (annual_counts.empty()) throw InsufficientDataError("insufficient data: at least one observation year is required");
    if (total_events() != severities.size()) {
      throw std::invalid_argument("loss data: severities (" + std::to_string(severities.size()) +
                                  ") do not tally with the annual counts (" + std::to_string(total_events()) + ")");
    }
    for (double x : severities) {
      if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("loss data: severities must be positive and finite");
    }
  }
};

enum class CapitalMode { conditional, predictive };

constexpr std::string_view to_string(CapitalMode mode) noexcept {
  return mode == CapitalMode::conditional ? "conditional" : "predictive";
}

struct CapitalSettings {
  double q = 0.999;
  std::size_t K = 1'000'000;
  double gamma = 0.95;
  std::uint64_t seed = 0;
  SimulationOptions simulation{};
  /// When set, K is ignored and batches are added until the target is met.
  std::optional<AccuracyTarget> adaptive;
};

/// Posterior mode and central 0.95 credible interval of one parameter.
struct ParameterSummary {
  std::string name;
  double mode = 0.0;
  Interval credible;
};

namespace warning {
inline constexpr std::string_view kUnreliableCi = "unreliable-ci";
inline constexpr std::string_view kUnconverged = "unconverged";
inline constexpr std::string_view kInfiniteMean = "infinite-predictive-mean";
}  // namespace warning

struct CapitalReport {
  std::string cell_id;
  CapitalMode mode = CapitalMode::conditional;
  QuantileEstimate estimate;
  std::optional<MleReport> mle;
  std::vector<ParameterSummary> posterior;
  std::vector<std::string> warnings;
};

/// Frequency and severity posteriors of a cell, with truncation applied.
struct CellPosterior {
  PosteriorState frequency;
  PosteriorState severity;
  std::vector<std::string> warnings;
};

inline CellPosterior build_posteriors(const CellModel& model, const LossData& data) {
  model.validate();
  data.validate();
  const PriorSpec& prior = model.prior;

  PosteriorState frequency = PosteriorState::poisson_rate(
      prior.frequency ? update_poisson_gamma(*prior.frequency, data.annual_counts)
                      : noninformative_poisson(data.annual_counts));
  if (prior.lambda_bounds) frequency = truncate_posterior(frequency, std::span(&*prior.lambda_bounds, 1));

  std::vector<std::string> warnings;
  if (model.severity == SeverityFamily::lognormal) {
    std::vector<double> logs(data.severities.size());
    std::transform(data.severities.begin(), data.severities.end(), logs.begin(), [](double x) { return std::log(x); });
    const NIXParams nix = prior.lognormal ? update_lognormal(*prior.lognormal, logs) : noninformative_lognormal(logs);
    if (!(nix.dof_nu() > 0.0)) {
      throw InsufficientDataError("insufficient data: lognormal posterior has non-positive degrees of freedom");
    }
    PosteriorState severity = PosteriorState::lognormal(nix);
    if (prior.mu_bounds || prior.sigma_sq_bounds) {
      const std::array<Interval, 2> bounds{prior.mu_bounds.value_or(Interval{}),
                                           prior.sigma_sq_bounds.value_or(Interval{})};
      severity = truncate_posterior(severity, bounds);
    }
    return {std::move(frequency), std::move(severity), std::move(warnings)};
  }

  const GammaParams tail = prior.pareto ? update_pareto(*prior.pareto, data.severities, model.threshold)
                                        : noninformative_pareto(data.severities, model.threshold);
  PosteriorState severity = PosteriorState::pareto_tail(tail, model.threshold);
  Interval xi = prior.xi_bounds.value_or(Interval{});
  if (prior.finite_mean) xi.lower = std::max(xi.lower, 1.0);
  if (!xi.unbounded()) severity = truncate_posterior(severity, std::span(&xi, 1));
  if (pareto_infinite_mean_probability(severity) > kInfiniteMeanWarningThreshold) {
    warnings.emplace_back(warning::kInfiniteMean);
  }
  return {std::move(frequency), std::move(severity), std::move(warnings)};
}

/// Posterior modes and central 0.95 intervals in reporting units:
/// lambda, mu, sigma (square root of sigma^2), xi.
inline std::vector<ParameterSummary> summarize_posteriors(const CellPosterior& post, double level = 0.95) {
  std::vector<ParameterSummary> out;
  const Interval lam = credible_interval(post.frequency, level)[0];
  out.push_back({"lambda", posterior_mode(post.frequency)[0], lam});
  const auto ci = credible_interval(post.severity, level);
  const ParameterDraw mode = posterior_mode(post.severity);
  if (post.severity.family() == ParameterFamily::lognormal) {
    out.push_back({"mu", mode[0], ci[0]});
    out.push_back({"sigma", std::sqrt(mode[1]), Interval{std::sqrt(ci[1].lower), std::sqrt(ci[1].upper)}});
  } else {
    out.push_back({"xi", mode[0], ci[0]});
  }
  return out;
}

namespace detail {

template <ParameterSource S>
QuantileEstimate run_capital_simulation(const S& source, const CapitalSettings& settings) {
  detail::require_probability(settings.q, "quantile level q");
  detail::require_probability(settings.gamma, "confidence level gamma");
  if (settings.adaptive) {
    return run_until_accuracy(source, settings.q, settings.gamma, *settings.adaptive, settings.seed,
                              settings.simulation);
  }
  detail::require(settings.K >= 1, "sample size K must be at least 1");
  const LossSample sample(simulate_losses(source, settings.seed, 0, settings.K, settings.simulation), settings.seed);
  return estimate_quantile(sample, settings.q, settings.gamma);
}

inline void append_estimate_warnings(CapitalReport& report) {
  if (!report.estimate.reliable_ci) report.warnings.emplace_back(warning::kUnreliableCi);
  if (!report.estimate.converged) report.warnings.emplace_back(warning::kUnconverged);
}

inline CompoundParams params_from_mle(const CellModel& model, const MleReport& mle) {
  if (!(mle.lambda > 0.0)) {
    throw InsufficientDataError("cell '" + model.cell_id +
                                "': estimated Poisson rate is zero (no events observed); simulation needs lambda > 0");
  }
  if (model.severity == SeverityFamily::lognormal) {
    return {PoissonParams(mle.lambda), LognormalParams::from_sigma(*mle.mu, *mle.sigma)};
  }
  return {PoissonParams(mle.lambda), ParetoParams(*mle.xi, model.threshold)};
}

}  // namespace detail

/// Capital at fixed parameters (no fitting).
inline CapitalReport conditional_capital_at(std::string cell_id, const CompoundParams& theta,
                                            const CapitalSettings& settings) {
  CapitalReport report;
  report.cell_id = std::move(cell_id);
  report.mode = CapitalMode::conditional;
  report.estimate = detail::run_capital_simulation(FixedParameters(theta), settings);
  detail::append_estimate_warnings(report);
  return report;
}

/// Quantile of the annual loss at the maximum-likelihood estimates.
inline CapitalReport conditional_capital(const CellModel& model, const LossData& data,
                                         const CapitalSettings& settings) {
  model.validate();
  data.validate();
  const MleReport mle = fit_mle(model.severity, data.annual_counts, data.severities, model.threshold);
  CapitalReport report = conditional_capital_at(model.cell_id, detail::params_from_mle(model, mle), settings);
  report.mle = mle;
  return report;
}

/// Quantile of the predictive annual loss: parameters are redrawn from the
/// posterior for every simulated year.
inline CapitalReport predictive_capital(const CellModel& model, const LossData& data,
                                        const CapitalSettings& settings) {
  CellPosterior post = build_posteriors(model, data);
  CapitalReport report;
  report.cell_id = model.cell_id;
  report.mode = CapitalMode::predictive;
  report.posterior = summarize_posteriors(post);
  try {
    report.mle = fit_mle(model.severity, data.annual_counts, data.severities, model.threshold);
  } catch (const InsufficientDataError&) {
    // Informative priors can support a predictive run where the MLE cannot.
  }
  report.estimate =
      detail::run_capital_simulation(PosteriorParameters(post.frequency, post.severity), settings);
  report.warnings = std::move(post.warnings);
  detail::append_estimate_warnings(report);
  return report;
}

/// Seed for one cell of a bank-level run.
inline std::uint64_t cell_seed(std::uint64_t bank_seed, std::string_view cell_id) {
  return derive_seed(bank_seed, hash_string(cell_id));
}

struct CellCapital {
  std::string cell_id;
  double value = 0.0;
};

struct BankCapital {
  CapitalMode mode = CapitalMode::conditional;
  double q = 0.0;
  double total = 0.0;
  std::vector<CellCapital> breakdown;
};

inline constexpr std::string_view kAggregationNote =
    "bank total is the sum of cell quantiles, which assumes perfect dependence between cells";

/// Sum of per-cell quantiles. All reports must share mode and q.
inline BankCapital aggregate_bank_capital(std::span<const CapitalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("aggregation needs at least one cell report");
  BankCapital bank;
  bank.mode = reports.front().mode;
  bank.q = reports.front().estimate.q;
  for (const CapitalReport& r : reports) {
    if (r.mode != bank.mode) throw std::invalid_argument("aggregation: reports mix conditional and predictive modes");
    if (r.estimate.q != bank.q) throw std::invalid_argument("aggregation: reports mix quantile levels");
    bank.breakdown.push_back({r.cell_id, r.estimate.value});
  }
  // Summing in value order makes the total independent of cell order.
  std::vector<double> values;
  values.reserve(bank.breakdown.size());
  for (const CellCapital& c : bank.breakdown) values.push_back(c.value);
  std::sort(values.begin(), values.end());
  bank.total = std::accumulate(values.begin(), values.end(), 0.0);
  return bank;
}

}  // namespace riskcap
