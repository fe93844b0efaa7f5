#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "riskcap/bayes.hpp"
#include "riskcap/distributions.hpp"
#include "riskcap/error.hpp"

namespace riskcap {

/// Sample mean of annual counts. Zero is returned for all-zero data even
/// though it lies outside the Poisson support; simulation rejects it.
inline double mle_poisson(std::span<const std::uint64_t> counts) {
  if (counts.empty()) throw InsufficientDataError("insufficient data: at least one observation year is required");
  return static_cast<double>(detail::total_count(counts)) / static_cast<double>(counts.size());
}

struct LognormalMle {
  double mu;
  double sigma_sq;  // divide-by-n variance of ln X

  double sigma() const noexcept { return std::sqrt(sigma_sq); }
};

inline LognormalMle mle_lognormal(std::span<const double> severities) {
  if (severities.size() < 2) throw InsufficientDataError("insufficient data: lognormal MLE needs at least 2 severities");
  std::vector<double> logs;
  logs.reserve(severities.size());
  for (double x : severities) {
    if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("lognormal severities must be positive and finite");
    logs.push_back(std::log(x));
  }
  const auto [lo, hi] = std::minmax_element(logs.begin(), logs.end());
  if (*lo == *hi) throw InsufficientDataError("insufficient data: severities have zero log-variance");
  const double n = static_cast<double>(logs.size());
  const double mu = detail::mean_of(logs);
  return {mu, detail::centered_sum_sq(logs, mu) / n};
}

/// xi = n / sum ln(X_i / L).
inline double mle_pareto(std::span<const double> severities, double threshold) {
  if (severities.empty()) throw InsufficientDataError("insufficient data: no severities above threshold");
  const double sum_log = detail::sum_log_excess(severities, threshold);
  if (!(sum_log > 0.0)) throw InsufficientDataError("insufficient data: all severities equal the threshold");
  return static_cast<double>(severities.size()) / sum_log;
}

/// Point estimates used for the conditional capital path.
struct MleReport {
  SeverityFamily family = SeverityFamily::lognormal;
  double lambda = 0.0;
  std::optional<double> mu;
  std::optional<double> sigma;
  std::optional<double> xi;
  std::size_t years = 0;
  std::size_t events = 0;
};

inline MleReport fit_mle(SeverityFamily family, std::span<const std::uint64_t> counts,
                         std::span<const double> severities, double threshold = 0.0) {
  MleReport report;
  report.family = family;
  report.lambda = mle_poisson(counts);
  report.years = counts.size();
  report.events = severities.size();
  if (family == SeverityFamily::lognormal) {
    const LognormalMle fit = mle_lognormal(severities);
    report.mu = fit.mu;
    report.sigma = fit.sigma();
  } else {
    report.xi = mle_pareto(severities, threshold);
  }
  return report;
}

}  // namespace riskcap
