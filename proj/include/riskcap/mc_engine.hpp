#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <limits>
#include <string>
#include <span>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "riskcap/bayes.hpp"
#include "riskcap/distributions.hpp"
#include "riskcap/error.hpp"
#include "riskcap/rng.hpp"

namespace riskcap {

/// Frequency and severity parameters of one risk cell.
struct CompoundParams {
  PoissonParams frequency;
  SeverityParams severity;
};

/// Sum of `count` i.i.d. severities; exactly zero when count is zero.
inline double sum_severities(std::uint64_t count, const SeverityParams& severity, RngStream& rng) {
  double total = 0.0;
  if (const auto* ln = std::get_if<LognormalParams>(&severity)) {
    for (std::uint64_t i = 0; i < count; ++i) total += sample_lognormal(*ln, rng);
  } else {
    const auto& pareto = std::get<ParetoParams>(severity);
    for (std::uint64_t i = 0; i < count; ++i) total += sample_pareto(pareto, rng);
  }
  return total;
}

/// One annual loss Z = X_1 + ... + X_N with the count and the severities
/// drawn from separate streams.
inline double simulate_annual_loss(const PoissonParams& frequency, const SeverityParams& severity,
                                   RngStream& frequency_rng, RngStream& severity_rng) {
  return sum_severities(sample_poisson(frequency, frequency_rng), severity, severity_rng);
}

/// Single-stream variant: the count is drawn first, then the severities.
inline double simulate_annual_loss(const PoissonParams& frequency, const SeverityParams& severity, RngStream& rng) {
  return simulate_annual_loss(frequency, severity, rng, rng);
}

// ---------------------------------------------------------------------------
// Parameter sources. The conditional path fixes the parameters; the
// predictive path draws them from the posterior for every simulated year.
// ---------------------------------------------------------------------------

template <class S>
concept ParameterSource = requires(const S& source, RngStream& rng) {
  { source.draw(rng) } -> std::same_as<CompoundParams>;
};

class FixedParameters {
 public:
  explicit FixedParameters(CompoundParams theta) : theta_(std::move(theta)) {}
  CompoundParams draw(RngStream&) const { return theta_; }
  const CompoundParams& params() const noexcept { return theta_; }

 private:
  CompoundParams theta_;
};

class PosteriorParameters {
 public:
  PosteriorParameters(PosteriorState frequency, PosteriorState severity)
      : frequency_(std::move(frequency)), severity_(std::move(severity)) {
    detail::require(frequency_.family() == ParameterFamily::poisson_rate,
                    "frequency posterior must be a Poisson-rate posterior");
    detail::require(severity_.family() != ParameterFamily::poisson_rate,
                    "severity posterior must be lognormal or Pareto-tail");
    if (severity_.family() == ParameterFamily::lognormal && !(severity_.nix().dof_nu() > 0.0)) {
      throw std::invalid_argument("lognormal posterior is not samplable: dof must be positive");
    }
  }

  CompoundParams draw(RngStream& rng) const {
    const PoissonParams frequency(sample_posterior(frequency_, rng)[0]);
    const ParameterDraw sev = sample_posterior(severity_, rng);
    if (severity_.family() == ParameterFamily::lognormal) {
      return {frequency, LognormalParams(sev[0], sev[1])};
    }
    return {frequency, ParetoParams(sev[0], severity_.threshold())};
  }

  const PosteriorState& frequency() const noexcept { return frequency_; }
  const PosteriorState& severity() const noexcept { return severity_; }

 private:
  PosteriorState frequency_;
  PosteriorState severity_;
};

// ---------------------------------------------------------------------------
// Batched simulation
// ---------------------------------------------------------------------------

struct SimulationOptions {
  /// Worker threads; 0 means hardware concurrency.
  std::size_t workers = 1;
  /// Draws per work unit handed to a worker.
  std::size_t batch_size = 1 << 14;
};

/// Stream ids used for simulated year k. Each year owns three substreams
/// (parameters, count, severities) keyed by its global index, so results do
/// not depend on batching or worker count, and the conditional and
/// predictive paths see the same process randomness for the same k.
struct DrawStreams {
  static constexpr std::uint64_t kRoles = 3;
  static constexpr std::uint64_t parameters(std::uint64_t k) noexcept { return kRoles * k; }
  static constexpr std::uint64_t frequency(std::uint64_t k) noexcept { return kRoles * k + 1; }
  static constexpr std::uint64_t severity(std::uint64_t k) noexcept { return kRoles * k + 2; }
};

template <ParameterSource S>
double simulate_draw(const S& source, std::uint64_t master_seed, std::uint64_t k) {
  RngStream param_rng(master_seed, DrawStreams::parameters(k));
  RngStream freq_rng(master_seed, DrawStreams::frequency(k));
  RngStream sev_rng(master_seed, DrawStreams::severity(k));
  const CompoundParams theta = source.draw(param_rng);
  return simulate_annual_loss(theta.frequency, theta.severity, freq_rng, sev_rng);
}

/// Annual losses for global draw indices [first_index, first_index + count),
/// in index order (unsorted).
template <ParameterSource S>
std::vector<double> simulate_losses(const S& source, std::uint64_t master_seed, std::uint64_t first_index,
                                    std::size_t count, const SimulationOptions& options = {}) {
  std::vector<double> out(count);
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t n_batches = (count + batch - 1) / batch;
  auto run_batch = [&](std::size_t b) {
    const std::size_t begin = b * batch;
    const std::size_t end = std::min(count, begin + batch);
    for (std::size_t i = begin; i < end; ++i) out[i] = simulate_draw(source, master_seed, first_index + i);
  };

  std::size_t workers = options.workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options.workers;
  workers = std::min(workers, n_batches);
  if (workers <= 1) {
    for (std::size_t b = 0; b < n_batches; ++b) run_batch(b);
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        try {
          for (std::size_t b = next.fetch_add(1); b < n_batches && !failed; b = next.fetch_add(1)) run_batch(b);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

/// Ascending-sorted annual-loss sample.
class LossSample {
 public:
  LossSample(std::vector<double> values, std::uint64_t master_seed)
      : values_(std::move(values)), master_seed_(master_seed) {
    if (!std::is_sorted(values_.begin(), values_.end())) std::sort(values_.begin(), values_.end());
  }

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::uint64_t master_seed() const noexcept { return master_seed_; }
  /// 1-based order statistic.
  double order_statistic(std::size_t index) const { return values_.at(index - 1); }

  /// Merges additional (unsorted) losses, keeping the sample sorted.
  void merge(std::vector<double> more) {
    std::sort(more.begin(), more.end());
    const auto mid = static_cast<std::ptrdiff_t>(values_.size());
    values_.insert(values_.end(), more.begin(), more.end());
    std::inplace_merge(values_.begin(), values_.begin() + mid, values_.end());
  }

 private:
  std::vector<double> values_;
  std::uint64_t master_seed_;
};

/// K annual losses at fixed parameters.
inline LossSample simulate_conditional_sample(const CompoundParams& theta_hat, std::size_t K,
                                              std::uint64_t master_seed, const SimulationOptions& options = {}) {
  detail::require(K >= 1, "sample size K must be at least 1");
  return LossSample(simulate_losses(FixedParameters(theta_hat), master_seed, 0, K, options), master_seed);
}

/// K annual losses from the predictive distribution: each year first draws
/// its parameters from the posteriors.
inline LossSample simulate_predictive_sample(const PosteriorState& frequency, const PosteriorState& severity,
                                             std::size_t K, std::uint64_t master_seed,
                                             const SimulationOptions& options = {}) {
  detail::require(K >= 1, "sample size K must be at least 1");
  return LossSample(simulate_losses(PosteriorParameters(frequency, severity), master_seed, 0, K, options),
                    master_seed);
}

// ---------------------------------------------------------------------------
// Quantiles and their Monte Carlo confidence intervals
// ---------------------------------------------------------------------------

namespace detail {

inline void require_probability(double q, const char* what) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument(std::string(what) + " must lie in (0, 1)");
}

/// Snaps values within rounding distance of an integer onto it, so that
/// e.g. K q = 99900.00000000001 floors and ceils to 99900.
inline double snap_integer(double x) {
  const double r = std::round(x);
  return std::fabs(x - r) <= 1e-13 * std::max(1.0, std::fabs(x)) ? r : x;
}

}  // namespace detail

/// 1-based index floor(K q + 1), clamped to K.
inline std::size_t quantile_index(std::size_t K, double q) {
  detail::require_probability(q, "quantile level q");
  detail::require(K >= 1, "sample must be non-empty");
  const double idx = std::floor(detail::snap_integer(static_cast<double>(K) * q) + 1.0);
  return std::min(static_cast<std::size_t>(idx), K);
}

inline double empirical_quantile(const LossSample& sample, double q) {
  return sample.order_statistic(quantile_index(sample.size(), q));
}

struct QuantileInterval {
  std::size_t r = 0;  // 1-based, clamped to [1, K]
  std::size_t s = 0;
  double lower = 0.0;
  double upper = 0.0;
  bool reliable = false;  // K q (1 - q) >= 50
};

/// Indices of the conservative order-statistic interval:
/// r = floor(Kq - z sqrt(Kq(1-q))), s = ceil(Kq + z sqrt(Kq(1-q))), with z the
/// (1 + gamma)/2 standard normal quantile.
inline std::pair<std::size_t, std::size_t> quantile_ci_indices(std::size_t K, double q, double gamma) {
  detail::require_probability(q, "quantile level q");
  detail::require_probability(gamma, "confidence level gamma");
  detail::require(K >= 1, "sample must be non-empty");
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 * (1.0 + gamma));
  const double kq = static_cast<double>(K) * q;
  const double half = z * std::sqrt(kq * (1.0 - q));
  const double l = std::floor(detail::snap_integer(kq - half));
  const double u = std::ceil(detail::snap_integer(kq + half));
  const double k = static_cast<double>(K);
  return {static_cast<std::size_t>(std::clamp(l, 1.0, k)), static_cast<std::size_t>(std::clamp(u, 1.0, k))};
}

inline bool quantile_ci_reliable(std::size_t K, double q) {
  return static_cast<double>(K) * q * (1.0 - q) >= 50.0;
}

inline QuantileInterval quantile_ci(const LossSample& sample, double q, double gamma) {
  const auto [r, s] = quantile_ci_indices(sample.size(), q, gamma);
  return {r, s, sample.order_statistic(r), sample.order_statistic(s), quantile_ci_reliable(sample.size(), q)};
}

struct QuantileEstimate {
  double q = 0.0;
  double value = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double gamma = 0.0;
  std::size_t K = 0;
  bool reliable_ci = false;
  bool converged = true;
  std::uint64_t master_seed = 0;

  /// (ci_upper - ci_lower) / (2 value).
  double relative_halfwidth() const noexcept {
    const double width = ci_upper - ci_lower;
    if (width == 0.0) return 0.0;
    return value > 0.0 ? width / (2.0 * value) : kPosInf;
  }
};

inline QuantileEstimate estimate_quantile(const LossSample& sample, double q, double gamma) {
  const QuantileInterval ci = quantile_ci(sample, q, gamma);
  QuantileEstimate est;
  est.q = q;
  est.value = empirical_quantile(sample, q);
  est.ci_lower = ci.lower;
  est.ci_upper = ci.upper;
  est.gamma = gamma;
  est.K = sample.size();
  est.reliable_ci = ci.reliable;
  est.master_seed = sample.master_seed();
  return est;
}

/// Default ceiling on the number of losses held in memory.
inline constexpr std::size_t kDefaultMaxK = 10'000'000;

struct AccuracyTarget {
  double rel_halfwidth = 0.01;
  std::size_t batch_K = 100'000;
  std::size_t max_K = kDefaultMaxK;
};

/// Adds batches of batch_K losses until the interval's relative half-width
/// reaches the target or max_K losses are held. Batches continue the global
/// draw index, so the final sample equals a single run of the achieved K.
/// An estimate that hits max_K first comes back with converged = false.
template <ParameterSource S>
QuantileEstimate run_until_accuracy(const S& source, double q, double gamma, const AccuracyTarget& target,
                                    std::uint64_t master_seed, const SimulationOptions& options = {}) {
  detail::require(target.rel_halfwidth > 0.0, "accuracy target must be positive");
  detail::require(target.batch_K >= 1, "batch_K must be at least 1");
  detail::require(target.max_K >= 1, "max_K must be at least 1");
  detail::require_probability(q, "quantile level q");
  detail::require_probability(gamma, "confidence level gamma");

  LossSample sample({}, master_seed);
  for (;;) {
    const std::size_t n = std::min(target.batch_K, target.max_K - sample.size());
    sample.merge(simulate_losses(source, master_seed, sample.size(), n, options));
    QuantileEstimate est = estimate_quantile(sample, q, gamma);
    if (est.relative_halfwidth() <= target.rel_halfwidth) {
      est.converged = true;
      return est;
    }
    if (sample.size() >= target.max_K) {
      est.converged = false;
      return est;
    }
  }
}

}  // namespace riskcap
