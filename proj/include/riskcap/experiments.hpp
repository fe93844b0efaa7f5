#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "riskcap/capital.hpp"
#include "riskcap/distributions.hpp"
#include "riskcap/mc_engine.hpp"
#include "riskcap/rng.hpp"

namespace riskcap {

/// Data-generating parameters of a synthetic study.
struct TrueModel {
  PoissonParams frequency;
  SeverityParams severity;

  static TrueModel lognormal(double lambda, double mu, double sigma) {
    return {PoissonParams(lambda), LognormalParams::from_sigma(mu, sigma)};
  }
  static TrueModel pareto(double lambda, double xi, double threshold) {
    return {PoissonParams(lambda), ParetoParams(xi, threshold)};
  }

  SeverityFamily family() const noexcept {
    return std::holds_alternative<LognormalParams>(severity) ? SeverityFamily::lognormal : SeverityFamily::pareto;
  }
  double threshold() const noexcept {
    if (const auto* p = std::get_if<ParetoParams>(&severity)) return p->threshold();
    return 0.0;
  }
  CompoundParams params() const { return {frequency, severity}; }
};

/// M years of synthetic history. Years are generated in order from one
/// stream (count, then that year's severities), so the first M1 years of an
/// M2-year history equal the M1-year history for the same stream.
inline LossData generate_synthetic(const TrueModel& truth, std::size_t years, RngStream& rng) {
  detail::require(years >= 1, "synthetic history needs at least one year");
  LossData data;
  data.annual_counts.reserve(years);
  for (std::size_t m = 0; m < years; ++m) {
    const std::uint64_t n = sample_poisson(truth.frequency, rng);
    data.annual_counts.push_back(n);
    for (std::uint64_t i = 0; i < n; ++i) data.severities.push_back(sample_severity(truth.severity, rng));
  }
  return data;
}

/// First `years` years of a longer history.
inline LossData prefix_years(const LossData& data, std::size_t years) {
  detail::require(years <= data.years(), "prefix longer than the history");
  LossData out;
  out.annual_counts.assign(data.annual_counts.begin(), data.annual_counts.begin() + static_cast<std::ptrdiff_t>(years));
  out.severities.assign(data.severities.begin(),
                        data.severities.begin() + static_cast<std::ptrdiff_t>(out.total_events()));
  return out;
}

struct ParameterEstimate {
  std::string name;
  double estimate = 0.0;  // MLE
  Interval interval;      // central 0.95 posterior interval
};

/// One row of the estimator comparison table. Quantiles in thousands.
struct BiasRecord {
  std::size_t M = 0;
  std::uint64_t K_data = 0;
  std::vector<ParameterEstimate> parameters;
  double q_conditional = 0.0;
  double q_predictive = 0.0;
};

struct StudyScale {
  std::size_t K_sims;
  std::size_t R;

  static constexpr StudyScale desk() { return {100'000, 20}; }
  static constexpr StudyScale paper() { return {1'000'000, 100}; }
};

/// Reference grid of observation years.
inline const std::vector<std::size_t>& table_years() {
  static const std::vector<std::size_t> grid{5, 10, 15, 20, 40, 60, 80, 100, 200, 400};
  return grid;
}

namespace detail {

enum class StudyStage : std::uint64_t { data = 1, simulation = 2, reference = 3 };

inline void require_grid(std::span<const std::size_t> grid) {
  detail::require(!grid.empty(), "year grid must not be empty");
  detail::require(grid.front() >= 1, "year grid values must be at least 1");
  detail::require(std::is_sorted(grid.begin(), grid.end()), "year grid must be ascending");
}

inline CellModel study_cell(const TrueModel& truth) {
  CellModel cell;
  cell.cell_id = "synthetic";
  cell.severity = truth.family();
  cell.threshold = truth.threshold();
  return cell;
}

/// Conditional and predictive quantiles for one dataset. Both runs share the
/// master seed, so simulated year k uses the same process randomness in each.
struct QuantilePair {
  CapitalReport conditional;
  CapitalReport predictive;
};

inline QuantilePair quantile_pair(const CellModel& cell, const LossData& data, double q, std::size_t K,
                                  std::uint64_t seed, const SimulationOptions& sim) {
  CapitalSettings settings;
  settings.q = q;
  settings.K = K;
  settings.seed = seed;
  settings.simulation = sim;
  return {conditional_capital(cell, data, settings), predictive_capital(cell, data, settings)};
}

}  // namespace detail

/// One growing synthetic history evaluated at each M of the grid: MLEs with
/// posterior intervals, and conditional and predictive q-quantiles.
inline std::vector<BiasRecord> single_realization_track(const TrueModel& truth, std::span<const std::size_t> grid,
                                                        double q, std::size_t K_sims, std::uint64_t seed,
                                                        const SimulationOptions& sim = {}) {
  detail::require_grid(grid);
  RngStream data_rng(derive_seed(seed, static_cast<std::uint64_t>(detail::StudyStage::data)), 0);
  const LossData history = generate_synthetic(truth, grid.back(), data_rng);
  const CellModel cell = detail::study_cell(truth);

  std::vector<BiasRecord> rows;
  for (std::size_t M : grid) {
    const LossData data = prefix_years(history, M);
    const std::uint64_t mc_seed = derive_seed(seed, static_cast<std::uint64_t>(detail::StudyStage::simulation), M);
    const auto pair = detail::quantile_pair(cell, data, q, K_sims, mc_seed, sim);

    BiasRecord row;
    row.M = M;
    row.K_data = data.total_events();
    const MleReport& mle = *pair.conditional.mle;
    for (const ParameterSummary& s : pair.predictive.posterior) {
      double estimate = mle.lambda;
      if (s.name == "mu") estimate = *mle.mu;
      if (s.name == "sigma") estimate = *mle.sigma;
      if (s.name == "xi") estimate = *mle.xi;
      row.parameters.push_back({s.name, estimate, s.credible});
    }
    row.q_conditional = pair.conditional.estimate.value / 1000.0;
    row.q_predictive = pair.predictive.estimate.value / 1000.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

struct BiasPoint {
  std::size_t M = 0;
  double relative_bias = 0.0;
};

struct BiasCurve {
  std::vector<BiasPoint> points;
  std::size_t R = 0;
  double Q0 = 0.0;  // quantile at the true parameters
};

/// Reference quantile at the true parameters, from a dedicated stream.
inline double reference_quantile(const TrueModel& truth, double q, std::size_t K, std::uint64_t seed,
                                 const SimulationOptions& sim = {}) {
  const std::uint64_t ref_seed = derive_seed(seed, static_cast<std::uint64_t>(detail::StudyStage::reference));
  return empirical_quantile(simulate_conditional_sample(truth.params(), K, ref_seed, sim), q);
}

/// Average (predictive - conditional) quantile over R independent histories,
/// relative to the quantile at the true parameters. Histories grow across the
/// grid within a realization; every (realization, M) pair gets its own
/// simulation seed.
inline BiasCurve bias_study(const TrueModel& truth, std::span<const std::size_t> grid, std::size_t R, double q,
                            std::size_t K_sims, std::uint64_t seed, const SimulationOptions& sim = {},
                            std::size_t reference_K = 1'000'000) {
  detail::require_grid(grid);
  detail::require(R >= 1, "bias study needs at least one realization");
  BiasCurve curve;
  curve.R = R;
  curve.Q0 = reference_quantile(truth, q, reference_K, seed, sim);
  const CellModel cell = detail::study_cell(truth);

  std::vector<double> sum_diff(grid.size(), 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    RngStream data_rng(derive_seed(seed, static_cast<std::uint64_t>(detail::StudyStage::data), r), 0);
    const LossData history = generate_synthetic(truth, grid.back(), data_rng);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const std::uint64_t mc_seed =
          derive_seed(seed, static_cast<std::uint64_t>(detail::StudyStage::simulation), r, grid[j]);
      const auto pair = detail::quantile_pair(cell, prefix_years(history, grid[j]), q, K_sims, mc_seed, sim);
      sum_diff[j] += pair.predictive.estimate.value - pair.conditional.estimate.value;
    }
  }
  for (std::size_t j = 0; j < grid.size(); ++j) {
    curve.points.push_back({grid[j], sum_diff[j] / static_cast<double>(R) / curve.Q0});
  }
  return curve;
}

}  // namespace riskcap
