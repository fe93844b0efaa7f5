// Acceptance suite: one PASS/FAIL line per criterion. Desk scale by default;
// --paper-scale runs criteria 3 and 4 with K = 10^6 and R = 100.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "oracles.hpp"
#include "riskcap/cli.hpp"
#include "riskcap/laplace.hpp"
#include "riskcap/riskcap.hpp"

using namespace riskcap;

namespace {

constexpr std::uint64_t kSeed = 20240917;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const TrueModel kTruth = TrueModel::lognormal(10.0, 1.0, 2.0);

CellModel study_cell() {
  CellModel c;
  c.cell_id = "acceptance";
  return c;
}

CapitalSettings settings(std::size_t K, std::uint64_t seed) {
  CapitalSettings s;
  s.K = K;
  s.seed = seed;
  return s;
}

Outcome true_parameter_quantile() {
  const auto t0 = std::chrono::steady_clock::now();
  const CapitalReport r = conditional_capital_at("truth", kTruth.params(), settings(1'000'000, derive_seed(kSeed, 1)));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double rel = r.estimate.value / 4900.0 - 1.0;
  return {std::fabs(rel) <= 0.03 && secs < 120.0,
          "Q=" + fmt("%.1f", r.estimate.value) + " rel.err=" + fmt("%+.4f", rel) + " (|.|<=0.03), " +
              fmt("%.1f", secs) + "s (<120s)"};
}

Outcome large_data_convergence() {
  RngStream rng(derive_seed(kSeed, 2), 0);
  const LossData data = generate_synthetic(kTruth, 400, rng);
  const CapitalSettings s = settings(1'000'000, derive_seed(kSeed, 2, 1));
  const double q = conditional_capital(study_cell(), data, s).estimate.value;
  const double qb = predictive_capital(study_cell(), data, s).estimate.value;
  const double rel = std::fabs(qb - q) / q;
  return {rel < 0.03, "events=" + std::to_string(data.total_events()) + " Q=" + fmt("%.1f", q) + " QB=" +
                          fmt("%.1f", qb) + " |QB-Q|/Q=" + fmt("%.4f", rel) + " (<0.03)"};
}

Outcome small_sample_inflation(std::size_t K) {
  int larger = 0;
  double ratio_sum = 0.0;
  const int R = 20;
  for (int r = 0; r < R; ++r) {
    RngStream rng(derive_seed(kSeed, 3, static_cast<std::uint64_t>(r)), 0);
    const LossData data = generate_synthetic(kTruth, 5, rng);
    const CapitalSettings s = settings(K, derive_seed(kSeed, 3, static_cast<std::uint64_t>(r), 1));
    const double q = conditional_capital(study_cell(), data, s).estimate.value;
    const double qb = predictive_capital(study_cell(), data, s).estimate.value;
    larger += qb > q;
    ratio_sum += qb / q;
  }
  const double frac = static_cast<double>(larger) / R;
  const double mean_ratio = ratio_sum / R;
  return {frac >= 0.90 && mean_ratio > 1.3, "K=" + std::to_string(K) + " QB>Q in " + fmt("%.2f", frac) +
                                                " (>=0.90), mean QB/Q=" + fmt("%.3f", mean_ratio) + " (>1.3)"};
}

Outcome bias_magnitude(bool paper) {
  const StudyScale scale = paper ? StudyScale::paper() : StudyScale::desk();
  const std::vector<std::size_t> grid{40};
  const BiasCurve c = bias_study(kTruth, grid, scale.R, 0.999, scale.K_sims, derive_seed(kSeed, 4));
  const double b = c.points.front().relative_bias;
  const double lo = paper ? 0.05 : 0.03;
  const double hi = paper ? 0.15 : 0.20;
  return {b >= lo && b <= hi, std::string(paper ? "paper" : "desk") + " scale R=" + std::to_string(scale.R) +
                                  " K=" + std::to_string(scale.K_sims) + " Q0=" + fmt("%.1f", c.Q0) +
                                  " bias(M=40)=" + fmt("%.4f", b) + " in [" + fmt("%.2f", lo) + ", " +
                                  fmt("%.2f", hi) + "]; statistical reproduction only"};
}

Outcome conjugacy() {
  RngStream rng(derive_seed(kSeed, 5), 0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 40);
    const std::size_t split = 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - 1));
    std::vector<std::uint64_t> counts(n);
    for (auto& c : counts) c = sample_poisson(PoissonParams(0.5 + 20 * rng.uniform()), rng);
    std::vector<double> y(n), x(n);
    for (auto& v : y) v = 3.0 * rng.normal();
    for (auto& v : x) v = sample_pareto(ParetoParams(0.5 + 3 * rng.uniform(), 2.0), rng);
    const std::span<const std::uint64_t> cs(counts);
    const std::span<const double> ys(y), xs(x);

    const GammaParams gp(0.1 + 5 * rng.uniform(), 0.1 + 5 * rng.uniform());
    const GammaParams g1 = update_poisson_gamma(gp, cs);
    const GammaParams g2 = update_poisson_gamma(update_poisson_gamma(gp, cs.first(split)), cs.subspan(split));
    const NIXParams np(0.5 + 5 * rng.uniform(), 0.1 + 5 * rng.uniform(), rng.normal(), 0.1 + 5 * rng.uniform());
    const NIXParams n1 = update_lognormal(np, ys);
    const NIXParams n2 = update_lognormal(update_lognormal(np, ys.first(split)), ys.subspan(split));
    const GammaParams pp(0.1 + 5 * rng.uniform(), 0.1 + 5 * rng.uniform());
    const GammaParams p1 = update_pareto(pp, xs, 2.0);
    const GammaParams p2 = update_pareto(update_pareto(pp, xs.first(split), 2.0), xs.subspan(split), 2.0);
    // theta can sit near zero, so it is compared on an absolute-or-relative scale.
    const double theta_err =
        std::fabs(n1.loc_theta() - n2.loc_theta()) / std::max(1.0, std::fabs(n1.loc_theta()));
    worst = std::max({worst, oracle::rel_diff(g1.shape(), g2.shape()), oracle::rel_diff(g1.scale(), g2.scale()),
                      oracle::rel_diff(n1.dof_nu(), n2.dof_nu()), oracle::rel_diff(n1.scale_beta(), n2.scale_beta()),
                      theta_err, oracle::rel_diff(n1.prec_phi(), n2.prec_phi()),
                      oracle::rel_diff(p1.shape(), p2.shape()), oracle::rel_diff(p1.scale(), p2.scale())});
  }
  return {worst <= 1e-12, "1000 datasets x 3 families, max rel diff=" + fmt("%.3g", worst) + " (<=1e-12)"};
}

Outcome mode_equals_mle() {
  RngStream rng(derive_seed(kSeed, 6), 0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::uint64_t> counts(1 + static_cast<std::size_t>(rng.uniform() * 60));
    for (auto& c : counts) c = sample_poisson(PoissonParams(0.5 + 20 * rng.uniform()), rng);
    if (detail::total_count(counts) == 0) counts.front() = 1;
    const std::size_t n = 4 + static_cast<std::size_t>(rng.uniform() * 300);
    std::vector<double> sev(n), logs(n), par(n);
    const LognormalParams ln(3 * rng.normal(), 0.05 + 5 * rng.uniform());
    for (std::size_t i = 0; i < n; ++i) {
      sev[i] = sample_lognormal(ln, rng);
      logs[i] = std::log(sev[i]);
    }
    const ParetoParams pa(0.2 + 4 * rng.uniform(), 0.5 + 5 * rng.uniform());
    for (auto& v : par) v = sample_pareto(pa, rng);

    const double lam = posterior_mode(PosteriorState::poisson_rate(noninformative_poisson(counts)))[0];
    const ParameterDraw m = posterior_mode(PosteriorState::lognormal(noninformative_lognormal(logs)));
    const double xi =
        posterior_mode(PosteriorState::pareto_tail(noninformative_pareto(par, pa.threshold()), pa.threshold()))[0];
    const LognormalMle mle = mle_lognormal(sev);
    worst = std::max({worst, oracle::rel_diff(lam, mle_poisson(counts)),
                      std::fabs(m[0] - mle.mu) / std::max(1.0, std::fabs(mle.mu)),
                      oracle::rel_diff(m[1], mle.sigma_sq), oracle::rel_diff(xi, mle_pareto(par, pa.threshold()))});
  }
  return {worst <= 1e-10, "1000 datasets x 3 families, max rel diff=" + fmt("%.3g", worst) + " (<=1e-10)"};
}

Outcome quantile_interval() {
  const auto [r, s] = quantile_ci_indices(100000, 0.999, 0.95);
  const double truth = oracle::lognormal_quantile(1.0, 2.0, 0.999);
  const LognormalParams p = LognormalParams::from_sigma(1.0, 2.0);
  int covered = 0;
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    RngStream rng(derive_seed(kSeed, 7), rep);
    std::vector<double> xs(100000);
    for (auto& x : xs) x = sample_lognormal(p, rng);
    const QuantileInterval ci = quantile_ci(LossSample(std::move(xs), 0), 0.999, 0.95);
    covered += ci.lower <= truth && truth <= ci.upper;
  }
  const double coverage = covered / 200.0;
  return {r == 99880 && s == 99920 && coverage >= 0.90,
          "(r,s)=(" + std::to_string(r) + "," + std::to_string(s) + ") expect (99880,99920); coverage=" +
              fmt("%.3f", coverage) + " (>=0.90) of LN(1,2) q0.999=" + fmt("%.2f", truth)};
}

Outcome laplace_fidelity() {
  const GammaParams g(6.0, 0.5);
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const LaplaceResult lg = laplace_approximation([&](const Eigen::VectorXd& x) { return log_density(g, x[0]); }, x0);
  const double mode_err = std::fabs(lg.mode[0] / 2.5 - 1.0);
  const double var_err = std::fabs(lg.covariance(0, 0) / 1.25 - 1.0);

  RngStream data(derive_seed(kSeed, 8), 0);
  std::vector<double> logs(1000);
  for (auto& y : logs) y = 1.0 + 2.0 * data.normal();
  const PosteriorState post = PosteriorState::lognormal(noninformative_lognormal(logs));
  const ParameterDraw mode = posterior_mode(post);
  const LaplaceResult ll = laplace_approximation(
      [&](const Eigen::VectorXd& x) { return log_posterior_density(post, ParameterDraw{{x[0], x[1]}, 2}); },
      Eigen::Vector2d(mode[0] + 0.05, mode[1] * 1.1));

  RngStream draws(derive_seed(kSeed, 8, 1), 0);
  std::vector<double> mus(1'000'000), vars(1'000'000);
  for (std::size_t i = 0; i < mus.size(); ++i) {
    const ParameterDraw d = sample_posterior(post, draws);
    mus[i] = d[0];
    vars[i] = d[1];
  }
  const double sd_mu = std::sqrt(oracle::variance(mus));
  const double sd_var = std::sqrt(oracle::variance(vars));
  const double e_mu = std::fabs(std::sqrt(ll.covariance(0, 0)) / sd_mu - 1.0);
  const double e_var = std::fabs(std::sqrt(ll.covariance(1, 1)) / sd_var - 1.0);
  const double e_mode = std::max(std::fabs(ll.mode[0] - mode[0]) / std::max(1.0, std::fabs(mode[0])),
                                 std::fabs(ll.mode[1] / mode[1] - 1.0));
  const bool pass = mode_err <= 1e-3 && var_err <= 1e-3 && e_mu <= 0.05 && e_var <= 0.05 && e_mode <= 0.01;
  return {pass, "Gamma(6,1/2) mode err=" + fmt("%.2e", mode_err) + " var err=" + fmt("%.2e", var_err) +
                    " (<=1e-3); n=1000 lognormal sd err mu=" + fmt("%.4f", e_mu) + " sigma^2=" + fmt("%.4f", e_var) +
                    " (<=0.05), mode err=" + fmt("%.1e", e_mode)};
}

Outcome credible_interval_check() {
  const Interval ci = credible_interval(PosteriorState::poisson_rate(GammaParams(4004.0, 1.0 / 400.0)), 0.95)[0];
  const bool pass = std::fabs(ci.lower - 9.70) <= 0.02 && std::fabs(ci.upper - 10.32) <= 0.02;
  return {pass, "Gamma(4004,1/400) 0.95 interval=(" + fmt("%.4f", ci.lower) + ", " + fmt("%.4f", ci.upper) +
                    ") vs (9.70, 10.32) +-0.02"};
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("riskcap_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  RngStream rng(derive_seed(kSeed, 10), 0);
  const LossData data = generate_synthetic(kTruth, 20, rng);
  {
    std::ofstream c(dir / "counts.csv"), e(dir / "events.csv");
    io::write_counts_csv(c, data);
    io::write_events_csv(e, data);
  }
  std::ofstream(dir / "run.json") << R"({"K": 100000, "seed": 99, "cells": [
      {"id": "a", "severity": "lognormal", "counts": "counts.csv", "events": "events.csv"}]})";
  auto run_capital = [&](const std::string& out) {
    const std::string cfg = (dir / "run.json").string(), path = (dir / out).string();
    const char* argv[] = {"riskcap", "capital", "--config", cfg.c_str(), "-o", path.c_str()};
    std::ostringstream o, e;
    const int code = cli::run(6, argv, o, e);
    std::ifstream in(dir / out, std::ios::binary);
    return std::make_pair(code, std::string(std::istreambuf_iterator<char>(in), {}));
  };
  const auto a = run_capital("a.csv");
  const auto b = run_capital("b.csv");
  const bool same_csv = a.first == 0 && b.first == 0 && !a.second.empty() && a.second == b.second;

  CellModel cell = study_cell();
  const CellPosterior post = build_posteriors(cell, data);
  bool same_multiset = true;
  std::vector<double> ref;
  for (std::size_t w : {1, 2, 8}) {
    const LossSample s = simulate_predictive_sample(post.frequency, post.severity, 200000, 77, {w, 3000});
    std::vector<double> v(s.values().begin(), s.values().end());
    if (ref.empty()) ref = v;
    same_multiset = same_multiset && v == ref;
  }
  fs::remove_all(dir);
  return {same_csv && same_multiset, std::string("capital CSV byte-identical: ") + (same_csv ? "yes" : "no") +
                                         "; loss multiset equal for 1/2/8 workers: " + (same_multiset ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  bool paper = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--paper-scale") == 0) {
      paper = true;
    } else {
      std::cerr << "usage: riskcap_acceptance [--paper-scale]\n";
      return 2;
    }
  }
  const std::size_t k_small = paper ? 1'000'000 : 100'000;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"true-parameter quantile", true_parameter_quantile},
      {"convergence at large data", large_data_convergence},
      {"small-sample inflation", [&] { return small_sample_inflation(k_small); }},
      {"bias magnitude", [&] { return bias_magnitude(paper); }},
      {"conjugacy exactness", conjugacy},
      {"mode equals MLE", mode_equals_mle},
      {"quantile interval arithmetic and coverage", quantile_interval},
      {"Laplace fidelity", laplace_fidelity},
      {"credible interval", credible_interval_check},
      {"determinism", determinism},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << i + 1 << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
