#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "riskcap/distributions.hpp"
#include "riskcap/rng.hpp"

using namespace riskcap;

namespace {

template <class F>
std::vector<double> draws(std::size_t n, std::uint64_t seed, F&& f) {
  RngStream rng(seed, 0);
  std::vector<double> xs(n);
  for (auto& x : xs) x = f(rng);
  return xs;
}

}  // namespace

TEST(Rng, SameKeySameSequence) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
}

TEST(Rng, DistinctKeysDiffer) {
  RngStream a(42, 7), b(42, 8), c(43, 7);
  int same_b = 0, same_c = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a();
    same_b += x == b();
    same_c += x == c();
  }
  EXPECT_EQ(same_b, 0);
  EXPECT_EQ(same_c, 0);
}

TEST(Rng, DeriveSeedSeparatesKeys) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 100; ++i)
    for (std::uint64_t j = 0; j < 100; ++j) seen.insert(derive_seed(1, i, j));
  EXPECT_EQ(seen.size(), 10000u);
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
}

TEST(Rng, HashStringIsFnv1a) {
  EXPECT_EQ(hash_string(""), 0xCBF29CE484222325ULL);
  EXPECT_EQ(hash_string("a"), 0xAF63DC4C8601EC8CULL);
}

TEST(Rng, UniformAndNormalMoments) {
  const auto u = draws(200000, 3, [](RngStream& r) { return r.uniform(); });
  for (double x : u) ASSERT_TRUE(x >= 0.0 && x < 1.0);
  EXPECT_NEAR(oracle::mean(u), 0.5, 3e-3);
  EXPECT_NEAR(oracle::variance(u), 1.0 / 12.0, 1e-3);
  const auto z = draws(200000, 4, [](RngStream& r) { return r.normal(); });
  EXPECT_LT(oracle::ks_statistic(z, oracle::normal_cdf), oracle::ks_critical_1pct(z.size()));
}

TEST(Params, InvalidValuesThrow) {
  EXPECT_THROW(PoissonParams(0.0), std::invalid_argument);
  EXPECT_THROW(PoissonParams(-1.0), std::invalid_argument);
  EXPECT_THROW(LognormalParams(0.0, 0.0), std::invalid_argument);
  EXPECT_THROW(LognormalParams(NAN, 1.0), std::invalid_argument);
  EXPECT_THROW(ParetoParams(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(ParetoParams(2.0, 0.0), std::invalid_argument);
  EXPECT_THROW(GammaParams(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(GammaParams(1.0, -1.0), std::invalid_argument);
  EXPECT_THROW(InvChiSqParams(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(NormalParams(0.0, 0.0), std::invalid_argument);
}

TEST(Poisson, Moments) {
  const PoissonParams p(10.0);
  const auto xs = draws(100000, 11, [&](RngStream& r) { return static_cast<double>(sample_poisson(p, r)); });
  for (double x : xs) ASSERT_EQ(x, std::floor(x));
  EXPECT_NEAR(oracle::mean(xs), 10.0, 3.0 * std::sqrt(10.0 / 1e5));
  EXPECT_NEAR(oracle::variance(xs) / 10.0, 1.0, 0.05);
}

TEST(Poisson, SmallRateInversionBranch) {
  const PoissonParams p(2.5);
  const auto xs = draws(100000, 12, [&](RngStream& r) { return static_cast<double>(sample_poisson(p, r)); });
  EXPECT_NEAR(oracle::mean(xs), 2.5, 3.0 * std::sqrt(2.5 / 1e5));
  EXPECT_NEAR(oracle::variance(xs) / 2.5, 1.0, 0.05);
}

TEST(Poisson, PmfSumsToOne) {
  for (double lam : {0.3, 1.0, 10.0, 75.0}) {
    double s = 0.0;
    for (int n = 0; n < 400; ++n) s += std::exp(log_density(PoissonParams(lam), n));
    EXPECT_NEAR(s, 1.0, 1e-10) << lam;
  }
  EXPECT_DOUBLE_EQ(log_density(PoissonParams(1.0), 0.0), -1.0);
  EXPECT_EQ(log_density(PoissonParams(1.0), -1.0), kNegInf);
  EXPECT_EQ(log_density(PoissonParams(1.0), 0.5), kNegInf);
}

TEST(Lognormal, Moments) {
  const LognormalParams p(1.0, 4.0);
  const auto xs = draws(100000, 13, [&](RngStream& r) { return sample_lognormal(p, r); });
  std::vector<double> logs;
  for (double x : xs) {
    ASSERT_GT(x, 0.0);
    logs.push_back(std::log(x));
  }
  EXPECT_NEAR(oracle::mean(logs), 1.0, 3.0 * 2.0 / std::sqrt(1e5));
  EXPECT_NEAR(oracle::variance(logs) / 4.0, 1.0, 0.05);
}

TEST(Lognormal, DensityAtOne) {
  EXPECT_NEAR(log_density(LognormalParams(0.0, 1.0), 1.0), -0.5 * std::log(2.0 * std::numbers::pi), 1e-14);
  EXPECT_NEAR(log_density(LognormalParams(0.0, 1.0), 1.0), -0.918939, 1e-6);
  EXPECT_EQ(log_density(LognormalParams(0.0, 1.0), 0.0), kNegInf);
}

TEST(Pareto, InverseCdf) {
  const ParetoParams p(2.0, 1.0);
  EXPECT_DOUBLE_EQ(pareto_from_uniform(p, 0.75), 2.0);
  EXPECT_EQ(pareto_from_uniform(p, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(log_density(p, 1.0), std::log(2.0));
  EXPECT_EQ(log_density(p, 0.999), kNegInf);
}

TEST(Pareto, InverseCdfRoundTrip) {
  RngStream rng(5, 0);
  for (int i = 0; i < 10000; ++i) {
    const ParetoParams p(0.2 + 5.0 * rng.uniform(), 0.1 + 10.0 * rng.uniform());
    const double u = rng.uniform();
    const double x = pareto_from_uniform(p, u);
    ASSERT_GE(x, p.threshold());
    const double back = 1.0 - std::pow(x / p.threshold(), -p.xi());
    ASSERT_NEAR(back, u, 1e-12);
  }
}

TEST(Pareto, SampleMean) {
  const ParetoParams p(2.0, 1.0);
  const auto xs = draws(100000, 14, [&](RngStream& r) { return sample_pareto(p, r); });
  for (double x : xs) ASSERT_GE(x, 1.0);
  EXPECT_NEAR(oracle::mean(xs) / p.mean(), 1.0, 0.10);
  EXPECT_EQ(ParetoParams(1.0, 1.0).mean(), kPosInf);
}

TEST(Gamma, Moments) {
  const GammaParams g(6.0, 1.0 / 3.0);
  const auto xs = draws(100000, 15, [&](RngStream& r) { return sample_gamma(g, r); });
  EXPECT_NEAR(oracle::mean(xs), 2.0, 3.0 * std::sqrt(6.0 / 9.0 / 1e5));
  EXPECT_NEAR(oracle::variance(xs) / (2.0 / 3.0), 1.0, 0.05);
}

TEST(Gamma, ShapeOneIsExponential) {
  const GammaParams g(1.0, 2.5);
  const auto xs = draws(100000, 16, [&](RngStream& r) { return sample_gamma(g, r); });
  EXPECT_NEAR(oracle::mean(xs), 2.5, 5.0 * 2.5 / std::sqrt(1e5));
}

TEST(Gamma, MatchesOracleCdf) {
  for (double shape : {0.3, 1.0, 6.0, 250.0}) {
    const GammaParams g(shape, 0.7);
    const auto xs = draws(50000, 17, [&](RngStream& r) { return sample_gamma(g, r); });
    const double d = oracle::ks_statistic(xs, [&](double x) { return oracle::gamma_cdf(shape, 0.7, x); });
    EXPECT_LT(d, oracle::ks_critical_1pct(xs.size())) << shape;
  }
}

TEST(InvChiSq, MeanAndMedian) {
  const InvChiSqParams p(10.0, 8.0);
  const auto xs = draws(100000, 18, [&](RngStream& r) { return sample_inv_chi_sq(p, r); });
  for (double x : xs) ASSERT_GT(x, 0.0);
  EXPECT_NEAR(oracle::mean(xs) / 1.0, 1.0, 0.05);

  const InvChiSqParams q(4.0, 4.0);
  auto ys = draws(100001, 19, [&](RngStream& r) { return sample_inv_chi_sq(q, r); });
  std::nth_element(ys.begin(), ys.begin() + 50000, ys.end());
  const double expected = 4.0 / oracle::chi_squared_quantile(4.0, 0.5);
  EXPECT_NEAR(expected, 4.0 / oracle::frozen::chi2_4_median, 1e-4);
  EXPECT_NEAR(ys[50000] / expected, 1.0, 0.05);
}

TEST(Densities, IntegrateToOne) {
  auto integral = [](const FamilyParams& p, double a, double b) {
    return oracle::simpson([&](double x) { return std::exp(log_density(p, x)); }, a, b, 200000);
  };
  // Substitution x = e^t for the lognormal keeps the grid well-resolved.
  const LognormalParams ln(1.0, 4.0);
  EXPECT_NEAR(oracle::simpson([&](double t) { return std::exp(log_density(ln, std::exp(t)) + t); }, -20.0, 22.0),
              1.0, 1e-3);
  EXPECT_NEAR(oracle::simpson([&](double t) { return std::exp(log_density(ParetoParams(2.0, 1.0), std::exp(t)) + t); },
                              0.0, 40.0),
              1.0, 1e-3);
  EXPECT_NEAR(integral(GammaParams(6.0, 0.5), 0.0, 40.0), 1.0, 1e-3);
  EXPECT_NEAR(integral(GammaParams(2.0, 3.0), 0.0, 200.0), 1.0, 1e-3);
  EXPECT_NEAR(integral(NormalParams(-1.0, 2.0), -30.0, 30.0), 1.0, 1e-3);
  EXPECT_NEAR(oracle::simpson([](double t) { return std::exp(log_density(InvChiSqParams(6.0, 3.0), std::exp(t)) + t); },
                              -30.0, 30.0),
              1.0, 1e-3);
}

TEST(Densities, OutOfSupportIsNegInf) {
  EXPECT_EQ(log_density(GammaParams(2.0, 1.0), -0.1), kNegInf);
  EXPECT_EQ(log_density(InvChiSqParams(2.0, 1.0), 0.0), kNegInf);
  EXPECT_EQ(log_density(LognormalParams(0.0, 1.0), -3.0), kNegInf);
}

TEST(Samplers, Deterministic) {
  const auto a = draws(1000, 99, [](RngStream& r) { return sample_gamma(GammaParams(0.5, 1.0), r); });
  const auto b = draws(1000, 99, [](RngStream& r) { return sample_gamma(GammaParams(0.5, 1.0), r); });
  EXPECT_EQ(a, b);
}
