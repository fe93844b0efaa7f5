#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>

#include <Eigen/Dense>

#include "riskcap/error.hpp"

namespace riskcap {

/// Gaussian approximation of a posterior: mean at the mode, covariance the
/// inverse of the observed information (negated Hessian of the log density).
struct LaplaceResult {
  Eigen::VectorXd mode;
  Eigen::MatrixXd covariance;
  std::size_t iterations = 0;
};

struct LaplaceOptions {
  std::size_t max_iterations = 500;
  /// Converged when the Newton decrement g' H^-1 g / 2 drops below this.
  double decrement_tolerance = 1e-12;
};

template <class F>
concept LogDensityFunction = requires(const F& f, const Eigen::VectorXd& x) {
  { f(x) } -> std::convertible_to<double>;
};

namespace detail {

/// Central-difference step per coordinate: max(1e-5 |x_i|, 1e-7).
inline double fd_step(double x) { return std::max(1e-5 * std::fabs(x), 1e-7); }

}  // namespace detail

template <LogDensityFunction F>
Eigen::VectorXd numeric_gradient(const F& f, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd g(n);
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = detail::fd_step(x[i]);
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

template <LogDensityFunction F>
Eigen::MatrixXd numeric_hessian(const F& f, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd hess(n, n);
  Eigen::VectorXd probe = x;
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double hi = detail::fd_step(x[i]);
    probe[i] = x[i] + hi;
    const double fp = f(probe);
    probe[i] = x[i] - hi;
    const double fm = f(probe);
    probe[i] = x[i];
    hess(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double hj = detail::fd_step(x[j]);
      auto eval = [&](double si, double sj) {
        probe[i] = x[i] + si * hi;
        probe[j] = x[j] + sj * hj;
        const double v = f(probe);
        probe[i] = x[i];
        probe[j] = x[j];
        return v;
      };
      const double value = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * hi * hj);
      hess(i, j) = value;
      hess(j, i) = value;
    }
  }
  return hess;
}

/// Finds the mode of `log_posterior` by damped Newton ascent from
/// `initial_guess` (gradient ascent where the Hessian is not negative
/// definite), then inverts the negated numeric Hessian at the mode.
///
/// Throws ComputationError if the maximization fails or the Hessian at the
/// found point is not negative definite.
template <LogDensityFunction F>
LaplaceResult laplace_approximation(const F& log_posterior, const Eigen::VectorXd& initial_guess,
                                    const LaplaceOptions& options = {}) {
  Eigen::VectorXd x = initial_guess;
  double fx = log_posterior(x);
  if (!std::isfinite(fx)) throw ComputationError("log posterior is not finite at the initial guess");

  bool converged = false;
  std::size_t iter = 0;
  for (; iter < options.max_iterations && !converged; ++iter) {
    const Eigen::VectorXd g = numeric_gradient(log_posterior, x);
    const Eigen::MatrixXd info = -numeric_hessian(log_posterior, x);
    Eigen::LLT<Eigen::MatrixXd> llt(info);

    Eigen::VectorXd direction;
    if (llt.info() == Eigen::Success) {
      direction = llt.solve(g);
      if (0.5 * g.dot(direction) < options.decrement_tolerance) {
        converged = true;
        break;
      }
    } else {
      // Scale a plain gradient step to the local coordinate magnitudes.
      direction = g;
      const double norm = g.norm();
      if (norm == 0.0) break;
      direction *= std::max(1e-3, 1e-2 * x.norm()) / norm;
    }

    double t = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      const Eigen::VectorXd candidate = x + t * direction;
      const double fc = log_posterior(candidate);
      if (std::isfinite(fc) && fc >= fx) {
        const bool negligible = (candidate - x).cwiseAbs().maxCoeff() <=
                                1e-14 * std::max(1.0, x.cwiseAbs().maxCoeff());
        x = candidate;
        fx = fc;
        improved = true;
        if (negligible) converged = true;
        break;
      }
    }
    if (!improved) {
      // No ascent possible along the direction: accept as stationary if the
      // gradient is at noise level.
      converged = g.cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, std::fabs(fx));
      break;
    }
  }
  if (!converged) throw ComputationError("Laplace approximation: mode search did not converge");

  const Eigen::MatrixXd info = -numeric_hessian(log_posterior, x);
  const Eigen::MatrixXd symmetric = 0.5 * (info + info.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(symmetric);
  if (eigen.info() != Eigen::Success || eigen.eigenvalues().minCoeff() <= 0.0) {
    throw ComputationError("Laplace approximation: Hessian is not negative definite at the mode");
  }
  Eigen::MatrixXd cov = symmetric.inverse();
  cov = 0.5 * (cov + cov.transpose());
  return {x, cov, iter};
}

}  // namespace riskcap
