#pragma once

/**
 * @brief Error metrics, effective-dimension utilities, concentration audits,
 *        and log-log rate fitting.
 *
 * The exact L2 error uses Parseval in the cosine basis: with
 * b_i = xi_i (1/n) sum_j alpha_j phi_i(X_j) the estimator is
 * f_alpha = sum_i b_i phi_i, so ||f_alpha - f*||_2^2 = sum_i (b_i - a_i)^2.
 */

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "kcg/errors.hpp"
#include "kcg/kernel.hpp"
#include "kcg/linalg.hpp"
#include "kcg/philox.hpp"
#include "kcg/synthetic.hpp"

namespace kcg {

/** @brief Basis coefficients of f_alpha for a Mercer kernel. */
inline Eigen::VectorXd estimator_coeffs(const GroundTruth& truth,
                                        const std::vector<double>& train_X,
                                        const Eigen::VectorXd& alpha) {
  if (alpha.size() != static_cast<Eigen::Index>(train_X.size()))
    throw DimensionError("estimator_coeffs: alpha/train_X length mismatch");
  const Eigen::MatrixXd Phi = cosine_features(truth.spec.p, train_X);
  return truth.xi.array() * (Phi * alpha).array() / static_cast<double>(train_X.size());
}

struct McError {
  double value = 0.0;
  double std_error = 0.0;
};

/**
 * @brief Monte Carlo estimate of ||f_alpha - f*||_2^2 over fresh uniform
 *        covariates, with its standard error.
 */
inline McError l2_error_mc(const GroundTruth& truth, const KernelModel& kernel,
                           const std::vector<double>& train_X, const Eigen::VectorXd& alpha,
                           std::size_t n_mc, PhiloxRng& rng) {
  if (n_mc < 1000) throw ConfigError("l2_error_mc: n_mc must be >= 1000");
  if (alpha.size() != static_cast<Eigen::Index>(train_X.size()))
    throw DimensionError("l2_error_mc: alpha/train_X length mismatch");
  const double n_train = static_cast<double>(train_X.size());

  const bool mercer = kernel.family() == KernelFamily::spectral_mercer;
  Eigen::VectorXd b;
  if (mercer) b = estimator_coeffs(truth, train_X, alpha);

  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < n_mc; ++k) {
    const double x = rng.uniform();
    double fhat = 0.0;
    if (mercer) {
      fhat = b[0];
      for (Eigen::Index i = 1; i < b.size(); ++i)
        fhat += b[i] * cosine_phi(static_cast<std::size_t>(i) + 1, x);
    } else {
      for (std::size_t j = 0; j < train_X.size(); ++j)
        fhat += alpha[static_cast<Eigen::Index>(j)] * kernel.eval(train_X[j], x);
      fhat /= n_train;
    }
    const double d = fhat - truth.f_star(x);
    sum += d * d;
    sum_sq += d * d * d * d;
  }
  McError out;
  const double nm = static_cast<double>(n_mc);
  out.value = sum / nm;
  const double var = std::max(sum_sq / nm - out.value * out.value, 0.0);
  out.std_error = std::sqrt(var / nm);
  return out;
}

inline McError l2_error_mc(const GroundTruth& truth, const KernelModel& kernel,
                           const std::vector<double>& train_X, const Eigen::VectorXd& alpha,
                           std::size_t n_mc, std::uint64_t seed) {
  PhiloxRng rng{seed, static_cast<std::uint64_t>(StreamPurpose::mc_eval), n_mc};
  return l2_error_mc(truth, kernel, train_X, alpha, n_mc, rng);
}

/**
 * @brief Exact squared L2(P_X) error via Parseval.
 *
 * Requires a Mercer kernel; any other family falls back to a Monte Carlo
 * estimate (100k points, stream derived from the problem seed).
 */
inline double l2_error_exact(const GroundTruth& truth, const KernelModel& kernel,
                             const std::vector<double>& train_X, const Eigen::VectorXd& alpha) {
  if (kernel.family() != KernelFamily::spectral_mercer) {
    return l2_error_mc(truth, kernel, train_X, alpha, 100000, truth.spec.seed).value;
  }
  const Eigen::VectorXd b = estimator_coeffs(truth, train_X, alpha);
  return (b - truth.target_coeffs).squaredNorm();
}

/**
 * @brief Exact squared L2 error reusing a factored Gram's feature matrix
 *        (W = sqrt(Xi) Phi, so b = sqrt(xi) .* (W alpha) / n).
 */
inline double l2_error_exact(const GroundTruth& truth, const FactoredGram& g,
                             const Eigen::VectorXd& alpha) {
  if (alpha.size() != g.W.cols()) throw DimensionError("l2_error_exact: alpha length mismatch");
  const Eigen::VectorXd b =
      truth.xi.cwiseSqrt().array() * (g.W * alpha).array() / static_cast<double>(g.W.cols());
  return (b - truth.target_coeffs).squaredNorm();
}

/** @brief Effective dimension N(lambda) = sum_i xi_i / (xi_i + lambda). */
inline double effective_dimension(const Eigen::VectorXd& eigenvalues, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("effective_dimension: lambda must be positive");
  return (eigenvalues.array() / (eigenvalues.array() + lambda)).sum();
}

/** @brief Result of the two concentration audits (shared trial draws). */
struct AuditReport {
  double fraction_operator = 0.0;  ///< trials violating the operator bound
  double fraction_warped = 0.0;    ///< trials violating the warped bound
  double bound_operator = 0.0;     ///< (4 kappa / sqrt(n)) sqrt(log(2/gamma))
  double bound_warped = 0.0;       ///< warped Bernstein-type bound
  double effective_dim = 0.0;      ///< N(lambda) used in the warped bound
  std::size_t trials = 0;
};

/**
 * @brief Monte Carlo audit of both concentration bounds.
 *
 * Per trial: draw n uniform covariates, form the empirical covariance
 * S_n = (1/n) W W^T in the basis coordinates (W = sqrt(Xi) Phi, S = diag(xi)),
 * and test
 *   ||S_n - S||_HS            <= (4 kappa / sqrt(n)) sqrt(log(2/gamma)),
 *   ||(S+lambda I)^{-1/2}(S_n - S)||_HS
 *       <= 2 sqrt(kappa) (sqrt(N(lambda)/n) + 2 sqrt(kappa)/(sqrt(lambda) n))
 *          log(6/gamma).
 * Both violation fractions should be at most gamma up to binomial slack.
 */
inline AuditReport run_concentration_audits(const GroundTruth& truth, std::size_t n,
                                            double lambda, double gamma, std::size_t n_trials,
                                            std::uint64_t seed) {
  if (n < 1 || n_trials < 1) throw ConfigError("audit: n and n_trials must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("audit: gamma must lie in (0,1)");
  if (!(lambda > 0.0)) throw ConfigError("audit: lambda must be positive");

  const Eigen::VectorXd& xi = truth.xi;
  const double kappa = truth.kappa;
  const double n_d = static_cast<double>(n);
  AuditReport rep;
  rep.trials = n_trials;
  rep.bound_operator = (4.0 * kappa / std::sqrt(n_d)) * std::sqrt(std::log(2.0 / gamma));
  rep.effective_dim = effective_dimension(xi, lambda);
  rep.bound_warped = 2.0 * std::sqrt(kappa) *
                     (std::sqrt(rep.effective_dim / n_d) + 2.0 * std::sqrt(kappa) / (std::sqrt(lambda) * n_d)) *
                     std::log(6.0 / gamma);

  const Eigen::VectorXd sqrt_xi = xi.cwiseSqrt();
  const Eigen::VectorXd warp = (xi.array() + lambda).rsqrt();
  std::size_t v1 = 0, v2 = 0;
  std::vector<double> X(n);
  for (std::size_t t = 0; t < n_trials; ++t) {
    PhiloxRng rng{seed, static_cast<std::uint64_t>(StreamPurpose::audit),
                  static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t)};
    for (std::size_t i = 0; i < n; ++i) X[i] = rng.uniform();
    Eigen::MatrixXd W = cosine_features(truth.spec.p, X);
    W.array().colwise() *= sqrt_xi.array();
    Eigen::MatrixXd Dmat = (W * W.transpose()) / n_d;
    Dmat.diagonal() -= xi;
    if (Dmat.norm() > rep.bound_operator) ++v1;
    Dmat.array().colwise() *= warp.array();
    if (Dmat.norm() > rep.bound_warped) ++v2;
  }
  rep.fraction_operator = static_cast<double>(v1) / static_cast<double>(n_trials);
  rep.fraction_warped = static_cast<double>(v2) / static_cast<double>(n_trials);
  return rep;
}

/** @brief Violation fraction for the operator concentration bound. */
inline double audit_operator_concentration(const GroundTruth& truth, std::size_t n, double gamma,
                                           std::size_t n_trials, std::uint64_t seed) {
  return run_concentration_audits(truth, n, truth.kappa, gamma, n_trials, seed).fraction_operator;
}

/** @brief Violation fraction for the warped (Bernstein-type) bound. */
inline double audit_warped_concentration(const GroundTruth& truth, std::size_t n, double lambda,
                                         double gamma, std::size_t n_trials, std::uint64_t seed) {
  return run_concentration_audits(truth, n, lambda, gamma, n_trials, seed).fraction_warped;
}

/** @brief Median / IQR summary and the fitted log-log rate. */
struct RateReport {
  std::vector<std::size_t> n_grid;
  std::vector<std::vector<double>> errors;  ///< per-n replicate errors
  std::vector<double> medians;
  std::vector<double> iqr;
  double slope = 0.0;
  double slope_se = 0.0;
  double intercept = 0.0;
  double theoretical_slope = 0.0;  ///< -2r/(2r+s)
  std::vector<std::string> warnings;
};

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace detail

/**
 * @brief OLS fit of log(median error) on log(n).
 *
 * Non-positive medians are excluded with a warning; fewer than 4 surviving
 * points is an error.  Medians, not means: the guarantees are
 * high-probability statements, so tail replicates must not dominate.
 */
inline RateReport fit_rate(const std::vector<std::size_t>& n_grid,
                           const std::vector<std::vector<double>>& errors,
                           double theoretical_slope) {
  if (n_grid.size() != errors.size())
    throw DimensionError("fit_rate: n_grid/errors length mismatch");
  if (n_grid.size() < 4) throw ConfigError("fit_rate: need at least 4 sample sizes");

  RateReport rep;
  rep.n_grid = n_grid;
  rep.errors = errors;
  rep.theoretical_slope = theoretical_slope;

  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (errors[i].empty()) throw DimensionError("fit_rate: empty replicate list");
    const double med = detail::quantile(errors[i], 0.5);
    rep.medians.push_back(med);
    rep.iqr.push_back(detail::quantile(errors[i], 0.75) - detail::quantile(errors[i], 0.25));
    if (med > 0.0) {
      xs.push_back(std::log(static_cast<double>(n_grid[i])));
      ys.push_back(std::log(med));
    } else {
      rep.warnings.push_back("excluded n=" + std::to_string(n_grid[i]) +
                             ": non-positive median error");
    }
  }
  const std::size_t k = xs.size();
  if (k < 4) throw NumericError("fit_rate: fewer than 4 usable grid points");

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(k);
  my /= static_cast<double>(k);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw NumericError("fit_rate: degenerate n grid");
  rep.slope = sxy / sxx;
  rep.intercept = my - rep.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double resid = ys[i] - (rep.intercept + rep.slope * xs[i]);
    rss += resid * resid;
  }
  rep.slope_se = (k > 2) ? std::sqrt(rss / static_cast<double>(k - 2) / sxx) : 0.0;
  return rep;
}

}  // namespace kcg
