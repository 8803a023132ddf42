#pragma once

/**
 * @brief Linear spectral-filter baselines and a hold-out model selector.
 *
 * A spectral filter produces alpha = F(K) Y: Tikhonov F(x) = 1/(x+lambda),
 * spectral cutoff F(x) = (1/x) 1{x >= lambda}, Landweber
 * F(x) = step * sum_{j<t} (1 - step*x)^j.  Tikhonov for a single lambda is
 * solved by a direct symmetric factorization; grids share one
 * eigendecomposition.
 */

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "kcg/errors.hpp"
#include "kcg/kernel.hpp"
#include "kcg/linalg.hpp"

namespace kcg {

/** @brief Spectral-filter family. */
enum class FilterFamily { tikhonov, spectral_cutoff, landweber };

/** @brief One filter instance: a family plus its regularization parameter. */
struct FilterSpec {
  FilterFamily family = FilterFamily::tikhonov;
  double lambda = 1.0;   ///< tikhonov / cutoff threshold (> 0)
  long iterations = 10;  ///< landweber iteration count t (>= 0)
  double step = 0.0;     ///< landweber step; 0 means the default 1/(2 kappa)

  void validate(double kappa) const {
    switch (family) {
      case FilterFamily::tikhonov:
      case FilterFamily::spectral_cutoff:
        if (!(lambda > 0.0)) throw ConfigError("filter lambda must be positive");
        break;
      case FilterFamily::landweber: {
        if (iterations < 0) throw ConfigError("landweber iteration count must be >= 0");
        const double st = effective_step(kappa);
        if (!(st > 0.0) || st > 1.0 / kappa)
          throw ConfigError("landweber step must lie in (0, 1/kappa]");
        break;
      }
    }
  }

  double effective_step(double kappa) const {
    return step > 0.0 ? step : 1.0 / (2.0 * kappa);
  }
};

inline double filter_value(const FilterSpec& spec, double x, double kappa) {
  switch (spec.family) {
    case FilterFamily::tikhonov:
      return 1.0 / (x + spec.lambda);
    case FilterFamily::spectral_cutoff:
      return (x >= spec.lambda) ? 1.0 / x : 0.0;
    case FilterFamily::landweber: {
      const double st = spec.effective_step(kappa);
      // step * sum_{j<t} (1-step*x)^j, summed directly for exactness at x=0
      double acc = 0.0;
      double pw = 1.0;
      const double base = 1.0 - st * x;
      for (long j = 0; j < spec.iterations; ++j) {
        acc += pw;
        pw *= base;
      }
      return st * acc;
    }
  }
  return 0.0;
}

namespace detail {

inline const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& eigensolve(
    const Eigen::MatrixXd& K, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& work) {
  work.compute(K);
  if (work.info() != Eigen::Success)
    throw NumericError("eigendecomposition of the Gram matrix failed");
  return work;
}

}  // namespace detail

/**
 * @brief Fit one spectral filter: alpha = F(K) Y.
 *
 * Tikhonov solves (K + lambda I) alpha = Y directly (LDLT); the other
 * families eigendecompose K and apply the filter per eigenvalue.
 */
inline Eigen::VectorXd filter_fit(const GramSystem& g, const FilterSpec& spec) {
  spec.validate(g.kappa);
  if (spec.family == FilterFamily::tikhonov) {
    Eigen::MatrixXd A = g.K;
    A.diagonal().array() += spec.lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("tikhonov factorization failed");
    return ldlt.solve(g.y);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  detail::eigensolve(g.K, es);
  const Eigen::VectorXd& evs = es.eigenvalues();
  Eigen::VectorXd proj = es.eigenvectors().transpose() * g.y;
  for (Eigen::Index i = 0; i < evs.size(); ++i) {
    proj[i] *= filter_value(spec, std::max(evs[i], 0.0), g.kappa);
  }
  return es.eigenvectors() * proj;
}

/**
 * @brief Fit a whole grid of filters sharing one eigendecomposition.
 *
 * All specs must belong to the same family; the grid is the per-spec
 * regularization parameter.
 */
inline std::vector<Eigen::VectorXd> filter_fit_grid(const GramSystem& g,
                                                    const std::vector<FilterSpec>& grid) {
  if (grid.empty()) throw ConfigError("filter grid must not be empty");
  for (const auto& spec : grid) spec.validate(g.kappa);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  detail::eigensolve(g.K, es);
  const Eigen::VectorXd& evs = es.eigenvalues();
  const Eigen::VectorXd proj = es.eigenvectors().transpose() * g.y;
  std::vector<Eigen::VectorXd> out;
  out.reserve(grid.size());
  for (const auto& spec : grid) {
    Eigen::VectorXd scaled = proj;
    for (Eigen::Index i = 0; i < evs.size(); ++i) {
      scaled[i] *= filter_value(spec, std::max(evs[i], 0.0), g.kappa);
    }
    out.push_back(es.eigenvectors() * scaled);
  }
  return out;
}

/**
 * @brief Pick the candidate with the smallest validation mean squared error.
 *
 * Each candidate is a coefficient vector over the training points; its
 * prediction at x is (1/n_train) sum_j alpha_j k(X_j, x).  Ties break toward
 * the smaller index (the more regularized model when candidates are ordered
 * weakest-fit first).
 */
inline std::size_t holdout_select(const KernelModel& kernel, const std::vector<double>& train_X,
                                  const std::vector<Eigen::VectorXd>& candidates,
                                  const std::vector<double>& val_X, const Eigen::VectorXd& val_Y) {
  if (candidates.empty()) throw DimensionError("holdout_select: empty candidate list");
  if (val_X.empty()) throw DimensionError("holdout_select: empty validation set");
  if (static_cast<Eigen::Index>(val_X.size()) != val_Y.size())
    throw DimensionError("holdout_select: validation X/Y length mismatch");
  const double n_train = static_cast<double>(train_X.size());

  // Evaluate the kernel cross matrix once: C(q, j) = k(val_X[q], train_X[j]).
  Eigen::MatrixXd C(val_X.size(), train_X.size());
  for (std::size_t q = 0; q < val_X.size(); ++q)
    for (std::size_t j = 0; j < train_X.size(); ++j)
      C(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(j)) =
          kernel.eval(val_X[q], train_X[j]);

  std::size_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (candidates[c].size() != static_cast<Eigen::Index>(train_X.size()))
      throw DimensionError("holdout_select: candidate length mismatch");
    const Eigen::VectorXd pred = (C * candidates[c]) / n_train;
    const double err = (pred - val_Y).squaredNorm() / static_cast<double>(val_X.size());
    if (err < best_err) {  // strict: ties keep the smaller index
      best_err = err;
      best = c;
    }
  }
  return best;
}

}  // namespace kcg
