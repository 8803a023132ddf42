#pragma once

/**
 * @brief Normalized kernel systems and the rescaled inner products.
 *
 * Conventions (used consistently everywhere):
 *   K        = (1/n) (k(X_i, X_j))_{ij}      -- the 1/n lives inside the matrix
 *   <u,v>_n  = (1/n) sum_i u_i v_i           -- and the inner product is rescaled
 *   ||u||_{K^l} = sqrt(<u, K^l u>_n)
 * With both conventions together, ||alpha||_{K} equals the RKHS norm of the
 * kernel expansion f_alpha, and the fitted-value vector is exactly K alpha.
 */

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kcg/errors.hpp"
#include "kcg/kernel.hpp"

namespace kcg {

/** @brief Covariate sample with an optionally unlabeled tail. */
struct Dataset {
  std::vector<double> X;  ///< all covariates, labeled first (size n_total)
  Eigen::VectorXd Y;      ///< responses for the first n_labeled points
  std::size_t n_labeled = 0;
  std::size_t n_total = 0;

  void validate() const {
    if (n_labeled < 1) throw ConfigError("dataset needs at least one labeled point");
    if (n_total < n_labeled) throw ConfigError("n_total must be >= n_labeled");
    if (X.size() != n_total) throw DimensionError("covariate count != n_total");
    if (static_cast<std::size_t>(Y.size()) != n_labeled)
      throw DimensionError("response count != n_labeled");
  }
};

/**
 * @brief Semi-supervised response extension: Ytilde = (n_total/n)(Y_1..Y_n, 0..0).
 *
 * Returns the length-n_total response. When the dataset has no unlabeled
 * points this is Y itself (scale 1, no padding).
 */
inline Eigen::VectorXd extend_semi_supervised(const Dataset& data) {
  data.validate();
  const auto n = static_cast<Eigen::Index>(data.n_labeled);
  const auto nt = static_cast<Eigen::Index>(data.n_total);
  Eigen::VectorXd ytilde = Eigen::VectorXd::Zero(nt);
  ytilde.head(n) = (static_cast<double>(nt) / static_cast<double>(n)) * data.Y;
  return ytilde;
}

/**
 * @brief Dense normalized kernel system: K = (1/n)(k(X_i,X_j)), response y.
 *
 * For datasets with unlabeled points, y is the (n_total/n)-rescaled
 * zero-padded response vector (the semi-supervised construction).
 */
struct GramSystem {
  Eigen::MatrixXd K;   ///< n x n, symmetric PSD, normalized by 1/n
  Eigen::VectorXd y;   ///< response (extended when unlabeled points exist)
  double kappa = 1.0;  ///< declared kernel bound, for degeneracy guards
  std::size_t n_labeled = 0;  ///< labeled count (for stopping-rule sample size)

  Eigen::Index size() const { return K.rows(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return K.selfadjointView<Eigen::Lower>() * v; }
  /** @brief Rescaled dot product (1/n) u.v. */
  double dot(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    return u.dot(v) / static_cast<double>(size());
  }
};

/**
 * @brief Factored normalized kernel system K = W^T W / n with W = sqrt(Xi) Phi.
 *
 * Keeps only the p x n feature matrix; matvecs cost O(pn). Used when n is too
 * large for the dense Gram (semi-supervised runs) without changing any
 * downstream algebra.
 */
struct FactoredGram {
  Eigen::MatrixXd W;   ///< p x n scaled feature matrix
  Eigen::VectorXd y;
  double kappa = 1.0;
  std::size_t n_labeled = 0;

  Eigen::Index size() const { return W.cols(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    return W.transpose() * (W * v) / static_cast<double>(size());
  }
  double dot(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    return u.dot(v) / static_cast<double>(size());
  }
};

/** @brief Rescaled dot product (1/n) sum u_i v_i. */
inline double rescaled_dot(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) throw DimensionError("rescaled_dot: length mismatch");
  if (u.size() == 0) throw DimensionError("rescaled_dot: empty vectors");
  return u.dot(v) / static_cast<double>(u.size());
}

/**
 * @brief Assemble the normalized Gram system for a dataset.
 *
 * Entry (i,j) is k(X_i, X_j)/n_total; the matrix is symmetrized as
 * (K + K^T)/2 after assembly to kill roundoff asymmetry.  Non-finite kernel
 * values raise an error naming the offending pair.
 */
inline GramSystem assemble_gram(const KernelModel& kernel, const Dataset& data) {
  data.validate();
  const auto n = static_cast<Eigen::Index>(data.n_total);
  GramSystem g;
  g.K.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = kernel.eval(data.X[static_cast<size_t>(i)], data.X[static_cast<size_t>(j)]);
      if (!std::isfinite(v)) {
        throw NumericError("kernel evaluation non-finite at pair (" + std::to_string(i) + "," +
                           std::to_string(j) + ")");
      }
      g.K(i, j) = v / static_cast<double>(n);
      g.K(j, i) = g.K(i, j);
    }
  }
  g.K = 0.5 * (g.K + g.K.transpose()).eval();
  g.y = extend_semi_supervised(data);
  g.kappa = kernel.kappa();
  g.n_labeled = data.n_labeled;
  return g;
}

/**
 * @brief Assemble the factored system W = sqrt(Xi) Phi for a Mercer kernel.
 */
inline FactoredGram assemble_factored_gram(const KernelModel& kernel, const Dataset& data) {
  if (kernel.family() != KernelFamily::spectral_mercer)
    throw ConfigError("factored Gram requires a spectral Mercer kernel");
  data.validate();
  FactoredGram g;
  g.W = cosine_features(kernel.rank(), data.X);
  g.W.array().colwise() *= kernel.eigenvalues().array().sqrt();
  g.y = extend_semi_supervised(data);
  g.kappa = kernel.kappa();
  g.n_labeled = data.n_labeled;
  return g;
}

/**
 * @brief Weighted norm ||u||_{K^l} = sqrt(<u, K^l u>_n); l=0 is the rescaled
 * Euclidean norm, l=1 the K_n-norm.
 *
 * Small negative squares (roundoff) are clamped to zero; negatives beyond
 * -1e-10 * kappa * ||u||_n^2 raise a degeneracy error.
 */
template <class System>
double weighted_norm(const Eigen::VectorXd& u, const System& g, int l) {
  if (l < 0 || l > 4) throw ConfigError("weighted_norm requires 0 <= l <= 4");
  if (u.size() != g.size()) throw DimensionError("weighted_norm: length mismatch");
  Eigen::VectorXd w = u;
  for (int k = 0; k < l; ++k) w = g.apply(w);
  const double sq = g.dot(u, w);
  if (sq < 0.0) {
    const double floor = -1e-10 * std::max(g.kappa, 1.0) * g.dot(u, u);
    if (sq < floor) throw NumericError("weighted_norm: negative square beyond roundoff tolerance");
    return 0.0;
  }
  return std::sqrt(sq);
}

}  // namespace kcg
