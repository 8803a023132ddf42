#pragma once

/**
 * @brief Kernel models: Gaussian, Linear, and finite-rank spectral (Mercer).
 *
 * The spectral kernel uses the cosine orthonormal system on [0,1] under the
 * uniform distribution:
 *   phi_1(x) = 1,   phi_i(x) = sqrt(2) cos((i-1) pi x)  for i >= 2,
 * so k(x,y) = sum_i xi_i phi_i(x) phi_i(y) has exactly known eigenpairs and
 * every population quantity downstream is closed-form.
 */

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kcg/errors.hpp"

namespace kcg {

/** @brief Kernel family selector. */
enum class KernelFamily {
  gaussian,         ///< k(x,y) = exp(-(x-y)^2 / (2 bw^2)), kappa = 1
  linear,           ///< k(x,y) = x*y on [-B, B], kappa = B^2
  spectral_mercer,  ///< finite-rank expansion in the cosine basis, kappa = 2*sum(xi)
};

/** @brief phi_i(x) of the cosine basis (i is 1-based). */
inline double cosine_phi(int i, double x) {
  if (i == 1) return 1.0;
  return std::sqrt(2.0) * std::cos((i - 1) * M_PI * x);
}

/** @brief Feature matrix Phi with Phi(i-1, j) = phi_i(x_j); shape p x |x|. */
inline Eigen::MatrixXd cosine_features(int p, const std::vector<double>& x) {
  Eigen::MatrixXd phi(p, static_cast<Eigen::Index>(x.size()));
  for (Eigen::Index j = 0; j < phi.cols(); ++j) {
    phi(0, j) = 1.0;
    for (int i = 2; i <= p; ++i) {
      phi(i - 1, j) = std::sqrt(2.0) * std::cos((i - 1) * M_PI * x[static_cast<size_t>(j)]);
    }
  }
  return phi;
}

/**
 * @brief A positive-definite kernel with a declared uniform bound kappa.
 *
 * kappa is declared, not estimated: Gaussian declares 1, Linear declares the
 * squared domain bound, SpectralMercer declares 2*sum(xi) (cosine-basis sup).
 */
class KernelModel {
public:
  /** @brief Gaussian kernel with the given bandwidth (> 0). */
  static KernelModel gaussian(double bandwidth) {
    if (!(bandwidth > 0.0)) throw ConfigError("gaussian bandwidth must be positive");
    KernelModel k;
    k.family_ = KernelFamily::gaussian;
    k.bandwidth_ = bandwidth;
    k.kappa_ = 1.0;
    return k;
  }

  /** @brief Linear kernel on the interval [-domain_bound, domain_bound]. */
  static KernelModel linear(double domain_bound) {
    if (!(domain_bound > 0.0)) throw ConfigError("linear domain bound must be positive");
    KernelModel k;
    k.family_ = KernelFamily::linear;
    k.domain_bound_ = domain_bound;
    k.kappa_ = domain_bound * domain_bound;
    return k;
  }

  /** @brief Finite-rank Mercer kernel with eigenvalues xi (positive, non-increasing). */
  static KernelModel spectral_mercer(Eigen::VectorXd xi) {
    if (xi.size() == 0) throw ConfigError("spectral kernel needs at least one eigenvalue");
    for (Eigen::Index i = 0; i < xi.size(); ++i) {
      if (!(xi[i] > 0.0)) throw ConfigError("spectral eigenvalues must be strictly positive");
      if (i > 0 && xi[i] > xi[i - 1]) throw ConfigError("spectral eigenvalues must be non-increasing");
    }
    KernelModel k;
    k.family_ = KernelFamily::spectral_mercer;
    k.xi_ = std::move(xi);
    k.kappa_ = 2.0 * k.xi_.sum();
    return k;
  }

  KernelFamily family() const { return family_; }
  double kappa() const { return kappa_; }
  double bandwidth() const { return bandwidth_; }
  const Eigen::VectorXd& eigenvalues() const { return xi_; }
  int rank() const { return static_cast<int>(xi_.size()); }

  /** @brief Evaluate k(x, y). */
  double eval(double x, double y) const {
    switch (family_) {
      case KernelFamily::gaussian: {
        const double d = (x - y) / bandwidth_;
        return std::exp(-0.5 * d * d);
      }
      case KernelFamily::linear:
        return x * y;
      case KernelFamily::spectral_mercer: {
        double acc = xi_[0];
        for (int i = 2; i <= rank(); ++i) {
          acc += xi_[i - 1] * 2.0 * std::cos((i - 1) * M_PI * x) * std::cos((i - 1) * M_PI * y);
        }
        return acc;
      }
    }
    return 0.0;  // unreachable
  }

private:
  KernelModel() = default;

  KernelFamily family_ = KernelFamily::gaussian;
  double bandwidth_ = 1.0;
  double domain_bound_ = 1.0;
  Eigen::VectorXd xi_;
  double kappa_ = 1.0;
};

}  // namespace kcg
