#pragma once

/**
 * @brief Conjugate-gradient regression in the K^l-weighted rescaled norm.
 *
 * After m iterations, alpha_m minimizes ||Y - K alpha||_{K^l} over the Krylov
 * space span{Y, KY, ..., K^{m-1}Y}.  The implementation uses the standard
 * two-term recurrence with search directions made K^{l+2}-conjugate; the
 * variational property is validated against a dense brute-force Krylov oracle
 * in the test suite.  l=1 is the main method (residuals K^2-orthogonal),
 * l=0 is kernel partial least squares.
 *
 * Alongside the iterates the residual polynomial is tracked: alpha_m =
 * q_m(K) Y and r_m = p_m(K) Y with p_m(x) = 1 - x q_m(x).  The constant term
 * q_m(0) = |p_m'(0)| is needed by the adaptive stopping rule; full monomial
 * coefficients are kept when max_iters <= 200 so tests can reconstruct
 * iterates from the polynomial.
 */

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kcg/errors.hpp"
#include "kcg/kernel.hpp"
#include "kcg/linalg.hpp"

namespace kcg {

/** @brief Why a CG run ended. */
enum class StopReason {
  max_iters,    ///< iteration budget exhausted
  breakdown,    ///< Krylov space numerically exhausted (m_final reached)
  discrepancy,  ///< a stopping rule fired (set by run-with-stopping drivers)
};

/** @brief CG run configuration. */
struct CGConfig {
  int l = 1;                     ///< norm exponent (0 <= l <= 4); stopping rules apply at l=1
  int max_iters = 50;            ///< iteration budget (clamped to n; Krylov dim <= n)
  double breakdown_tol = 1e-12;  ///< relative residual tolerance declaring m_final
  bool reorthogonalize = true;   ///< re-conjugate new directions against all previous ones

  void validate() const {
    if (l < 0 || l > 4) throw ConfigError("CG requires 0 <= l <= 4");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (!(breakdown_tol > 0.0)) throw ConfigError("breakdown_tol must be positive");
  }
};

/** @brief Per-iteration CG history (immutable after the run). */
struct CGFit {
  int l = 1;                                  ///< norm exponent the run used
  std::vector<Eigen::VectorXd> alphas;        ///< alpha_0 = 0, ..., alpha_M
  std::vector<Eigen::VectorXd> residuals;     ///< r_m = Y - K alpha_m
  std::vector<double> residual_norms;         ///< ||r_m||_{K^l}
  std::vector<double> alpha_norms;            ///< ||alpha_m||_{K} (the RKHS norm)
  std::vector<double> q_at_zero;              ///< q_m(0) = |p_m'(0)|
  std::vector<Eigen::VectorXd> poly_coeffs;   ///< monomial coeffs of q_m (if tracked)
  bool m_final_reached = false;
  StopReason stop_reason = StopReason::max_iters;

  /** @brief Number of stored iterates (stop index + 1). */
  std::size_t iterations() const { return alphas.empty() ? 0 : alphas.size() - 1; }
};

/**
 * @brief Run CG-l on the system (K, Y).
 *
 * Works for any System providing size(), apply(v) = K v, and the rescaled
 * dot(u, v); both GramSystem and FactoredGram qualify.
 */
template <class System>
CGFit cg_run(const System& g, const Eigen::VectorXd& Y, const CGConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = g.size();
  if (Y.size() != n) throw DimensionError("cg_run: response length != system size");
  const int max_iters = static_cast<int>(std::min<Eigen::Index>(cfg.max_iters, n));
  const bool track_poly = cfg.max_iters <= 200;

  CGFit fit;
  fit.l = cfg.l;

  // K^j r for j = 0..max(l,1); chain[0] = r, chain[1] = K r, ...
  const int depth = std::max(cfg.l, 1);
  auto klpow = [&](const Eigen::VectorXd& v, int times) {
    Eigen::VectorXd w = v;
    for (int k = 0; k < times; ++k) w = g.apply(w);
    return w;
  };

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd kalpha = Eigen::VectorXd::Zero(n);  // K alpha, for ||alpha||_K
  Eigen::VectorXd r = Y;
  Eigen::VectorXd t = g.apply(r);                     // K r
  Eigen::VectorXd s = (cfg.l == 0) ? r : klpow(t, cfg.l - 1);  // K^l r

  const double rnorm0_sq = g.dot(r, s);
  const double rnorm0 = std::sqrt(std::max(rnorm0_sq, 0.0));

  fit.alphas.push_back(alpha);
  fit.residuals.push_back(r);
  fit.residual_norms.push_back(rnorm0);
  fit.alpha_norms.push_back(0.0);
  fit.q_at_zero.push_back(0.0);
  if (track_poly) fit.poly_coeffs.push_back(Eigen::VectorXd::Zero(1));

  if (!(rnorm0 > 0.0)) {  // Y = 0 (or numerically so): the zero fit is exact
    fit.m_final_reached = true;
    fit.stop_reason = StopReason::breakdown;
    return fit;
  }

  // Direction state: d, z = K d, zk = K z, w = K^l z (w aliases z or zk for small l).
  Eigen::VectorXd d = r;
  Eigen::VectorXd z = t;
  Eigen::VectorXd zk = g.apply(z);
  Eigen::VectorXd w = (cfg.l == 0) ? z : (cfg.l == 1 ? zk : klpow(zk, cfg.l - 1));

  // Polynomial state: q (coeffs of q_m), delta (coeffs of the direction poly).
  // Constant terms are tracked unconditionally (q0, delta0).
  double q0 = 0.0, delta0 = 1.0;
  Eigen::VectorXd qpoly, dpoly;
  if (track_poly) {
    qpoly = Eigen::VectorXd::Zero(max_iters + 1);
    dpoly = Eigen::VectorXd::Zero(max_iters + 1);
    dpoly[0] = 1.0;
  }

  // Stored normalized directions for reorthogonalization.
  std::vector<Eigen::VectorXd> Ds, Zs, ZKs, Ws, DPs;
  std::vector<double> D0s;

  for (int m = 1; m <= max_iters; ++m) {
    const double denom = g.dot(z, w);
    if (!std::isfinite(denom))
      throw NumericError("cg_run: non-finite conjugacy denominator at iteration " + std::to_string(m));
    if (denom <= 1e-28 * rnorm0_sq) {  // direction carries no energy: Krylov exhausted
      fit.m_final_reached = true;
      fit.stop_reason = StopReason::breakdown;
      return fit;
    }
    const double scale = 1.0 / std::sqrt(denom);
    d *= scale; z *= scale; zk *= scale;
    if (cfg.l >= 2) w *= scale;  // for l<=1, w aliases z/zk conceptually; keep in sync
    else w = (cfg.l == 0) ? z : zk;
    delta0 *= scale;
    if (track_poly) dpoly *= scale;

    if (cfg.reorthogonalize) {
      for (std::size_t j = 0; j < Ds.size(); ++j) {
        const double c = g.dot(z, Ws[j]);
        d -= c * Ds[j]; z -= c * Zs[j]; zk -= c * ZKs[j];
        if (cfg.l >= 2) w -= c * Ws[j];
        delta0 -= c * D0s[j];
        if (track_poly) dpoly -= c * DPs[j];
      }
      if (cfg.l <= 1) w = (cfg.l == 0) ? z : zk;
      // renormalize after re-conjugation
      const double denom2 = g.dot(z, w);
      if (!(denom2 > 1e-28 * rnorm0_sq)) {
        fit.m_final_reached = true;
        fit.stop_reason = StopReason::breakdown;
        return fit;
      }
      const double s2 = 1.0 / std::sqrt(denom2);
      d *= s2; z *= s2; zk *= s2;
      if (cfg.l >= 2) w *= s2; else w = (cfg.l == 0) ? z : zk;
      delta0 *= s2;
      if (track_poly) dpoly *= s2;
      Ds.push_back(d); Zs.push_back(z); ZKs.push_back(zk); Ws.push_back(w);
      D0s.push_back(delta0);
      if (track_poly) DPs.push_back(dpoly);
    }

    const double gamma = g.dot(r, w);
    alpha += gamma * d;
    kalpha += gamma * z;
    r -= gamma * z;
    t -= gamma * zk;
    s -= gamma * w;
    q0 += gamma * delta0;
    if (track_poly) qpoly += gamma * dpoly;

    const double rsq = g.dot(r, s);
    if (!std::isfinite(rsq))
      throw NumericError("cg_run: non-finite residual at iteration " + std::to_string(m));
    const double rn = std::sqrt(std::max(rsq, 0.0));
    const double asq = g.dot(alpha, kalpha);
    const double an = std::sqrt(std::max(asq, 0.0));

    fit.alphas.push_back(alpha);
    fit.residuals.push_back(r);
    fit.residual_norms.push_back(rn);
    fit.alpha_norms.push_back(an);
    fit.q_at_zero.push_back(q0);
    if (track_poly) fit.poly_coeffs.push_back(qpoly.head(m).eval());

    if (rn <= cfg.breakdown_tol * rnorm0) {
      fit.m_final_reached = true;
      fit.stop_reason = StopReason::breakdown;
      return fit;
    }

    // Next direction: d <- r + beta d with beta enforcing <z_new, w> = 0.
    const double beta = -g.dot(t, w);
    d = r + beta * d;
    z = t + beta * z;
    zk = g.apply(z);
    w = (cfg.l == 0) ? z : (cfg.l == 1 ? zk : klpow(zk, cfg.l - 1));
    delta0 = 1.0 + beta * delta0;  // p_m(0) = 1 always
    if (track_poly) {
      // delta_new = p_m + beta * delta;  p_m = 1 - x q_m(x)
      Eigen::VectorXd pm = Eigen::VectorXd::Zero(dpoly.size());
      pm[0] = 1.0;
      pm.segment(1, qpoly.size() - 1) -= qpoly.head(qpoly.size() - 1);
      dpoly = pm + beta * dpoly;
    }
  }

  fit.stop_reason = StopReason::max_iters;
  return fit;
}

/** @brief Spec-shaped convenience overload using the system's own response. */
template <class System>
CGFit cg_run(const System& g, const CGConfig& cfg) {
  return cg_run(g, g.y, cfg);
}

/**
 * @brief Kernel prediction f_alpha(x) = (1/n) sum_j alpha_j k(X_j, x).
 */
inline Eigen::VectorXd predict(const CGFit& fit, std::size_t m, const KernelModel& kernel,
                               const std::vector<double>& train_X,
                               const std::vector<double>& query_X) {
  if (m >= fit.alphas.size()) throw DimensionError("predict: iteration index out of range");
  const Eigen::VectorXd& alpha = fit.alphas[m];
  if (static_cast<std::size_t>(alpha.size()) != train_X.size())
    throw DimensionError("predict: training size mismatch");
  Eigen::VectorXd out(static_cast<Eigen::Index>(query_X.size()));
  const double n = static_cast<double>(train_X.size());
  for (Eigen::Index q = 0; q < out.size(); ++q) {
    double acc = 0.0;
    for (std::size_t j = 0; j < train_X.size(); ++j) {
      acc += alpha[static_cast<Eigen::Index>(j)] * kernel.eval(train_X[j], query_X[static_cast<size_t>(q)]);
    }
    out[q] = acc / n;
  }
  return out;
}

/** @brief Residual vector Y - K alpha_m (equals p_m(K) Y). */
template <class System>
Eigen::VectorXd residual_vector(const System& g, const CGFit& fit, std::size_t m) {
  if (m >= fit.alphas.size()) throw DimensionError("residual_vector: iteration index out of range");
  return g.y - g.apply(fit.alphas[m]);
}

}  // namespace kcg
