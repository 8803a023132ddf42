#pragma once

// Brute-force reference implementations used to cross-check the fast library
// code.  Everything here favours transparency over speed: dense
// eigendecompositions, explicitly orthogonalized Krylov bases, and SVD-based
// least squares.  Nothing in this header is used by the library itself.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <kcg/linalg.hpp>
#include <kcg/philox.hpp>

namespace oracle {

// Random symmetric positive-definite matrix Q diag(lams) Q^T with
// log-uniformly spaced eigenvalues in [top/cond, top].
inline Eigen::MatrixXd random_spd(kcg::PhiloxRng& rng, int n, double cond,
                                  double top = 1.0) {
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd lams(n);
  for (int i = 0; i < n; ++i) {
    double frac = (n == 1) ? 0.0 : static_cast<double>(i) / (n - 1);
    lams[i] = top * std::pow(cond, -frac);
  }
  Eigen::MatrixXd k = q * lams.asDiagonal() * q.transpose();
  return 0.5 * (k + k.transpose());
}

inline Eigen::VectorXd random_vector(kcg::PhiloxRng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.gaussian();
  return v;
}

// Orthonormal basis of span{y, Ky, ..., K^{m-1}y} built with twice-repeated
// Gram-Schmidt.  May return fewer than m columns when the Krylov space
// saturates (exact invariance up to round-off).
inline Eigen::MatrixXd krylov_basis(const Eigen::MatrixXd& k,
                                    const Eigen::VectorXd& y, int m) {
  const int n = static_cast<int>(y.size());
  Eigen::MatrixXd basis(n, std::min(m, n));
  int cols = 0;
  Eigen::VectorXd v = y;
  for (int j = 0; j < basis.cols(); ++j) {
    if (j > 0) v = k * basis.col(j - 1);
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i < cols; ++i) v -= basis.col(i).dot(v) * basis.col(i);
    double norm = v.norm();
    if (norm <= 1e-13 * std::max(1.0, y.norm())) break;
    basis.col(cols++) = v / norm;
  }
  return basis.leftCols(cols);
}

// Value of the objective sqrt((1/n) (y - K a)^T K^l (y - K a)).
inline double objective(const Eigen::MatrixXd& k, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& alpha, int l) {
  const double n = static_cast<double>(y.size());
  Eigen::VectorXd res = y - k * alpha;
  Eigen::VectorXd w = res;
  for (int i = 0; i < l; ++i) w = k * w;
  double q = res.dot(w) / n;
  return std::sqrt(std::max(0.0, q));
}

// Variational reference for the order-m iterate: minimize
//   || y - K B c ||_{K^l, n}   over c,   alpha = B c,
// where B is the orthonormal Krylov basis above.  Solved exactly in the
// eigenbasis of K with an SVD least-squares solve, so it is independent of
// any recurrence the library uses.
inline Eigen::VectorXd variational_iterate(const Eigen::MatrixXd& k,
                                           const Eigen::VectorXd& y, int l,
                                           int m) {
  if (m <= 0) return Eigen::VectorXd::Zero(y.size());
  Eigen::MatrixXd basis = krylov_basis(k, y, m);
  if (basis.cols() == 0) return Eigen::VectorXd::Zero(y.size());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  Eigen::VectorXd lams = es.eigenvalues().cwiseMax(0.0);
  Eigen::VectorXd hw = lams.array().pow(0.5 * l).matrix();  // K^{l/2} weights

  // Rotate into the eigenbasis: rows scaled by lambda^{l/2}.
  Eigen::VectorXd yt = es.eigenvectors().transpose() * y;
  Eigen::MatrixXd bt = es.eigenvectors().transpose() * (k * basis);
  Eigen::MatrixXd a = hw.asDiagonal() * bt;
  Eigen::VectorXd b = hw.asDiagonal() * yt;
  Eigen::VectorXd c = a.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
  return basis * c;
}

}  // namespace oracle
