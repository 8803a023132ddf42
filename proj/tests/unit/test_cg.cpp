#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include <kcg/cg.hpp>
#include <kcg/errors.hpp>
#include <kcg/kernel.hpp>
#include <kcg/linalg.hpp>
#include <kcg/philox.hpp>

#include "oracle.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

kcg::GramSystem wrap(const Eigen::MatrixXd& k, const Eigen::VectorXd& y) {
  kcg::GramSystem g;
  g.K = k;
  g.y = y;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  g.kappa = 1.05 * es.eigenvalues().maxCoeff();
  g.n_labeled = static_cast<std::size_t>(k.rows());
  return g;
}

}  // namespace

TEST_CASE("scalar system is solved in one step", "[cg]") {
  Eigen::MatrixXd k(1, 1);
  k << 2.0;
  Eigen::VectorXd y(1);
  y << 3.0;
  const kcg::GramSystem g = wrap(k, y);

  kcg::CGConfig cfg;
  cfg.l = 1;
  cfg.max_iters = 5;
  const kcg::CGFit fit = kcg::cg_run(g, y, cfg);

  REQUIRE(fit.iterations() == 1);
  CHECK_THAT(fit.alphas[1][0], WithinRel(1.5, 1e-14));
  CHECK_THAT(fit.residual_norms[1], WithinAbs(0.0, 1e-13));
  CHECK_THAT(fit.q_at_zero[1], WithinRel(0.5, 1e-14));  // q_1(x) = 1/2 = K^{-1}
  CHECK(fit.m_final_reached);
  CHECK(fit.stop_reason == kcg::StopReason::breakdown);
}

TEST_CASE("a multiple of the identity converges in one iteration", "[cg]") {
  const int n = 5;
  const double c = 0.5;
  kcg::PhiloxRng rng{101};
  Eigen::VectorXd y = oracle::random_vector(rng, n);
  const kcg::GramSystem g = wrap(c * Eigen::MatrixXd::Identity(n, n), y);

  for (int l : {0, 1, 2}) {
    kcg::CGConfig cfg;
    cfg.l = l;
    cfg.max_iters = 4;
    const kcg::CGFit fit = kcg::cg_run(g, y, cfg);
    REQUIRE(fit.iterations() == 1);
    CHECK_THAT((fit.alphas[1] - y / c).norm(), WithinAbs(0.0, 1e-12 * y.norm()));
    CHECK_THAT(fit.q_at_zero[1], WithinRel(1.0 / c, 1e-12));
    CHECK(fit.m_final_reached);
  }
}

TEST_CASE("objectives match the dense variational oracle", "[cg][oracle]") {
  // Each CG iterate minimizes ||Y - K alpha||_{K^l} over the Krylov space;
  // the oracle solves the same least-squares problem by SVD.
  int checked = 0;
  for (int inst = 0; inst < 12; ++inst) {
    kcg::PhiloxRng rng{1000, static_cast<std::uint64_t>(inst)};
    const int n = 5 + static_cast<int>(rng.next_u32() % 28);      // 5..32
    const double cond = std::pow(10.0, 1.0 + 3.0 * rng.uniform());  // 10..1e4
    const Eigen::MatrixXd k = oracle::random_spd(rng, n, cond);
    const Eigen::VectorXd y = oracle::random_vector(rng, n);
    const kcg::GramSystem g = wrap(k, y);
    const int l = inst % 3;

    kcg::CGConfig cfg;
    cfg.l = l;
    cfg.max_iters = 6;
    cfg.reorthogonalize = true;
    const kcg::CGFit fit = kcg::cg_run(g, y, cfg);
    const double rnorm0 = fit.residual_norms[0];

    for (std::size_t m = 1; m <= fit.iterations(); ++m) {
      const Eigen::VectorXd ref = oracle::variational_iterate(k, y, l, static_cast<int>(m));
      const double obj_ref = oracle::objective(k, y, ref, l);
      const double obj_cg = fit.residual_norms[m];
      CHECK_THAT(obj_cg, WithinAbs(obj_ref, 1e-8 * (obj_ref + 1e-4 * rnorm0)));
      ++checked;
    }
  }
  CHECK(checked >= 50);
}

TEST_CASE("iterates match the oracle on well-conditioned instances", "[cg][oracle]") {
  for (int inst = 0; inst < 4; ++inst) {
    kcg::PhiloxRng rng{2000, static_cast<std::uint64_t>(inst)};
    const Eigen::MatrixXd k = oracle::random_spd(rng, 10, 50.0);
    const Eigen::VectorXd y = oracle::random_vector(rng, 10);
    const kcg::GramSystem g = wrap(k, y);

    kcg::CGConfig cfg;
    cfg.l = 1;
    cfg.max_iters = 5;
    const kcg::CGFit fit = kcg::cg_run(g, y, cfg);
    for (std::size_t m = 1; m <= fit.iterations(); ++m) {
      const Eigen::VectorXd ref = oracle::variational_iterate(k, y, 1, static_cast<int>(m));
      CHECK_THAT((fit.alphas[m] - ref).norm(), WithinAbs(0.0, 1e-6 * (ref.norm() + 1.0)));
    }
  }
}

TEST_CASE("residuals are pairwise K^2-orthogonal with reorthogonalization", "[cg]") {
  kcg::PhiloxRng rng{3000};
  const Eigen::MatrixXd k = oracle::random_spd(rng, 20, 1e4);
  const Eigen::VectorXd y = oracle::random_vector(rng, 20);
  const kcg::GramSystem g = wrap(k, y);

  kcg::CGConfig cfg;
  cfg.l = 1;
  cfg.max_iters = 10;
  cfg.reorthogonalize = true;
  const kcg::CGFit fit = kcg::cg_run(g, y, cfg);
  REQUIRE(fit.iterations() >= 3);

  std::vector<Eigen::VectorXd> kr;
  for (const auto& r : fit.residuals) kr.push_back(g.apply(r));
  for (std::size_t i = 0; i < kr.size(); ++i) {
    for (std::size_t j = i + 1; j < kr.size(); ++j) {
      const double ni = std::sqrt(g.dot(kr[i], kr[i]));
      const double nj = std::sqrt(g.dot(kr[j], kr[j]));
      if (ni == 0.0 || nj == 0.0) continue;
      CHECK(std::abs(g.dot(kr[i], kr[j])) / (ni * nj) <= 1e-8);
    }
  }
}

TEST_CASE("iterates reconstruct from the tracked polynomial", "[cg]") {
  for (int l : {0, 1, 2}) {
    kcg::PhiloxRng rng{4000, static_cast<std::uint64_t>(l)};
    const Eigen::MatrixXd k = oracle::random_spd(rng, 15, 100.0);
    const Eigen::VectorXd y = oracle::random_vector(rng, 15);
    const kcg::GramSystem g = wrap(k, y);

    kcg::CGConfig cfg;
    cfg.l = l;
    cfg.max_iters = 6;
    const kcg::CGFit fit = kcg::cg_run(g, y, cfg);
    REQUIRE(fit.poly_coeffs.size() == fit.alphas.size());

    for (std::size_t m = 0; m <= fit.iterations(); ++m) {
      // alpha_m = q_m(K) Y with the tracked monomial coefficients.
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(y.size());
      Eigen::VectorXd kp = y;
      for (Eigen::Index c = 0; c < fit.poly_coeffs[m].size(); ++c) {
        acc += fit.poly_coeffs[m][c] * kp;
        kp = g.apply(kp);
      }
      CHECK_THAT((acc - fit.alphas[m]).norm(),
                 WithinAbs(0.0, 1e-8 * (fit.alphas[m].norm() + 1.0)));
      // residual_vector equals p_m(K) Y = Y - K q_m(K) Y.
      const Eigen::VectorXd res = kcg::residual_vector(g, fit, m);
      CHECK_THAT((res - (y - g.apply(acc))).norm(), WithinAbs(0.0, 1e-8 * (y.norm() + 1.0)));
      // The tracked constant term matches the full coefficient vector.
      if (m >= 1) CHECK_THAT(fit.q_at_zero[m], WithinRel(fit.poly_coeffs[m][0], 1e-10));
    }
  }
}

TEST_CASE("q_m(0) is non-decreasing and residual norms non-increasing", "[cg]") {
  kcg::PhiloxRng rng{5000};
  const Eigen::MatrixXd k = oracle::random_spd(rng, 25, 1e3);
  const Eigen::VectorXd y = oracle::random_vector(rng, 25);
  const kcg::GramSystem g = wrap(k, y);

  kcg::CGConfig cfg;
  cfg.l = 1;
  cfg.max_iters = 12;
  const kcg::CGFit fit = kcg::cg_run(g, y, cfg);
  for (std::size_t m = 1; m <= fit.iterations(); ++m) {
    CHECK(fit.q_at_zero[m] >= fit.q_at_zero[m - 1] * (1.0 - 1e-12) - 1e-14);
    CHECK(fit.residual_norms[m] <= fit.residual_norms[m - 1] * (1.0 + 1e-12) + 1e-14);
  }
}

TEST_CASE("a zero response breaks down immediately", "[cg]") {
  const int n = 6;
  kcg::PhiloxRng rng{6000};
  const Eigen::MatrixXd k = oracle::random_spd(rng, n, 10.0);
  const kcg::GramSystem g = wrap(k, Eigen::VectorXd::Zero(n));

  kcg::CGConfig cfg;
  const kcg::CGFit fit = kcg::cg_run(g, g.y, cfg);
  CHECK(fit.iterations() == 0);
  CHECK(fit.alphas[0].norm() == 0.0);
  CHECK(fit.m_final_reached);
  CHECK(fit.stop_reason == kcg::StopReason::breakdown);
}

TEST_CASE("iteration budget is clamped to the system size", "[cg]") {
  kcg::PhiloxRng rng{7000};
  const Eigen::MatrixXd k = oracle::random_spd(rng, 4, 10.0);
  const Eigen::VectorXd y = oracle::random_vector(rng, 4);
  const kcg::GramSystem g = wrap(k, y);

  kcg::CGConfig cfg;
  cfg.max_iters = 50;
  const kcg::CGFit fit = kcg::cg_run(g, y, cfg);
  CHECK(fit.iterations() <= 4);
}

TEST_CASE("prediction from coefficients", "[cg]") {
  SECTION("zero coefficients predict zero") {
    kcg::CGFit fit;
    fit.alphas.push_back(Eigen::VectorXd::Zero(3));
    const kcg::KernelModel kernel = kcg::KernelModel::gaussian(1.0);
    const Eigen::VectorXd out =
        kcg::predict(fit, 0, kernel, {0.1, 0.2, 0.3}, {0.5, 0.9});
    CHECK(out.norm() == 0.0);
  }
  SECTION("single linear-kernel point") {
    kcg::CGFit fit;
    Eigen::VectorXd a(1);
    a << 2.0;
    fit.alphas.push_back(Eigen::VectorXd::Zero(1));
    fit.alphas.push_back(a);
    const kcg::KernelModel kernel = kcg::KernelModel::linear(5.0);
    const Eigen::VectorXd out = kcg::predict(fit, 1, kernel, {3.0}, {4.0});
    REQUIRE(out.size() == 1);
    CHECK_THAT(out[0], WithinRel(24.0, 1e-14));  // (1/1) * 2 * k(3,4)
  }
  SECTION("predictions at the training points equal K alpha") {
    kcg::PhiloxRng rng{8000};
    const kcg::KernelModel kernel = kcg::KernelModel::gaussian(0.4);
    std::vector<double> x(8);
    for (auto& v : x) v = rng.uniform();
    kcg::Dataset data;
    data.X = x;
    data.n_total = data.n_labeled = 8;
    data.Y.resize(8);
    for (int i = 0; i < 8; ++i) data.Y[i] = rng.gaussian();
    const kcg::GramSystem g = kcg::assemble_gram(kernel, data);

    kcg::CGConfig cfg;
    cfg.max_iters = 3;
    const kcg::CGFit fit = kcg::cg_run(g, g.y, cfg);
    for (std::size_t m = 0; m <= fit.iterations(); ++m) {
      const Eigen::VectorXd pred = kcg::predict(fit, m, kernel, x, x);
      CHECK_THAT((pred - g.apply(fit.alphas[m])).norm(),
                 WithinAbs(0.0, 1e-12 * (1.0 + fit.alphas[m].norm())));
    }
  }
  SECTION("out-of-range iterate is rejected") {
    kcg::CGFit fit;
    fit.alphas.push_back(Eigen::VectorXd::Zero(2));
    const kcg::KernelModel kernel = kcg::KernelModel::gaussian(1.0);
    CHECK_THROWS_AS(kcg::predict(fit, 1, kernel, {0.1, 0.2}, {0.5}),
                    kcg::DimensionError);
  }
}

TEST_CASE("residual vector special cases", "[cg]") {
  kcg::PhiloxRng rng{9000};
  SECTION("m = 0 returns the response") {
    const Eigen::MatrixXd k = oracle::random_spd(rng, 5, 10.0);
    const Eigen::VectorXd y = oracle::random_vector(rng, 5);
    const kcg::GramSystem g = wrap(k, y);
    kcg::CGConfig cfg;
    const kcg::CGFit fit = kcg::cg_run(g, y, cfg);
    CHECK(kcg::residual_vector(g, fit, 0) == y);
  }
  SECTION("exact solve leaves a zero residual") {
    const int n = 4;
    const Eigen::VectorXd y = oracle::random_vector(rng, n);
    const kcg::GramSystem g = wrap(0.7 * Eigen::MatrixXd::Identity(n, n), y);
    kcg::CGConfig cfg;
    const kcg::CGFit fit = kcg::cg_run(g, y, cfg);
    REQUIRE(fit.iterations() >= 1);
    CHECK_THAT(kcg::residual_vector(g, fit, 1).norm(), WithinAbs(0.0, 1e-12 * y.norm()));
  }
}

TEST_CASE("reorthogonalization leaves early iterates unchanged", "[cg]") {
  kcg::PhiloxRng rng{9500};
  const Eigen::MatrixXd k = oracle::random_spd(rng, 12, 100.0);
  const Eigen::VectorXd y = oracle::random_vector(rng, 12);
  const kcg::GramSystem g = wrap(k, y);

  kcg::CGConfig on, off;
  on.max_iters = off.max_iters = 4;
  on.reorthogonalize = true;
  off.reorthogonalize = false;
  const kcg::CGFit f1 = kcg::cg_run(g, y, on);
  const kcg::CGFit f2 = kcg::cg_run(g, y, off);
  const std::size_t m = std::min(f1.iterations(), f2.iterations());
  for (std::size_t i = 1; i <= m; ++i)
    CHECK_THAT((f1.alphas[i] - f2.alphas[i]).norm(),
               WithinAbs(0.0, 1e-8 * (f1.alphas[i].norm() + 1.0)));
}

TEST_CASE("factored and dense systems produce the same fit", "[cg]") {
  kcg::PhiloxRng rng{9600};
  Eigen::VectorXd xi(6);
  for (int i = 0; i < 6; ++i) xi[i] = std::pow(i + 1.0, -2.0);
  xi /= xi.sum();
  const kcg::KernelModel kernel = kcg::KernelModel::spectral_mercer(xi);
  kcg::Dataset data;
  data.X.resize(20);
  for (auto& v : data.X) v = rng.uniform();
  data.n_total = data.n_labeled = 20;
  data.Y.resize(20);
  for (int i = 0; i < 20; ++i) data.Y[i] = rng.gaussian();

  const kcg::GramSystem dense = kcg::assemble_gram(kernel, data);
  const kcg::FactoredGram fact = kcg::assemble_factored_gram(kernel, data);
  kcg::CGConfig cfg;
  cfg.max_iters = 5;
  const kcg::CGFit f1 = kcg::cg_run(dense, dense.y, cfg);
  const kcg::CGFit f2 = kcg::cg_run(fact, fact.y, cfg);
  REQUIRE(f1.iterations() == f2.iterations());
  for (std::size_t m = 0; m <= f1.iterations(); ++m) {
    CHECK_THAT((f1.alphas[m] - f2.alphas[m]).norm(),
               WithinAbs(0.0, 1e-9 * (f1.alphas[m].norm() + 1.0)));
    CHECK_THAT(f1.residual_norms[m], WithinAbs(f2.residual_norms[m], 1e-10));
  }
}

TEST_CASE("configuration validation", "[cg]") {
  kcg::CGConfig cfg;
  cfg.l = 5;
  CHECK_THROWS_AS(cfg.validate(), kcg::ConfigError);
  cfg.l = -1;
  CHECK_THROWS_AS(cfg.validate(), kcg::ConfigError);
  cfg.l = 1;
  cfg.max_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), kcg::ConfigError);
  cfg.max_iters = 10;
  cfg.breakdown_tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), kcg::ConfigError);

  kcg::PhiloxRng rng{9700};
  const Eigen::MatrixXd k = oracle::random_spd(rng, 3, 10.0);
  const kcg::GramSystem g = wrap(k, oracle::random_vector(rng, 3));
  Eigen::VectorXd bad(2);
  bad << 1, 2;
  kcg::CGConfig ok;
  CHECK_THROWS_AS(kcg::cg_run(g, bad, ok), kcg::DimensionError);
}
