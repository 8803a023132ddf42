#pragma once

/**
 * @brief Discrepancy-principle stopping rules.
 *
 * The general template stops at the first iteration m whose training
 * discrepancy ||Y - K alpha_m||_{K_n} drops below a threshold Lambda_m.
 * Rule A (adaptive) uses a data-dependent threshold built from the iterate
 * norm ||alpha_m||_{K_n}, plus a step-back modification driven by the
 * residual-polynomial value q_m(0).  Rule B uses a fixed threshold computed
 * from the problem parameters (r, s, D).  All logarithms are natural.
 */

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "kcg/cg.hpp"
#include "kcg/errors.hpp"
#include "kcg/linalg.hpp"

namespace kcg {

/** @brief Stopping-rule variant. */
enum class StoppingRule {
  A_adaptive,       ///< adaptive threshold + q_m(0) modification
  B_fixed,          ///< fixed threshold from (r, s, D)
  fixed_iteration,  ///< stop at a prescribed iteration (plumbing)
};

/** @brief Which modification threshold rule A uses for the q_m(0) test. */
enum class EtaOverDeltaMode {
  nemirovskii,    ///< safeguard threshold eta/delta with eta = 1/(2 tau) (default)
  paper_literal,  ///< safeguard threshold delta itself
};

/** @brief Stopping-rule constants; only the fields of the active rule are read. */
struct StoppingConfig {
  StoppingRule rule = StoppingRule::A_adaptive;
  double tau = 2.0;         ///< rule A, > 1
  double tau_prime = 2.0;   ///< rule B, > 3/2
  double gamma = 0.1;       ///< confidence parameter in (0,1)
  double M = 1.0;           ///< noise/response scale (positive)
  double kappa = 1.0;       ///< kernel bound
  double D = 1.0;           ///< rule B intrinsic-dimension constant, >= 1
  double r = 0.5;           ///< rule B source exponent, >= 0
  double s = 1.0;           ///< rule B decay parameter, in (0,1]
  double rho = 1.0;         ///< source norm bound (semi-supervised)
  bool semi_supervised = false;  ///< rule B: replace M by max(M, rho)
  int fixed_m = 0;          ///< fixed_iteration: the prescribed stop index
  EtaOverDeltaMode eta_over_delta_mode = EtaOverDeltaMode::nemirovskii;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
    if (!(M >= 0.0)) throw ConfigError("M must be >= 0");
    if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
    if (rule == StoppingRule::A_adaptive && !(tau > 1.0))
      throw ConfigError("rule A requires tau > 1");
    if (rule == StoppingRule::B_fixed) {
      if (!(tau_prime > 1.5)) throw ConfigError("rule B requires tau_prime > 3/2");
      if (!(D >= 1.0)) throw ConfigError("rule B requires D >= 1");
      if (!(r >= 0.0)) throw ConfigError("rule B requires r >= 0");
      if (!(s > 0.0 && s <= 1.0)) throw ConfigError("rule B requires s in (0,1]");
    }
    if (rule == StoppingRule::fixed_iteration && fixed_m < 0)
      throw ConfigError("fixed_iteration requires m >= 0");
    if (semi_supervised && !(rho > 0.0)) throw ConfigError("rho must be positive");
  }
};

/** @brief One scanned point of the stopping trace. */
struct ThresholdPoint {
  int m = 0;
  double threshold = 0.0;
  double discrepancy = 0.0;
};

/** @brief Outcome of a stopping scan. */
struct StopDecision {
  int m_hat = 0;    ///< first m with discrepancy < Lambda_m (or last iterate)
  int m_tilde = 0;  ///< m_hat after the rule-A modification (in {m_hat-1, m_hat})
  std::vector<ThresholdPoint> threshold_trace;
  bool triggered = false;  ///< false when max_iters was reached first
};

/**
 * @brief Training discrepancy ||Y - K alpha_m||_{K_n}.
 *
 * For l=1 fits this is the recorded residual norm; otherwise it is recomputed
 * from the stored residual in the K_n-norm.
 */
template <class System>
double discrepancy(const System& g, const CGFit& fit, std::size_t m) {
  if (m >= fit.alphas.size()) throw DimensionError("discrepancy: iteration index out of range");
  if (fit.l == 1) return fit.residual_norms[m];
  return weighted_norm(fit.residuals[m], g, 1);
}

/**
 * @brief Rule-A threshold
 *   Lambda_m = 4 tau sqrt(kappa log(2/gamma) / n) (sqrt(kappa) ||alpha_m||_{K_n}
 *              + M sqrt(log(2/gamma))).
 */
inline double threshold_rule_A(std::size_t m, const CGFit& fit, const StoppingConfig& cfg,
                               std::size_t n) {
  cfg.validate();
  if (m >= fit.alpha_norms.size()) throw DimensionError("threshold_rule_A: index out of range");
  const double L = std::log(2.0 / cfg.gamma);
  const double nn = static_cast<double>(n);
  return 4.0 * cfg.tau * std::sqrt(cfg.kappa * L / nn) *
         (std::sqrt(cfg.kappa) * fit.alpha_norms[m] + cfg.M * std::sqrt(L));
}

/**
 * @brief Rule-B threshold
 *   Lambda = tau' M sqrt(kappa) ((4D/sqrt(n)) log(6/gamma))^{(2r+1)/(2r+s)}.
 * In semi-supervised mode M is replaced by max(M, rho); n is the labeled count.
 */
inline double threshold_rule_B(const StoppingConfig& cfg, std::size_t n) {
  cfg.validate();
  const double m_eff = cfg.semi_supervised ? std::max(cfg.M, cfg.rho) : cfg.M;
  const double e = (2.0 * cfg.r + 1.0) / (2.0 * cfg.r + cfg.s);
  const double base = (4.0 * cfg.D / std::sqrt(static_cast<double>(n))) * std::log(6.0 / cfg.gamma);
  return cfg.tau_prime * m_eff * std::sqrt(cfg.kappa) * std::pow(base, e);
}

/**
 * @brief Scan a completed fit for the stopping point.
 *
 * m_hat is the first m with discrepancy(m) < Lambda_m.  For rule A, m_tilde
 * steps back to m_hat - 1 (floored at 0) when q_{m_hat}(0) exceeds the
 * modification threshold; rule B keeps m_tilde = m_hat.  If no m fires within
 * the fit, the last iterate is returned with triggered = false (callers
 * normally use it and warn).
 *
 * @param n_stat sample size entering the threshold formulas; 0 means the
 *        labeled count recorded in the system (the semi-supervised rule uses
 *        the labeled n even though the fit runs on n_total points).
 */
template <class System>
StopDecision stop(const System& g, const CGFit& fit, const StoppingConfig& cfg,
                  std::size_t n_stat = 0) {
  cfg.validate();
  if (fit.alphas.empty()) throw DimensionError("stop: empty fit");
  const std::size_t last = fit.alphas.size() - 1;
  const std::size_t n = (n_stat > 0) ? n_stat
                                     : (g.n_labeled > 0 ? g.n_labeled
                                                        : static_cast<std::size_t>(g.size()));

  StopDecision dec;
  if (cfg.rule == StoppingRule::fixed_iteration) {
    dec.m_hat = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.fixed_m), last));
    dec.m_tilde = dec.m_hat;
    dec.triggered = static_cast<std::size_t>(cfg.fixed_m) <= last;
    dec.threshold_trace.push_back(
        {dec.m_hat, 0.0, discrepancy(g, fit, static_cast<std::size_t>(dec.m_hat))});
    return dec;
  }
  if (fit.l != 1) {
    throw ConfigError("rules A/B are stated for the K_n-norm method (l=1); "
                      "use fixed_iteration or hold-out for other l");
  }

  bool fired = false;
  std::size_t m_hat = last;
  for (std::size_t m = 0; m <= last; ++m) {
    const double disc = discrepancy(g, fit, m);
    const double lam = (cfg.rule == StoppingRule::A_adaptive)
                           ? threshold_rule_A(m, fit, cfg, n)
                           : threshold_rule_B(cfg, n);
    dec.threshold_trace.push_back({static_cast<int>(m), lam, disc});
    if (disc < lam) {
      fired = true;
      m_hat = m;
      break;
    }
  }
  dec.m_hat = static_cast<int>(m_hat);
  dec.m_tilde = dec.m_hat;
  dec.triggered = fired;

  if (cfg.rule == StoppingRule::A_adaptive && m_hat >= 1) {
    const double L = std::log(2.0 / cfg.gamma);
    const double delta = 4.0 * cfg.kappa * std::sqrt(L / static_cast<double>(n));
    const double thr = (cfg.eta_over_delta_mode == EtaOverDeltaMode::paper_literal)
                           ? delta
                           : (1.0 / (2.0 * cfg.tau)) / delta;
    if (fit.q_at_zero[m_hat] >= thr) dec.m_tilde = dec.m_hat - 1;
  }
  return dec;
}

/**
 * @brief Convenience driver: run CG, then apply the stopping rule.
 *
 * The returned fit is truncated at the stop scan's end and its stop_reason is
 * set to StopReason::discrepancy when the rule fired before the run's own
 * termination.
 */
template <class System>
std::pair<CGFit, StopDecision> cg_run_with_stop(const System& g, const CGConfig& cg_cfg,
                                                const StoppingConfig& stop_cfg,
                                                std::size_t n_stat = 0) {
  CGFit fit = cg_run(g, g.y, cg_cfg);
  StopDecision dec = stop(g, fit, stop_cfg, n_stat);
  if (dec.triggered && static_cast<std::size_t>(dec.m_hat) < fit.iterations()) {
    fit.stop_reason = StopReason::discrepancy;
  }
  return {std::move(fit), dec};
}

}  // namespace kcg
