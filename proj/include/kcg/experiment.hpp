#pragma once

/**
 * @brief Experiment orchestration: JSON config parsing (strict), replicated
 *        runs across methods and sample sizes, and deterministic artifacts
 *        (results.csv, summary.json, plotdata/*.tsv).
 *
 * Config schema (all keys shown; unknown keys are rejected):
 *
 * {
 *   "mode": "rates" | "single_run" | "audit",
 *   "seed": 1,
 *   "output_dir": "out",
 *   "problem": { "p": 2048, "s": 1.0, "r": 0.5, "rho": 1.0,
 *                "noise": { "kind": "bounded_uniform", "M": 0.01 } },
 *   "data": { "n_grid": [...], "replicates": 20,
 *             "n_unlabeled": 0 | "required" },
 *   "methods": [
 *     { "name": "...", "type": "cg", "l": 1, "max_iters": 50,
 *       "reorthogonalize": "auto" | true | false, "breakdown_tol": 1e-12,
 *       "stopping": { "rule": "A" | "B" | "fixed_iteration", "tau": 2.0,
 *                     "tau_prime": 2.0, "gamma": 0.1, "M": 1.0,
 *                     "kappa": "auto", "D": "auto", "r": "auto", "s": "auto",
 *                     "rho": "auto", "semi_supervised": false, "fixed_m": 0,
 *                     "eta_over_delta_mode": "nemirovskii" } },
 *     { "name": "...", "type": "filter", "family": "tikhonov",
 *       "grid": [...], "step": 0.25, "holdout_fraction": 0.2 },
 *     { "name": "...", "type": "cg_holdout", "l": 2, "max_iters": 20,
 *       "holdout_fraction": 0.2 }
 *   ],
 *   "gram": "auto" | "dense" | "factored",
 *   "audit": { "n": 200, "gamma": 0.1, "trials": 200, "lambda": 0.05 },
 *   "timing": false
 * }
 *
 * Determinism: every random stream is derived from (seed, purpose, n,
 * replicate); datasets do not depend on the method list; output rows are
 * sorted by (method index, n, replicate) regardless of worker scheduling;
 * wall times are recorded as 0 unless timing is enabled.
 */

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "kcg/cg.hpp"
#include "kcg/errors.hpp"
#include "kcg/evaluation.hpp"
#include "kcg/filters.hpp"
#include "kcg/kernel.hpp"
#include "kcg/linalg.hpp"
#include "kcg/philox.hpp"
#include "kcg/stopping.hpp"
#include "kcg/synthetic.hpp"

namespace kcg {

using json = nlohmann::json;

enum class RunMode { rates, audit, single_run };
enum class GramPolicy { automatic, dense, factored };
enum class MethodType { cg, filter, cg_holdout };
enum class ReorthMode { automatic, on, off };

/** @brief One fitting method as configured. */
struct MethodConfig {
  std::string name;
  MethodType type = MethodType::cg;
  // cg / cg_holdout
  CGConfig cg{};
  ReorthMode reorth = ReorthMode::automatic;
  StoppingConfig stopping{};  // resolved: no "auto" placeholders remain
  // filter
  FilterFamily family = FilterFamily::tikhonov;
  std::vector<double> grid;
  double step = 0.0;
  // filter / cg_holdout
  double holdout_fraction = 0.2;
};

struct AuditConfig {
  std::size_t n = 200;
  double gamma = 0.1;
  std::size_t trials = 200;
  double lambda = 0.05;
};

/** @brief Fully-resolved experiment description. */
struct ExperimentConfig {
  RunMode mode = RunMode::rates;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  SyntheticSpec problem{};
  std::vector<std::size_t> n_grid;
  std::size_t replicates = 1;
  bool unlabeled_required = false;  // n_unlabeled = "required"
  std::size_t n_unlabeled_fixed = 0;
  std::vector<MethodConfig> methods;
  GramPolicy gram = GramPolicy::automatic;
  AuditConfig audit{};
  bool timing = false;
};

struct NormalizedConfig {
  ExperimentConfig config;
  std::vector<std::string> warnings;
  json normalized;  // all defaults filled, "auto" resolved
};

// ---------------------------------------------------------------------------
// Strict JSON parsing helpers
// ---------------------------------------------------------------------------

namespace cfgdetail {

struct Cursor {
  const json* j;
  std::string path;

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path + ": " + msg); }

  void require_object() const {
    if (!j->is_object()) fail("expected an object");
  }

  void allow_keys(std::initializer_list<const char*> keys) const {
    require_object();
    for (auto it = j->begin(); it != j->end(); ++it) {
      bool ok = false;
      for (const char* k : keys)
        if (it.key() == k) {
          ok = true;
          break;
        }
      if (!ok) fail("unknown key '" + it.key() + "'");
    }
  }

  bool has(const char* key) const { return j->contains(key); }

  Cursor child(const char* key) const { return Cursor{&j->at(key), path + "." + key}; }

  double num(const char* key, std::optional<double> def = std::nullopt) const {
    if (!has(key)) {
      if (def) return *def;
      fail("missing required key '" + std::string(key) + "'");
    }
    const json& v = j->at(key);
    if (!v.is_number()) fail("'" + std::string(key) + "' must be a number");
    return v.get<double>();
  }

  std::uint64_t uint(const char* key, std::optional<std::uint64_t> def = std::nullopt) const {
    if (!has(key)) {
      if (def) return *def;
      fail("missing required key '" + std::string(key) + "'");
    }
    const json& v = j->at(key);
    if (!v.is_number_integer() || v.get<double>() < 0)
      fail("'" + std::string(key) + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const char* key, bool def) const {
    if (!has(key)) return def;
    const json& v = j->at(key);
    if (!v.is_boolean()) fail("'" + std::string(key) + "' must be a boolean");
    return v.get<bool>();
  }

  std::string str(const char* key, std::optional<std::string> def = std::nullopt) const {
    if (!has(key)) {
      if (def) return *def;
      fail("missing required key '" + std::string(key) + "'");
    }
    const json& v = j->at(key);
    if (!v.is_string()) fail("'" + std::string(key) + "' must be a string");
    return v.get<std::string>();
  }

  /** Number, or the string "auto" resolved to auto_value. Default: auto. */
  double num_or_auto(const char* key, double auto_value) const {
    if (!has(key)) return auto_value;
    const json& v = j->at(key);
    if (v.is_string()) {
      if (v.get<std::string>() == "auto") return auto_value;
      fail("'" + std::string(key) + "' must be a number or \"auto\"");
    }
    if (!v.is_number()) fail("'" + std::string(key) + "' must be a number or \"auto\"");
    return v.get<double>();
  }
};

inline std::string sanitize_name(const std::string& name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out;
}

}  // namespace cfgdetail

// ---------------------------------------------------------------------------
// Config parsing / validation
// ---------------------------------------------------------------------------

namespace cfgdetail {

inline NoiseModel parse_noise(const Cursor& c) {
  c.allow_keys({"kind", "M"});
  NoiseModel noise;
  const std::string kind = c.str("kind", std::string("bounded_uniform"));
  if (kind == "none")
    noise.kind = NoiseKind::none;
  else if (kind == "bounded_uniform")
    noise.kind = NoiseKind::bounded_uniform;
  else if (kind == "gaussian_truncated")
    noise.kind = NoiseKind::gaussian_truncated;
  else if (kind == "gaussian")
    noise.kind = NoiseKind::gaussian;
  else
    c.fail("noise kind must be one of none|bounded_uniform|gaussian_truncated|gaussian");
  noise.M = c.num("M", noise.kind == NoiseKind::none ? std::optional<double>(0.0) : std::nullopt);
  if (!(noise.M >= 0.0)) c.fail("noise M must be >= 0");
  return noise;
}

inline SyntheticSpec parse_problem(const Cursor& c, std::uint64_t seed) {
  c.allow_keys({"p", "s", "r", "rho", "noise"});
  SyntheticSpec spec;
  spec.p = static_cast<std::size_t>(c.uint("p", 2048));
  spec.s = c.num("s");
  spec.r = c.num("r");
  spec.rho = c.num("rho", 1.0);
  if (c.has("noise")) spec.noise = parse_noise(c.child("noise"));
  spec.seed = seed;
  spec.validate();  // rethrows range violations with field names
  return spec;
}

inline StoppingConfig parse_stopping(const Cursor& c, const SyntheticSpec& prob,
                                     const GroundTruth& truth) {
  c.allow_keys({"rule", "tau", "tau_prime", "gamma", "M", "kappa", "D", "r", "s", "rho",
                "semi_supervised", "fixed_m", "eta_over_delta_mode"});
  StoppingConfig sc;
  const std::string rule = c.str("rule");
  if (rule == "A" || rule == "A_adaptive")
    sc.rule = StoppingRule::A_adaptive;
  else if (rule == "B" || rule == "B_fixed")
    sc.rule = StoppingRule::B_fixed;
  else if (rule == "fixed_iteration")
    sc.rule = StoppingRule::fixed_iteration;
  else
    c.fail("rule must be one of A|B|fixed_iteration");
  sc.tau = c.num("tau", 2.0);
  sc.tau_prime = c.num("tau_prime", 2.0);
  sc.gamma = c.num("gamma", 0.1);
  sc.M = c.num("M", 1.0);
  sc.kappa = c.num_or_auto("kappa", truth.kappa);
  sc.D = c.num_or_auto("D", std::max(1.0, truth.D_effective));
  sc.r = c.num_or_auto("r", prob.r);
  sc.s = c.num_or_auto("s", prob.s);
  sc.rho = c.num_or_auto("rho", prob.rho);
  sc.semi_supervised = c.boolean("semi_supervised", false);
  sc.fixed_m = static_cast<int>(c.uint("fixed_m", 0));
  const std::string mode = c.str("eta_over_delta_mode", std::string("nemirovskii"));
  if (mode == "nemirovskii")
    sc.eta_over_delta_mode = EtaOverDeltaMode::nemirovskii;
  else if (mode == "paper_literal")
    sc.eta_over_delta_mode = EtaOverDeltaMode::paper_literal;
  else
    c.fail("eta_over_delta_mode must be nemirovskii|paper_literal");
  try {
    sc.validate();
  } catch (const ConfigError& e) {
    c.fail(e.what());
  }
  return sc;
}

inline MethodConfig parse_method(const Cursor& c, const SyntheticSpec& prob,
                                 const GroundTruth& truth) {
  MethodConfig m;
  m.name = c.str("name");
  if (m.name.empty()) c.fail("method name must not be empty");
  const std::string type = c.str("type");

  auto parse_reorth = [&]() {
    if (!c.has("reorthogonalize")) return ReorthMode::automatic;
    const json& v = c.j->at("reorthogonalize");
    if (v.is_string()) {
      if (v.get<std::string>() == "auto") return ReorthMode::automatic;
      c.fail("'reorthogonalize' must be a boolean or \"auto\"");
    }
    if (!v.is_boolean()) c.fail("'reorthogonalize' must be a boolean or \"auto\"");
    return v.get<bool>() ? ReorthMode::on : ReorthMode::off;
  };

  if (type == "cg") {
    m.type = MethodType::cg;
    c.allow_keys({"name", "type", "l", "max_iters", "reorthogonalize", "breakdown_tol",
                  "stopping"});
    m.cg.l = static_cast<int>(c.uint("l", 1));
    m.cg.max_iters = static_cast<int>(c.uint("max_iters", 50));
    m.cg.breakdown_tol = c.num("breakdown_tol", 1e-12);
    m.reorth = parse_reorth();
    if (!c.has("stopping")) c.fail("cg method requires a 'stopping' block");
    m.stopping = parse_stopping(c.child("stopping"), prob, truth);
    if (m.stopping.rule != StoppingRule::fixed_iteration && m.cg.l != 1)
      c.fail("rules A/B apply only to l=1; use fixed_iteration or cg_holdout for l=" +
             std::to_string(m.cg.l));
  } else if (type == "filter") {
    m.type = MethodType::filter;
    c.allow_keys({"name", "type", "family", "grid", "step", "holdout_fraction"});
    const std::string fam = c.str("family");
    if (fam == "tikhonov")
      m.family = FilterFamily::tikhonov;
    else if (fam == "spectral_cutoff")
      m.family = FilterFamily::spectral_cutoff;
    else if (fam == "landweber")
      m.family = FilterFamily::landweber;
    else
      c.fail("family must be tikhonov|spectral_cutoff|landweber");
    if (!c.has("grid")) c.fail("filter method requires a 'grid' array");
    const json& g = c.j->at("grid");
    if (!g.is_array() || g.empty()) c.fail("'grid' must be a non-empty array of numbers");
    for (const auto& v : g) {
      if (!v.is_number()) c.fail("'grid' must contain numbers only");
      m.grid.push_back(v.get<double>());
    }
    m.step = c.num("step", 0.0);
    m.holdout_fraction = c.num("holdout_fraction", 0.2);
  } else if (type == "cg_holdout") {
    m.type = MethodType::cg_holdout;
    c.allow_keys({"name", "type", "l", "max_iters", "reorthogonalize", "breakdown_tol",
                  "holdout_fraction"});
    m.cg.l = static_cast<int>(c.uint("l", 1));
    m.cg.max_iters = static_cast<int>(c.uint("max_iters", 20));
    m.cg.breakdown_tol = c.num("breakdown_tol", 1e-12);
    m.reorth = parse_reorth();
    m.holdout_fraction = c.num("holdout_fraction", 0.2);
  } else {
    c.fail("type must be cg|filter|cg_holdout");
  }
  if ((m.type == MethodType::filter || m.type == MethodType::cg_holdout) &&
      !(m.holdout_fraction > 0.0 && m.holdout_fraction < 1.0))
    c.fail("holdout_fraction must lie in (0,1)");
  try {
    if (m.type != MethodType::filter) m.cg.validate();
  } catch (const ConfigError& e) {
    c.fail(e.what());
  }
  return m;
}

inline AuditConfig parse_audit(const Cursor& c) {
  c.allow_keys({"n", "gamma", "trials", "lambda"});
  AuditConfig a;
  a.n = static_cast<std::size_t>(c.uint("n", 200));
  a.gamma = c.num("gamma", 0.1);
  a.trials = static_cast<std::size_t>(c.uint("trials", 200));
  a.lambda = c.num("lambda", 0.05);
  if (a.n < 1 || a.trials < 1) c.fail("audit n and trials must be >= 1");
  if (!(a.gamma > 0.0 && a.gamma < 1.0)) c.fail("audit gamma must lie in (0,1)");
  if (!(a.lambda > 0.0)) c.fail("audit lambda must be positive");
  return a;
}

}  // namespace cfgdetail

/** @brief Parse and validate a config document; resolve defaults and "auto". */
inline NormalizedConfig validate_config_json(const json& root) {
  using cfgdetail::Cursor;
  Cursor c{&root, "config"};
  c.allow_keys({"mode", "seed", "output_dir", "problem", "data", "methods", "gram", "audit",
                "timing"});

  ExperimentConfig cfg;
  const std::string mode = c.str("mode", std::string("rates"));
  if (mode == "rates")
    cfg.mode = RunMode::rates;
  else if (mode == "audit")
    cfg.mode = RunMode::audit;
  else if (mode == "single_run")
    cfg.mode = RunMode::single_run;
  else
    c.fail("mode must be rates|audit|single_run");
  cfg.seed = c.uint("seed", 0);
  cfg.output_dir = c.str("output_dir", std::string("out"));
  cfg.timing = c.boolean("timing", false);

  if (!c.has("problem")) c.fail("missing required key 'problem'");
  cfg.problem = cfgdetail::parse_problem(c.child("problem"), cfg.seed);
  // Build once here: resolves kappa/D for "auto" and surfaces generator errors
  // (e.g. p too small for s) at validation time.
  auto [kernel, truth] = build_problem(cfg.problem);
  (void)kernel;

  const std::string gram = c.str("gram", std::string("auto"));
  if (gram == "auto")
    cfg.gram = GramPolicy::automatic;
  else if (gram == "dense")
    cfg.gram = GramPolicy::dense;
  else if (gram == "factored")
    cfg.gram = GramPolicy::factored;
  else
    c.fail("gram must be auto|dense|factored");

  if (cfg.mode != RunMode::audit) {
    if (!c.has("data")) c.fail("missing required key 'data'");
    Cursor d = c.child("data");
    d.allow_keys({"n_grid", "replicates", "n_unlabeled"});
    if (!d.has("n_grid")) d.fail("missing required key 'n_grid'");
    const json& ng = d.j->at("n_grid");
    if (!ng.is_array() || ng.empty()) d.fail("'n_grid' must be a non-empty array");
    for (const auto& v : ng) {
      if (!v.is_number_integer() || v.get<long long>() < 1)
        d.fail("'n_grid' entries must be integers >= 1");
      cfg.n_grid.push_back(v.get<std::size_t>());
    }
    for (std::size_t i = 1; i < cfg.n_grid.size(); ++i)
      if (cfg.n_grid[i] <= cfg.n_grid[i - 1]) d.fail("'n_grid' must be strictly increasing");
    cfg.replicates = static_cast<std::size_t>(d.uint("replicates", 1));
    if (cfg.replicates < 1) d.fail("'replicates' must be >= 1");
    if (d.has("n_unlabeled")) {
      const json& nu = d.j->at("n_unlabeled");
      if (nu.is_string()) {
        if (nu.get<std::string>() != "required")
          d.fail("'n_unlabeled' must be an integer or \"required\"");
        cfg.unlabeled_required = true;
      } else if (nu.is_number_integer() && nu.get<long long>() >= 0) {
        cfg.n_unlabeled_fixed = nu.get<std::size_t>();
      } else {
        d.fail("'n_unlabeled' must be a non-negative integer or \"required\"");
      }
    }

    if (!c.has("methods")) c.fail("missing required key 'methods'");
    const json& ms = root.at("methods");
    if (!ms.is_array() || ms.empty()) c.fail("'methods' must be a non-empty array");
    for (std::size_t i = 0; i < ms.size(); ++i) {
      Cursor mc{&ms[i], "methods[" + std::to_string(i) + "]"};
      cfg.methods.push_back(cfgdetail::parse_method(mc, cfg.problem, truth));
    }
    for (std::size_t i = 0; i < cfg.methods.size(); ++i)
      for (std::size_t k = i + 1; k < cfg.methods.size(); ++k)
        if (cfg.methods[i].name == cfg.methods[k].name)
          c.fail("duplicate method name '" + cfg.methods[i].name + "'");

    const bool has_unlabeled = cfg.unlabeled_required || cfg.n_unlabeled_fixed > 0;
    for (std::size_t i = 0; i < cfg.methods.size(); ++i)
      if (has_unlabeled && cfg.methods[i].type != MethodType::cg)
        c.fail("methods[" + std::to_string(i) +
               "]: filter/cg_holdout methods require fully labeled data (n_unlabeled = 0)");
    if (cfg.unlabeled_required) {
      bool found = false;
      for (const auto& m : cfg.methods)
        if (m.type == MethodType::cg && m.stopping.semi_supervised) found = true;
      if (!found)
        c.fail("n_unlabeled = \"required\" needs a cg method with semi_supervised stopping");
    }
    if (cfg.mode == RunMode::rates) {
      if (cfg.n_grid.size() < 4) c.fail("rates mode requires at least 4 n_grid points");
      if (cfg.replicates < 10) c.fail("rates mode requires at least 10 replicates");
    }
  }
  if (c.has("audit")) cfg.audit = cfgdetail::parse_audit(c.child("audit"));

  NormalizedConfig out;
  out.config = cfg;

  // Guarantee-hypothesis warnings (informational; the run proceeds).
  for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
    const MethodConfig& m = cfg.methods[i];
    if (m.type != MethodType::cg) continue;
    const StoppingConfig& sc = m.stopping;
    const std::string where = "methods[" + std::to_string(i) + "] (" + m.name + ")";
    if (sc.rule == StoppingRule::B_fixed && sc.r < 0.5 && !sc.semi_supervised)
      out.warnings.push_back(where + ": rule B with r = " + std::to_string(sc.r) +
                             " < 1/2 is outside the supervised guarantee; "
                             "consider semi_supervised with unlabeled data");
    if (sc.semi_supervised && sc.r + sc.s < 0.5)
      out.warnings.push_back(where + ": semi-supervised hypothesis r + s >= 1/2 violated (" +
                             std::to_string(sc.r) + " + " + std::to_string(sc.s) + " < 0.5)");
    if (sc.rule == StoppingRule::A_adaptive && cfg.problem.noise.kind == NoiseKind::gaussian)
      out.warnings.push_back(where + ": rule A assumes bounded responses, but the noise model "
                                     "is unbounded gaussian");
  }

  // Normalized echo with every default and "auto" resolved.
  json norm;
  norm["mode"] = mode;
  norm["seed"] = cfg.seed;
  norm["output_dir"] = cfg.output_dir;
  norm["timing"] = cfg.timing;
  norm["gram"] = (cfg.gram == GramPolicy::automatic
                      ? "auto"
                      : (cfg.gram == GramPolicy::dense ? "dense" : "factored"));
  {
    json p;
    p["p"] = cfg.problem.p;
    p["s"] = cfg.problem.s;
    p["r"] = cfg.problem.r;
    p["rho"] = cfg.problem.rho;
    json nz;
    switch (cfg.problem.noise.kind) {
      case NoiseKind::none: nz["kind"] = "none"; break;
      case NoiseKind::bounded_uniform: nz["kind"] = "bounded_uniform"; break;
      case NoiseKind::gaussian_truncated: nz["kind"] = "gaussian_truncated"; break;
      case NoiseKind::gaussian: nz["kind"] = "gaussian"; break;
    }
    nz["M"] = cfg.problem.noise.M;
    p["noise"] = nz;
    p["kappa"] = truth.kappa;
    p["D_effective"] = truth.D_effective;
    p["sup_norm_bound"] = truth.sup_norm_bound;
    norm["problem"] = p;
  }
  if (cfg.mode != RunMode::audit) {
    json d;
    d["n_grid"] = cfg.n_grid;
    d["replicates"] = cfg.replicates;
    if (cfg.unlabeled_required)
      d["n_unlabeled"] = "required";
    else
      d["n_unlabeled"] = cfg.n_unlabeled_fixed;
    norm["data"] = d;
    json ms = json::array();
    for (const auto& m : cfg.methods) {
      json mj;
      mj["name"] = m.name;
      switch (m.type) {
        case MethodType::cg: {
          mj["type"] = "cg";
          mj["l"] = m.cg.l;
          mj["max_iters"] = m.cg.max_iters;
          mj["breakdown_tol"] = m.cg.breakdown_tol;
          mj["reorthogonalize"] =
              (m.reorth == ReorthMode::automatic ? json("auto") : json(m.reorth == ReorthMode::on));
          json st;
          const StoppingConfig& sc = m.stopping;
          st["rule"] = (sc.rule == StoppingRule::A_adaptive
                            ? "A_adaptive"
                            : (sc.rule == StoppingRule::B_fixed ? "B_fixed" : "fixed_iteration"));
          st["tau"] = sc.tau;
          st["tau_prime"] = sc.tau_prime;
          st["gamma"] = sc.gamma;
          st["M"] = sc.M;
          st["kappa"] = sc.kappa;
          st["D"] = sc.D;
          st["r"] = sc.r;
          st["s"] = sc.s;
          st["rho"] = sc.rho;
          st["semi_supervised"] = sc.semi_supervised;
          st["fixed_m"] = sc.fixed_m;
          st["eta_over_delta_mode"] =
              (sc.eta_over_delta_mode == EtaOverDeltaMode::nemirovskii ? "nemirovskii"
                                                                       : "paper_literal");
          mj["stopping"] = st;
          break;
        }
        case MethodType::filter: {
          mj["type"] = "filter";
          mj["family"] = (m.family == FilterFamily::tikhonov
                              ? "tikhonov"
                              : (m.family == FilterFamily::spectral_cutoff ? "spectral_cutoff"
                                                                           : "landweber"));
          mj["grid"] = m.grid;
          mj["step"] = m.step;
          mj["holdout_fraction"] = m.holdout_fraction;
          break;
        }
        case MethodType::cg_holdout: {
          mj["type"] = "cg_holdout";
          mj["l"] = m.cg.l;
          mj["max_iters"] = m.cg.max_iters;
          mj["breakdown_tol"] = m.cg.breakdown_tol;
          mj["reorthogonalize"] =
              (m.reorth == ReorthMode::automatic ? json("auto") : json(m.reorth == ReorthMode::on));
          mj["holdout_fraction"] = m.holdout_fraction;
          break;
        }
      }
      ms.push_back(mj);
    }
    norm["methods"] = ms;
  }
  {
    json a;
    a["n"] = cfg.audit.n;
    a["gamma"] = cfg.audit.gamma;
    a["trials"] = cfg.audit.trials;
    a["lambda"] = cfg.audit.lambda;
    norm["audit"] = a;
  }
  out.normalized = norm;
  return out;
}

/** @brief Load, parse, and validate a config file. */
inline NormalizedConfig validate_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("JSON parse failure in ") + path + ": " + e.what());
  }
  return validate_config_json(root);
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

/** @brief One CSV row (plus bookkeeping kept out of the file). */
struct ResultRow {
  std::string method;
  std::size_t n = 0;
  std::size_t replicate = 0;
  long stop_m = -1;
  double l2_error = std::numeric_limits<double>::quiet_NaN();
  double discrepancy_at_stop = std::numeric_limits<double>::quiet_NaN();
  double threshold_at_stop = std::numeric_limits<double>::quiet_NaN();
  double wall_time_ms = 0.0;
  int error_flag = 0;
  bool untriggered = false;      // not serialized to CSV
  std::string error_message;    // not serialized to CSV
};

struct RunArtifacts {
  std::vector<ResultRow> rows;
  json summary;
};

namespace rundetail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

using GramVariant = std::variant<GramSystem, FactoredGram>;

inline bool use_factored(const ExperimentConfig& cfg, const KernelModel& kernel,
                         std::size_t n_total) {
  if (cfg.gram == GramPolicy::dense) return false;
  const bool mercer = kernel.family() == KernelFamily::spectral_mercer;
  if (cfg.gram == GramPolicy::factored) {
    if (!mercer) throw ConfigError("factored gram requires a Mercer kernel");
    return true;
  }
  return mercer && 2 * kernel.rank() <= n_total;
}

inline bool resolve_reorth(ReorthMode mode, std::size_t n_total) {
  switch (mode) {
    case ReorthMode::on: return true;
    case ReorthMode::off: return false;
    case ReorthMode::automatic: return n_total <= 2000;
  }
  return true;
}

/** Split a fully labeled dataset into train-prefix / validation-suffix. */
inline void holdout_split(const Dataset& data, double fraction, Dataset& train,
                          std::vector<double>& val_X, Eigen::VectorXd& val_Y) {
  const std::size_t n = data.n_labeled;
  std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  n_val = std::max<std::size_t>(n_val, 1);
  if (n_val >= n) throw ConfigError("holdout split leaves no training data (n too small)");
  const std::size_t n_train = n - n_val;
  train.X.assign(data.X.begin(), data.X.begin() + static_cast<std::ptrdiff_t>(n_train));
  train.Y = data.Y.head(static_cast<Eigen::Index>(n_train));
  train.n_labeled = n_train;
  train.n_total = n_train;
  val_X.assign(data.X.begin() + static_cast<std::ptrdiff_t>(n_train),
               data.X.begin() + static_cast<std::ptrdiff_t>(n));
  val_Y = data.Y.segment(static_cast<Eigen::Index>(n_train), static_cast<Eigen::Index>(n_val));
}

template <class System>
ResultRow run_cg_method(const MethodConfig& m, const System& g, const GroundTruth& truth,
                        const KernelModel& kernel, const Dataset& data) {
  CGConfig cgc = m.cg;
  cgc.reorthogonalize = resolve_reorth(m.reorth, data.n_total);
  CGFit fit = cg_run(g, g.y, cgc);
  StopDecision dec = stop(g, fit, m.stopping, data.n_labeled);
  const std::size_t m_used = static_cast<std::size_t>(dec.m_tilde);

  ResultRow row;
  row.stop_m = dec.m_tilde;
  row.untriggered = !dec.triggered;
  if constexpr (std::is_same_v<System, FactoredGram>) {
    row.l2_error = l2_error_exact(truth, g, fit.alphas[m_used]);
  } else {
    row.l2_error = l2_error_exact(truth, kernel, data.X, fit.alphas[m_used]);
  }
  if (!dec.threshold_trace.empty()) {
    const ThresholdPoint& fired = dec.threshold_trace.back();
    row.discrepancy_at_stop = fired.discrepancy;
    row.threshold_at_stop = fired.threshold;
  }
  row.error_flag = 0;
  return row;
}

inline ResultRow run_filter_method(const MethodConfig& m, const KernelModel& kernel,
                                   const GroundTruth& truth, const Dataset& data) {
  Dataset train;
  std::vector<double> val_X;
  Eigen::VectorXd val_Y;
  holdout_split(data, m.holdout_fraction, train, val_X, val_Y);
  GramSystem g = assemble_gram(kernel, train);

  std::vector<FilterSpec> grid;
  for (double v : m.grid) {
    FilterSpec fs;
    fs.family = m.family;
    if (m.family == FilterFamily::landweber) {
      fs.iterations = static_cast<long>(std::llround(v));
      fs.step = m.step;
    } else {
      fs.lambda = v;
    }
    grid.push_back(fs);
  }
  const std::vector<Eigen::VectorXd> cands = filter_fit_grid(g, grid);
  const std::size_t best = holdout_select(kernel, train.X, cands, val_X, val_Y);

  ResultRow row;
  row.stop_m = static_cast<long>(best);
  row.l2_error = l2_error_exact(truth, kernel, train.X, cands[best]);
  row.error_flag = 0;
  return row;
}

inline ResultRow run_cg_holdout_method(const MethodConfig& m, const KernelModel& kernel,
                                       const GroundTruth& truth, const Dataset& data) {
  Dataset train;
  std::vector<double> val_X;
  Eigen::VectorXd val_Y;
  holdout_split(data, m.holdout_fraction, train, val_X, val_Y);
  GramSystem g = assemble_gram(kernel, train);

  CGConfig cgc = m.cg;
  cgc.reorthogonalize = resolve_reorth(m.reorth, train.n_total);
  CGFit fit = cg_run(g, g.y, cgc);
  const std::size_t best = holdout_select(kernel, train.X, fit.alphas, val_X, val_Y);

  ResultRow row;
  row.stop_m = static_cast<long>(best);
  row.l2_error = l2_error_exact(truth, kernel, train.X, fit.alphas[best]);
  row.error_flag = 0;
  return row;
}

}  // namespace rundetail

/**
 * @brief Execute an experiment and write results.csv, summary.json, and
 *        plotdata/*.tsv under cfg.output_dir.
 *
 * @param jobs worker threads (0 = hardware concurrency).
 * @param quiet suppress progress logging to stderr.
 */
inline RunArtifacts run_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1,
                                   bool quiet = false) {
  namespace fs = std::filesystem;
  auto [kernel, truth] = build_problem(cfg.problem);

  fs::create_directories(fs::path(cfg.output_dir) / "plotdata");
  RunArtifacts art;
  json summary;
  summary["mode"] = (cfg.mode == RunMode::rates
                         ? "rates"
                         : (cfg.mode == RunMode::audit ? "audit" : "single_run"));
  summary["seed"] = cfg.seed;
  {
    json p;
    p["p"] = cfg.problem.p;
    p["s"] = cfg.problem.s;
    p["r"] = cfg.problem.r;
    p["rho"] = cfg.problem.rho;
    p["kappa"] = truth.kappa;
    p["D_effective"] = truth.D_effective;
    p["sup_norm_bound"] = truth.sup_norm_bound;
    p["l2_norm_sq"] = truth.l2_norm_sq;
    summary["problem"] = p;
  }

  if (cfg.mode == RunMode::audit) {
    const AuditReport rep = run_concentration_audits(truth, cfg.audit.n, cfg.audit.lambda,
                                                     cfg.audit.gamma, cfg.audit.trials, cfg.seed);
    const double slack =
        cfg.audit.gamma +
        3.0 * std::sqrt(cfg.audit.gamma * (1.0 - cfg.audit.gamma) / static_cast<double>(rep.trials));
    json a;
    a["n"] = cfg.audit.n;
    a["gamma"] = cfg.audit.gamma;
    a["trials"] = cfg.audit.trials;
    a["lambda"] = cfg.audit.lambda;
    a["fraction_operator"] = rep.fraction_operator;
    a["fraction_warped"] = rep.fraction_warped;
    a["bound_operator"] = rep.bound_operator;
    a["bound_warped"] = rep.bound_warped;
    a["effective_dim"] = rep.effective_dim;
    a["binomial_slack_bound"] = slack;
    a["pass"] = (rep.fraction_operator <= slack) && (rep.fraction_warped <= slack);
    summary["audit"] = a;
    art.summary = summary;

    std::ofstream csv(fs::path(cfg.output_dir) / "results.csv");
    csv << "method,n,replicate,stop_m,l2_error,discrepancy_at_stop,threshold_at_stop,"
           "wall_time_ms,error_flag\n";
    std::ofstream js(fs::path(cfg.output_dir) / "summary.json");
    js << summary.dump(2) << "\n";
    if (!quiet)
      std::cerr << "[kcg] audit: operator " << rep.fraction_operator << ", warped "
                << rep.fraction_warped << " (slack bound " << slack << ")\n";
    return art;
  }

  // Per-n unlabeled counts.
  std::vector<std::size_t> extra_unlabeled(cfg.n_grid.size(), cfg.n_unlabeled_fixed);
  if (cfg.unlabeled_required) {
    const MethodConfig* src = nullptr;
    for (const auto& m : cfg.methods)
      if (m.type == MethodType::cg && m.stopping.semi_supervised) {
        src = &m;
        break;
      }
    if (!src) throw ConfigError("n_unlabeled = \"required\" needs a semi-supervised cg method");
    for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
      const std::size_t total = required_unlabeled(cfg.n_grid[i], src->stopping.r,
                                                   src->stopping.s, src->stopping.D,
                                                   src->stopping.gamma);
      extra_unlabeled[i] = total - cfg.n_grid[i];
    }
  }

  const std::size_t n_cells = cfg.n_grid.size() * cfg.replicates;
  const std::size_t n_methods = cfg.methods.size();
  std::vector<std::vector<ResultRow>> cells(n_cells);
  const bool need_main_gram = std::any_of(cfg.methods.begin(), cfg.methods.end(),
                                          [](const MethodConfig& m) {
                                            return m.type == MethodType::cg;
                                          });

  auto run_cell = [&](std::size_t cell) {
    const std::size_t ni = cell / cfg.replicates;
    const std::size_t rep = cell % cfg.replicates;
    const std::size_t n = cfg.n_grid[ni];
    std::vector<ResultRow>& rows = cells[cell];
    rows.resize(n_methods);
    for (std::size_t mi = 0; mi < n_methods; ++mi) {
      rows[mi].method = cfg.methods[mi].name;
      rows[mi].n = n;
      rows[mi].replicate = rep;
    }
    try {
      PhiloxRng rng{cfg.seed, static_cast<std::uint64_t>(StreamPurpose::dataset),
                    static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)};
      const Dataset data =
          sample(truth, n, extra_unlabeled[ni], cfg.problem.noise, rng);

      std::optional<rundetail::GramVariant> main_gram;
      if (need_main_gram) {
        if (rundetail::use_factored(cfg, kernel, data.n_total))
          main_gram.emplace(assemble_factored_gram(kernel, data));
        else
          main_gram.emplace(assemble_gram(kernel, data));
      }

      for (std::size_t mi = 0; mi < n_methods; ++mi) {
        const MethodConfig& m = cfg.methods[mi];
        const auto t0 = std::chrono::steady_clock::now();
        try {
          ResultRow row;
          switch (m.type) {
            case MethodType::cg:
              row = std::visit(
                  [&](const auto& g) {
                    return rundetail::run_cg_method(m, g, truth, kernel, data);
                  },
                  *main_gram);
              break;
            case MethodType::filter:
              row = rundetail::run_filter_method(m, kernel, truth, data);
              break;
            case MethodType::cg_holdout:
              row = rundetail::run_cg_holdout_method(m, kernel, truth, data);
              break;
          }
          row.method = m.name;
          row.n = n;
          row.replicate = rep;
          if (cfg.timing) {
            const auto t1 = std::chrono::steady_clock::now();
            row.wall_time_ms =
                std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0)
                    .count();
          }
          rows[mi] = row;
        } catch (const std::exception& e) {
          rows[mi].error_flag = 1;
          rows[mi].stop_m = -1;
          rows[mi].error_message = e.what();
        }
      }
    } catch (const std::exception& e) {
      for (std::size_t mi = 0; mi < n_methods; ++mi) {
        rows[mi].error_flag = 1;
        rows[mi].stop_m = -1;
        rows[mi].error_message = e.what();
      }
    }
  };

  std::size_t workers = jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : jobs;
  workers = std::min(workers, n_cells);
  if (workers <= 1) {
    for (std::size_t cell = 0; cell < n_cells; ++cell) run_cell(cell);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          const std::size_t cell = next.fetch_add(1);
          if (cell >= n_cells) return;
          run_cell(cell);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  // Deterministic order: method index, then n, then replicate.
  art.rows.reserve(n_cells * n_methods);
  for (std::size_t mi = 0; mi < n_methods; ++mi)
    for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni)
      for (std::size_t rep = 0; rep < cfg.replicates; ++rep)
        art.rows.push_back(cells[ni * cfg.replicates + rep][mi]);

  {
    std::ofstream csv(fs::path(cfg.output_dir) / "results.csv");
    if (!csv) throw Error("cannot write results.csv under " + cfg.output_dir);
    csv << "method,n,replicate,stop_m,l2_error,discrepancy_at_stop,threshold_at_stop,"
           "wall_time_ms,error_flag\n";
    for (const ResultRow& r : art.rows) {
      csv << r.method << ',' << r.n << ',' << r.replicate << ',' << r.stop_m << ','
          << rundetail::fmt17(r.l2_error) << ',' << rundetail::fmt17(r.discrepancy_at_stop) << ','
          << rundetail::fmt17(r.threshold_at_stop) << ',' << rundetail::fmt17(r.wall_time_ms)
          << ',' << r.error_flag << '\n';
    }
  }

  if (cfg.unlabeled_required) {
    json u;
    for (std::size_t i = 0; i < cfg.n_grid.size(); ++i)
      u[std::to_string(cfg.n_grid[i])] = cfg.n_grid[i] + extra_unlabeled[i];
    summary["n_total_by_n"] = u;
  }

  json methods_summary = json::array();
  for (std::size_t mi = 0; mi < n_methods; ++mi) {
    const MethodConfig& m = cfg.methods[mi];
    json mj;
    mj["name"] = m.name;
    mj["type"] = (m.type == MethodType::cg
                      ? "cg"
                      : (m.type == MethodType::filter ? "filter" : "cg_holdout"));
    std::size_t n_err = 0, n_untrig = 0;
    std::vector<std::vector<double>> per_n(cfg.n_grid.size());
    for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
      for (std::size_t rep = 0; rep < cfg.replicates; ++rep) {
        const ResultRow& r = cells[ni * cfg.replicates + rep][mi];
        if (r.error_flag) {
          ++n_err;
          continue;
        }
        if (r.untriggered) ++n_untrig;
        per_n[ni].push_back(r.l2_error);
      }
    }
    mj["error_rows"] = n_err;
    mj["untriggered_rows"] = n_untrig;

    // Per-n medians for the plot files (and the rate fit in rates mode).
    std::vector<double> medians(cfg.n_grid.size(),
                                std::numeric_limits<double>::quiet_NaN());
    for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni)
      if (!per_n[ni].empty()) medians[ni] = detail::quantile(per_n[ni], 0.5);

    if (cfg.mode == RunMode::rates) {
      try {
        std::vector<std::size_t> grid_ok;
        std::vector<std::vector<double>> errs_ok;
        for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni)
          if (!per_n[ni].empty()) {
            grid_ok.push_back(cfg.n_grid[ni]);
            errs_ok.push_back(per_n[ni]);
          }
        const double theo = -2.0 * cfg.problem.r / (2.0 * cfg.problem.r + cfg.problem.s);
        const RateReport rate = fit_rate(grid_ok, errs_ok, theo);
        json rj;
        rj["n_grid"] = rate.n_grid;
        rj["medians"] = rate.medians;
        rj["iqr"] = rate.iqr;
        rj["slope"] = rate.slope;
        rj["slope_se"] = rate.slope_se;
        rj["intercept"] = rate.intercept;
        rj["theoretical_slope"] = rate.theoretical_slope;
        rj["warnings"] = rate.warnings;
        mj["rate"] = rj;
      } catch (const std::exception& e) {
        mj["rate_error"] = e.what();
      }
    } else {
      mj["medians"] = medians;
    }
    methods_summary.push_back(mj);

    std::ofstream tsv(fs::path(cfg.output_dir) / "plotdata" /
                      (cfgdetail::sanitize_name(m.name) + ".tsv"));
    tsv << "n\tmedian_error\tlog10_n\tlog10_median_error\n";
    for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
      const double med = medians[ni];
      tsv << cfg.n_grid[ni] << '\t' << rundetail::fmt17(med) << '\t'
          << rundetail::fmt17(std::log10(static_cast<double>(cfg.n_grid[ni]))) << '\t'
          << rundetail::fmt17(med > 0.0 ? std::log10(med)
                                        : std::numeric_limits<double>::quiet_NaN())
          << '\n';
    }
  }
  summary["methods"] = methods_summary;
  art.summary = summary;

  std::ofstream js(fs::path(cfg.output_dir) / "summary.json");
  js << summary.dump(2) << "\n";

  if (!quiet) {
    std::size_t n_err = 0;
    for (const auto& r : art.rows) n_err += static_cast<std::size_t>(r.error_flag);
    std::cerr << "[kcg] wrote " << art.rows.size() << " rows (" << n_err
              << " error rows) to " << cfg.output_dir << "/results.csv\n";
    for (const auto& mj : methods_summary)
      if (mj.contains("rate"))
        std::cerr << "[kcg] " << mj["name"].get<std::string>() << ": slope "
                  << mj["rate"]["slope"].get<double>() << " (theory "
                  << mj["rate"]["theoretical_slope"].get<double>() << ")\n";
  }
  return art;
}

}  // namespace kcg
