// Command-line driver: run / validate / audit experiment configs.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "kcg/experiment.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::size_t jobs = 1;
  bool quiet = false;
  bool timing = false;
};

void add_run_options(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("config", opts.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--out", opts.out_dir, "override the config's output directory");
  cmd->add_option("--jobs", opts.jobs, "worker threads (0 = all hardware threads)")
      ->default_val(std::size_t{1});
  cmd->add_flag("--quiet", opts.quiet, "suppress progress output");
  cmd->add_flag("--timing", opts.timing,
                "record per-fit wall times (off by default: timed runs are not byte-reproducible)");
}

int do_validate(const CommonOpts& opts) {
  kcg::NormalizedConfig norm = kcg::validate_config(opts.config_path);
  for (const std::string& w : norm.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << norm.normalized.dump(2) << "\n";
  if (!opts.quiet)
    std::cerr << "[kcg] " << opts.config_path << " is valid (" << norm.warnings.size()
              << " warning(s))\n";
  return 0;
}

int do_run(const CommonOpts& opts, bool force_audit) {
  kcg::NormalizedConfig norm = kcg::validate_config(opts.config_path);
  for (const std::string& w : norm.warnings) std::cerr << "warning: " << w << "\n";
  kcg::ExperimentConfig cfg = norm.config;
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  if (opts.timing) cfg.timing = true;
  if (force_audit) cfg.mode = kcg::RunMode::audit;
  kcg::run_experiment(cfg, opts.jobs, opts.quiet);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel conjugate-gradient regression with early-stopping regularization"};
  app.require_subcommand(1);

  CommonOpts run_opts, validate_opts, audit_opts;
  CLI::App* cmd_run = app.add_subcommand("run", "execute an experiment config");
  add_run_options(cmd_run, run_opts);
  CLI::App* cmd_validate =
      app.add_subcommand("validate", "check a config and print its normalized form");
  cmd_validate->add_option("config", validate_opts.config_path, "experiment config (JSON)")
      ->required();
  cmd_validate->add_flag("--quiet", validate_opts.quiet, "suppress the status line");
  CLI::App* cmd_audit =
      app.add_subcommand("audit", "run the concentration audits from a config's audit block");
  add_run_options(cmd_audit, audit_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (cmd_run->parsed()) return do_run(run_opts, false);
    if (cmd_validate->parsed()) return do_validate(validate_opts);
    if (cmd_audit->parsed()) return do_run(audit_opts, true);
    std::cerr << "error: no subcommand given\n";
    return 1;
  } catch (const kcg::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
