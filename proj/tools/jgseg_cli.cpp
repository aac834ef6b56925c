// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point. One subcommand per pipeline stage; artifacts go
// to $JGSEG_RUNS_DIR/<run-name>/<subcommand>/.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "jgseg/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"jgseg: joint image+label generative segmentation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_name = "default";
  std::vector<std::string> overrides;
  std::int64_t seed_flag = -1;

  for (const std::string& name : jgseg::subcommand_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "config file (key = value lines)");
    sub->add_option("--set", overrides, "override, key=value (repeatable)");
    sub->add_option("--run-name", run_name, "run directory name");
    sub->add_option("--seed", seed_flag, "override the global seed");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string sub = app.get_subcommands().front()->get_name();

  try {
    jgseg::RunConfig cfg;
    try {
      cfg = jgseg::resolve_config(config_path, overrides);
      if (seed_flag >= 0) cfg.seed = seed_flag;
      cfg.validate();
    } catch (const jgseg::ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw jgseg::ConfigError(e.what());
    }
    jgseg::RunPaths paths{jgseg::default_runs_root(), run_name};
    jgseg::run_subcommand(sub, cfg, paths, std::cout);
    return jgseg::kExitOk;
  } catch (const jgseg::ConfigError& e) {
    std::cerr << "error: config: " << e.what() << std::endl;
    return jgseg::kExitConfigError;
  } catch (const jgseg::PreconditionError& e) {
    std::cerr << "error: precondition: " << e.what() << std::endl;
    return jgseg::kExitPreconditionError;
  } catch (const jgseg::DivergedInversion& e) {
    std::cerr << "error: diverged: " << e.what() << std::endl;
    return jgseg::kExitFailedRun;
  } catch (const std::exception& e) {
    std::cerr << "error: failed: " << e.what() << std::endl;
    return jgseg::kExitFailedRun;
  }
}
