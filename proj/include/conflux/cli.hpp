#pragma once

#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "conflux/config.hpp"
#include "conflux/error.hpp"
#include "conflux/pipeline.hpp"

namespace conflux {

// Parses flags, resolves the config (defaults < file < flags) and runs one
// subcommand. Returns the process exit code: 0 ok, 1 usage, 2 data,
// 3 numerical failure.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Conflict exposure forecasting: GP exposure surfaces and forest ensembles", "conflux"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::optional<int> jobs, horizon;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::vector<std::string> overrides;
  bool print_config = false;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--jobs", jobs, "worker threads within a stage");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--horizon", horizon, "forecast horizon in months (default 36)");
  app.add_option("--out", out_dir, "run directory for artifacts");
  app.add_option("--set", overrides, "extra key=value assignment, repeatable");
  app.add_flag("--print-config", print_config, "print the resolved config and exit");

  for (const auto& s : kStages) app.add_subcommand(s.name, s.summary);
  app.add_subcommand("pipeline", "run every stage in order");

  std::vector<const char*> argv{"conflux"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, text::trim(std::string_view(kv).substr(0, eq)), std::string_view(kv).substr(eq + 1));
    }
    if (jobs) cfg.jobs = *jobs;
    if (horizon) cfg.horizon = *horizon;
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out = *out_dir;
    if (!cfg.splits.empty()) cfg.split = load_split_spec(cfg.splits);
    cfg.validate();
    if (print_config) {
      out << dump_config(cfg);
      return 0;
    }
    Pipeline pipeline(cfg, err);
    pipeline.run(app.get_subcommands().front()->get_name());
    return 0;
  } catch (const Error& e) {
    err << "conflux: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::bad_alloc&) {
    err << "conflux: out of memory\n";
    return 3;
  } catch (const std::exception& e) {
    err << "conflux: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace conflux
