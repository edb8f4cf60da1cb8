// mac_alloc: energy allocation experiments over a fading multiple-access channel.
//
//   mac_alloc run <config> [--seed S] [--threads K] [--out PATH] [--policies a,b,c]
//                          [--n-realizations N] [--set key.path=value]...
//   mac_alloc verify <config> [--threads K] [--set key.path=value]...

#include <iostream>

#include <CLI11.hpp>

#include "mac_alloc/cli.hpp"

int main(int argc, char** argv) {
  using namespace mac_alloc::cli;

  CLI::App app{"Energy allocation over a fading multiple-access channel"};
  app.require_subcommand(1);

  std::string config_path;
  RunFlags flags;
  std::vector<std::string> sets;
  std::size_t threads = 1;

  auto* run = app.add_subcommand("run", "Run the experiment and write the CSV results");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_option("--seed", flags.seed, "Overrides experiment.seed");
  run->add_option("--threads", flags.threads, "Worker threads (results do not depend on it)");
  run->add_option("--out", flags.out, "Overrides output.csv");
  run->add_option("--policies", flags.policies, "Overrides experiment.policies, comma separated");
  run->add_option("--n-realizations", flags.n_realizations, "Overrides experiment.n_realizations");
  run->add_option("--set", sets, "Overrides any key, e.g. solver.dp.energy_grid_points=41");

  auto* verify = app.add_subcommand("verify", "Check the solver and policy properties at reduced scale");
  verify->add_option("config", config_path, "JSON config file")->required();
  verify->add_option("--threads", threads, "Worker threads for the DP tables");
  verify->add_option("--set", sets, "Overrides any key, e.g. solver.iwf.objective_tol=1e-6");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  std::vector<Override> overrides;
  try {
    for (const auto& s : sets) overrides.push_back(parse_override(s));
  } catch (const ConfigError& e) {
    std::cerr << error_line(kConfigError, "config", e.what(), e.key_path()) << "\n";
    return kConfigError;
  }

  if (*run) {
    flags.sets = std::move(overrides);
    return cmd_run(config_path, flags, std::cout, std::cerr);
  }
  return cmd_verify(config_path, overrides, threads, std::cout, std::cerr);
}
