#include "nlfp/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Nonlinear Fokker-Planck toolkit"};
  app.require_subcommand(1);
  std::string config, out;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  for (const char* name : {"check", "residual", "simulate", "fpme", "ddsde"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "YAML or JSON config file")->required();
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--threads", threads, "worker threads, 0 = all cores (overrides the config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : nlfp::exit_config;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  const auto* sub = app.get_subcommand(cmd);
  return nlfp::run_guarded(
      cmd,
      [&] {
        nlfp::ExperimentConfig c = nlfp::load_config(config);
        if (sub->count("--out")) c.out = out;
        if (sub->count("--seed")) c.seed = seed;
        if (sub->count("--threads")) c.threads = threads;
        return c;
      },
      std::cout, std::cerr);
}
