#include <iostream>

#include "CLI11.hpp"
#include "zcf/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"zero-curvature factorization, Weyl evolution, inversion and GBDT solitons"};
  app.require_subcommand(1);

  std::string config;
  std::string out = "out";
  std::optional<int> steps;
  for (const char* name : {"factor-check", "weyl-evolve", "invert", "gbdt"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON run configuration")->required();
    sub->add_option("--out", out, "output directory");
    sub->add_option("--steps", steps, "override the integrator step count");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : zcf::cli::kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  const int code = zcf::cli::run_command(name, config, out, steps);
  std::ifstream summary(std::filesystem::path(out) / "summary.json");
  if (summary) std::cout << summary.rdbuf();
  return code;
}
