#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dk/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Particle simulator and verification harness for degenerate Dean-Kawasaki equations"};
  app.require_subcommand(1);

  std::string config_path, out_dir, model_kind;
  unsigned workers = 1;

  auto* run = app.add_subcommand("run", "Run the suites selected in a configuration file");
  run->add_option("config", config_path, "Configuration file (JSON-compatible)")->required();
  run->add_option("--workers,-j", workers, "Worker threads (0 = all cores)");
  run->add_option("--out,-o", out_dir, "Output directory (overrides the config)");

  auto* describe = app.add_subcommand("describe", "Describe a catalogued model");
  describe->add_option("model", model_kind,
                       "InertialLangevin | ActiveMatter | InteractingVFP | Flocking | LinearOU")
      ->required();

  auto* version = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dk::kExitConfig;
  }

  if (*run) return dk::run_command(config_path, out_dir, workers, std::cout, std::cerr);
  if (*describe) {
    try {
      std::cout << dk::describe_model(model_kind);
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "unknown model kind '" << model_kind << "'\n";
      return dk::kExitConfig;
    }
  }
  if (*version) {
    std::cout << "dk " << dk::version_string() << '\n';
    return 0;
  }
  return 0;
}
