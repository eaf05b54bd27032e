// Command-line front end: run, certify, compare and sweep experiment configs.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "npflow/experiment.hpp"

namespace {

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw npflow::ConfigError("--values: '" + item + "' is not a number");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos)
      throw npflow::ConfigError("--values: '" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlinearly preconditioned gradient flows: simulation and certificates"};
  app.require_subcommand(1);

  std::string config_path, param, values;
  auto* run = app.add_subcommand("run", "integrate and write the trajectory CSV/SVG");
  auto* certify = app.add_subcommand("certify", "run the certificate suite and write the JSON report");
  auto* compare = app.add_subcommand("compare", "iteration vs flow and mirror-descent duality per step size");
  auto* sweep = app.add_subcommand("sweep", "repeat a run over values of one scalar parameter");
  for (auto* sc : {run, certify, compare, sweep}) sc->add_option("config", config_path, "experiment JSON")->required();
  sweep->add_option("--param", param, "potential parameter or integrator key")->required();
  sweep->add_option("--values", values, "comma-separated list")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return npflow::kExitConfig;
  }

  try {
    const npflow::ExperimentConfig cfg = npflow::load_config(config_path);
    if (*run) return npflow::cmd_run(cfg, std::cout, std::cerr);
    if (*certify) return npflow::cmd_certify(cfg, std::cout, std::cerr);
    if (*compare) return npflow::cmd_compare(cfg, std::cout, std::cerr);
    return npflow::cmd_sweep(cfg, param, parse_values(values), std::cout, std::cerr);
  } catch (const npflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return npflow::kExitConfig;
  } catch (const npflow::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return npflow::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return npflow::kExitNumerical;
  }
}
