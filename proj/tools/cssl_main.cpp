#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cssl/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::vector<cssl::Mode> parse_modes(const std::string& csv) {
  std::vector<cssl::Mode> modes;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ','))
    if (!token.empty()) modes.push_back(cssl::mode_from_string(token));
  if (modes.empty()) throw std::invalid_argument("no modes given");
  return modes;
}

int print_config_errors(const std::vector<cssl::ConfigError>& errors) {
  for (const cssl::ConfigError& e : errors)
    std::cerr << "config error: " << (e.path.empty() ? "<root>" : e.path) << ": "
              << e.message << "\n";
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual semi-supervised learning experiment runner"};
  app.require_subcommand(1);

  std::string config_path, modes_csv, out_dir, plot_dir;
  std::uint64_t seed = 0;
  int workers = 0;
  bool no_plots = false;

  CLI::App* run = app.add_subcommand("run", "run a battery of experiments");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--modes", modes_csv,
                  "comma-separated subset of sup-ft,upd-V,upd-T,upd-V+T");
  CLI::Option* seed_opt = run->add_option("--seed", seed, "override the master seed");
  run->add_option("--out", out_dir, "override the output directory");
  CLI::Option* workers_opt =
      run->add_option("--workers", workers, "sequence-level worker cap");
  run->add_flag("--no-plots", no_plots, "skip SVG emission");

  CLI::App* validate = app.add_subcommand("validate", "check a config file");
  validate->add_option("--config", config_path, "experiment config file")->required();

  CLI::App* plot = app.add_subcommand("plot", "render plots from reports.json");
  plot->add_option("--in", plot_dir, "battery output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      const cssl::ConfigValidation result = cssl::validate_config_file(config_path);
      if (!result.ok()) return print_config_errors(result.errors);
      std::cout << cssl::normalized_config_json(*result.config);
      return kExitOk;
    }

    if (run->parsed()) {
      const cssl::ConfigValidation result = cssl::validate_config_file(config_path);
      if (!result.ok()) return print_config_errors(result.errors);

      cssl::RunOptions opts;
      try {
        if (!modes_csv.empty()) opts.modes = parse_modes(modes_csv);
      } catch (const std::exception& e) {
        std::cerr << "config error: --modes: " << e.what() << "\n";
        return kExitConfig;
      }
      if (!out_dir.empty()) opts.out_dir = out_dir;
      if (seed_opt->count() > 0) opts.seed = seed;
      if (workers_opt->count() > 0) opts.workers = workers;
      opts.plots = !no_plots;

      const cssl::RunManifest manifest = cssl::run_battery(*result.config, opts);
      std::cout << "battery " << manifest.battery << " done: "
                << manifest.sequence_dirs.size() << " sequences, "
                << manifest.modes.size() << " modes, config " << manifest.config_hash
                << "\n";
      return kExitOk;
    }

    if (plot->parsed()) {
      const std::vector<std::string> written =
          cssl::emit_plots(plot_dir + "/reports.json", plot_dir);
      std::cout << "wrote " << written.size() << " plot(s)\n";
      return kExitOk;
    }
  } catch (const cssl::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
