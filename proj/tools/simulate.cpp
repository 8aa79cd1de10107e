#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "irsopt/experiments.hpp"

namespace {

std::filesystem::path resolve_out(const std::string& path) {
  std::filesystem::path p(path);
  const char* dir = std::getenv("IRSOPT_OUT_DIR");
  if (dir != nullptr && *dir != '\0' && p.is_relative())
    return std::filesystem::path(dir) / p;
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo experiment runner for secure IRS-assisted "
               "opportunistic transmission"};
  std::string config_path;
  std::string out_path;
  std::string format = "csv";
  std::uint64_t seed_override = 0;
  bool seed_given = false;
  bool emit_raw = false;

  app.add_option("config", config_path, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_path,
                 "output file (default: stdout). Relative paths resolve "
                 "against $IRSOPT_OUT_DIR when set");
  app.add_option("--format", format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--seed", seed_override, "override the config's master seed")
      ->each([&](const std::string&) { seed_given = true; });
  app.add_flag("--emit-raw", emit_raw,
               "also write per-trial records next to the output");

  CLI11_PARSE(app, argc, argv);

  try {
    irsopt::ExperimentConfig cfg = irsopt::parse_config_file(config_path);
    if (seed_given) cfg.seed = seed_override;
    irsopt::ExperimentOutput result = irsopt::run_experiment(cfg);

    if (out_path.empty()) {
      if (format == "csv")
        irsopt::emit_csv(result.rows, std::cout);
      else
        irsopt::emit_json(result.rows, std::cout);
      if (emit_raw)
        irsopt::emit_raw_csv(cfg.experiment, result.raw, std::cout);
    } else {
      const auto target = resolve_out(out_path);
      std::ofstream os(target);
      if (!os) {
        std::cerr << "error: cannot write " << target << "\n";
        return 1;
      }
      if (format == "csv")
        irsopt::emit_csv(result.rows, os);
      else
        irsopt::emit_json(result.rows, os);
      if (emit_raw) {
        auto raw_target = target;
        raw_target += ".raw.csv";
        std::ofstream raw_os(raw_target);
        if (!raw_os) {
          std::cerr << "error: cannot write " << raw_target << "\n";
          return 1;
        }
        irsopt::emit_raw_csv(cfg.experiment, result.raw, raw_os);
      }
    }
  } catch (const irsopt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
