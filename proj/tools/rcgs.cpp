// rcgs: command-line front end for the reservoir GS library.
//
//   rcgs simulate   --config run.json [--out DIR] [--seed U64] [--tol REAL] [--quiet]
//   rcgs isometrize --config run.json ...
//   rcgs sweep      --config sweep.json ...
//   rcgs verify     RECORD.json [--tol REAL] [--quiet]

#include "rcgs/harness/commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

using rcgs::harness::json;

void write_error(const std::optional<std::filesystem::path>& dir, const rcgs::Error& e) {
  const json j = {{"error", std::string(rcgs::to_string(e.kind()))},
                  {"exit_code", rcgs::exit_code(e.kind())},
                  {"message", e.what()}};
  std::cerr << j.dump() << "\n";
  if (!dir) return;
  try {
    rcgs::io::write_json(*dir / "error.json", j);
  } catch (const std::exception&) {
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reservoir generalized synchronization: simulate, isometrize, sweep, verify"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  double tol = 0.0;
  bool quiet = false;
  std::string record_path;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "experiment configuration (JSON)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    sub->add_option("--seed", seed, "seed (overrides config)");
    sub->add_option("--tol", tol, "primary tolerance (overrides config)");
    sub->add_flag("--quiet", quiet, "suppress the summary on stdout");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "drive the coupled system and estimate the GS");
  CLI::App* isometrize = app.add_subcommand("isometrize", "construct the isometric conjugate of a linear reservoir");
  CLI::App* sweep = app.add_subcommand("sweep", "Monte-Carlo genericity sweep over random reservoirs");
  CLI::App* verify = app.add_subcommand("verify", "re-check a stored record");
  add_common(simulate, true);
  add_common(isometrize, true);
  add_common(sweep, true);
  verify->add_option("record", record_path, "record.json to verify")->required();
  verify->add_option("--tol", tol, "override the stored isometry tolerance");
  verify->add_flag("--quiet", quiet, "suppress the report on stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rcgs::exit_code(rcgs::ErrorKind::ConfigError);
  }

  std::optional<std::filesystem::path> error_dir;
  try {
    rcgs::harness::Outcome outcome;
    if (verify->parsed()) {
      std::optional<double> tol_override;
      if (verify->count("--tol")) tol_override = tol;
      outcome = rcgs::harness::cmd_verify(record_path, tol_override);
    } else {
      CLI::App* sub = simulate->parsed() ? simulate : isometrize->parsed() ? isometrize : sweep;
      const char* name = simulate->parsed() ? "simulate" : isometrize->parsed() ? "isometrize" : "sweep";
      rcgs::harness::Overrides overrides;
      if (sub->count("--seed")) overrides.seed = seed;
      if (sub->count("--tol")) overrides.tolerance = tol;
      if (sub->count("--out")) overrides.output_dir = out_dir;
      if (overrides.output_dir) error_dir = overrides.output_dir;
      rcgs::harness::ExperimentConfig cfg = rcgs::harness::load_config(config_path);
      rcgs::harness::apply_overrides(cfg, overrides, name);
      error_dir = cfg.output_dir;
      if (simulate->parsed())
        outcome = rcgs::harness::cmd_simulate(cfg);
      else if (isometrize->parsed())
        outcome = rcgs::harness::cmd_isometrize(cfg);
      else
        outcome = rcgs::harness::cmd_sweep(cfg);
    }
    if (!quiet) std::cout << outcome.summary << "\n";
    return outcome.exit_code;
  } catch (const rcgs::Error& e) {
    write_error(error_dir, e);
    return rcgs::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
