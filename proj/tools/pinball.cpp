#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "pinball/config.hpp"
#include "pinball/error.hpp"
#include "pinball/scenario.hpp"
#include "pinball/verify.hpp"

namespace fs = std::filesystem;
using namespace pinball;

namespace {

int exit_for(const Error& e) { return e.kind() == ErrorKind::Config ? kExitConfig : kExitAbort; }

// Refuses to reuse a non-empty directory unless overwrite is set, in which
// case only the files a run writes are replaced.
void prepare_out(const fs::path& out, bool overwrite) {
  if (fs::exists(out) && !fs::is_directory(out))
    throw Error(ErrorKind::Config, out.string() + " exists and is not a directory");
  if (fs::exists(out) && !fs::is_empty(out) && !overwrite)
    throw Error(ErrorKind::Config, out.string() + " is not empty; pass --overwrite to replace its outputs");
  fs::create_directories(out);
  fs::remove(out / "manifest.json");
}

int run(const fs::path& config_path, fs::path out, bool overwrite, bool calibrate_only) {
  ScenarioConfig cfg = load_config(config_path);
  if (calibrate_only) cfg.kind = ScenarioKind::Calibrate;
  if (out.empty()) out = fs::path("out") / (config_path.stem().string() + (calibrate_only ? "_calibration" : ""));
  prepare_out(out, overwrite);
  const RunManifest m = run_scenario(cfg, out);
  std::cout << m.scenario << ": " << m.status << " (" << m.wall_time << " s) -> " << out.string() << '\n';
  for (const auto& [key, value] : m.metrics.items())
    if (!value.is_array()) std::cout << "  " << key << " = " << value.dump() << '\n';
  for (const Assertion& a : m.assertions)
    std::cout << "  " << (a.passed ? "ok   " : "FAIL ") << a.name << ": " << a.value << ' ' << a.relation << ' '
              << a.limit << '\n';
  if (!m.error.empty()) std::cerr << "error: " << m.error << '\n';
  return m.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum pinball: Bohm trajectories through a lattice of beam-splitting barriers"};
  app.set_version_flag("--version", std::string("pinball ") + PINBALL_VERSION);
  app.require_subcommand(1);

  fs::path config, out, golden;
  bool overwrite = false;

  auto* run_cmd = app.add_subcommand("run", "Run the scenario described by a config file");
  run_cmd->add_option("config", config, "Scenario config")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", out, "Output directory (default out/<config stem>)");
  run_cmd->add_flag("--overwrite", overwrite, "Replace outputs in a non-empty directory");

  auto* cal_cmd = app.add_subcommand("calibrate", "Calibrate the barrier height for a config's packet");
  cal_cmd->add_option("config", config, "Scenario config")->required()->check(CLI::ExistingFile);
  cal_cmd->add_option("--out", out, "Output directory (default out/<config stem>_calibration)");
  cal_cmd->add_flag("--overwrite", overwrite, "Replace outputs in a non-empty directory");

  auto* ver_cmd = app.add_subcommand("verify", "Compare an output directory against golden data");
  ver_cmd->add_option("out", out, "Output directory")->required();
  ver_cmd->add_option("golden", golden, "Golden directory with tolerances.cfg")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return run(config, out, overwrite, false);
    if (*cal_cmd) return run(config, out, overwrite, true);
    const VerifyReport rep = verify_golden(out, golden);
    std::cout << rep.summary();
    return rep.passed() ? kExitOk : kExitAssertion;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAbort;
  }
}
