#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pinball/config.hpp"

namespace pinball {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitAssertion = 3, kExitAbort = 4 };

struct Assertion {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  std::string relation;  // "<=", ">=", "=="
  bool passed = false;
};

struct OutputFile {
  std::string name;
  std::string sha256;
};

struct RunManifest {
  std::string scenario;
  std::string config_hash;
  std::string version;
  double wall_time = 0.0;
  std::vector<OutputFile> outputs;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  std::vector<Assertion> assertions;
  std::string status = "running";
  std::string error;
  int exit_code = kExitOk;
};

std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const RunManifest& manifest);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

/// Worker cap from PINBALL_THREADS, else the hardware concurrency.
int worker_threads();

/// Runs one scenario into out_dir (which must exist), writes every output and
/// then manifest.json. Module errors are caught and reported through the
/// manifest with a non-zero exit code; nothing is thrown except for I/O
/// failures on the manifest itself.
RunManifest run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir);

struct CalibrationOutcome {
  double height = 0.0;
  double transmission = 0.0;
  double reflection = 0.0;
  int iterations = 0;
  std::string source;  // "config", "file" or "calibrated"
};

/// Barrier height for a config: explicit value, calibration file, or a fresh
/// 1D calibration along axis 0 (written to out_dir/calibration.csv when
/// out_dir is non-empty).
CalibrationOutcome resolve_barrier_height(const ScenarioConfig& config, const std::filesystem::path& out_dir = {});

}  // namespace pinball
