#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pinball/geometry.hpp"
#include "pinball/wavefield.hpp"

namespace pinball {

enum class ScenarioKind { Calibrate, SingleBarrier, PinballUnitary, PinballMeasured, EnsembleStats };

const char* to_string(ScenarioKind kind);

/// Flat `key = value` scenario description. Lists are comma separated.
/// Every key has a default except `scenario`; serialize() writes them all.
struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::Calibrate;
  std::uint64_t seed = 1;
  double dt = 1e-3;
  int output_every = 10;

  std::vector<std::size_t> grid_n;  // empty: per-kind default
  std::vector<double> grid_length;
  std::vector<double> packet_center;
  std::vector<double> packet_momentum;
  std::vector<double> packet_sigma;

  double barrier_width = 0.25;
  std::optional<double> barrier_height;  // nullopt: calibrate (or read calibration.file)
  double barrier_half_length = 2.5;

  std::string calibration_file;  // relative to the config file
  double calibration_tol = 1e-3;
  double calibration_target = 0.5;

  int geometry_levels = 3;
  double geometry_row_spacing = 4.0;
  double geometry_pitch = 8.0;
  std::vector<double> geometry_apex{0.0, -4.0};

  double duration = 0.0;  // 0: per-kind default
  double leak_tol = 1e-6;

  std::size_t particles_count = 200;
  std::vector<double> particles_q0;
  int particles_pairs = 0;
  double particles_pair_offset = 0.01;  // in units of sigma along axis 0

  int measured_levels = 4;
  double measured_eps_sep = 1e-4;
  double measured_launch_sigmas = 8.0;

  int stats_pairs = 50;
  int stats_delta_exp = 10;
  std::size_t stats_ensemble = 10000;

  double check_norm_drift = 1e-10;
  double check_front_band = 0.02;
  double check_oracle_deviation = 0.02;
  int check_oracle_levels = 0;
  double check_max_separation_ratio = 0.0;  // 0: not asserted
  double check_min_diverged_fraction = 0.0;
  double check_ks_alpha = 0.01;
  double check_median_lo = 9.0;
  double check_median_hi = 12.0;
  double check_lyapunov_tol = 0.1;

  /// Directory of the config file, for resolving relative paths.
  std::filesystem::path base_dir;

  bool operator==(const ScenarioConfig&) const = default;

  int dims() const { return kind == ScenarioKind::PinballUnitary ? 2 : 1; }
  Grid grid() const;
  PacketSpec packet() const;
  PinballGeometry geometry(double height) const;
};

/// Parses and validates. Collects every problem and throws one Config error
/// listing them all, one per line.
ScenarioConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ScenarioConfig load_config(const std::filesystem::path& path);

/// Canonical text with every key, defaults filled. parse_config reads it back
/// to an equal config.
std::string serialize(const ScenarioConfig& config);

}  // namespace pinball
