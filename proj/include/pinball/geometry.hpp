#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "pinball/wavefield.hpp"

namespace pinball {

/// Gaussian bump h exp(-d^2 / 2w^2). In 1D, d is the offset from the centre
/// point; in 2D the barrier is a segment parallel to axis 1 of half-length
/// `half_length` and d is the distance to that segment.
struct Barrier {
  Vec2 center{0.0, 0.0};
  double height = 0.0;
  double width = 0.25;
  double half_length = 0.0;

  double value(const Vec2& pos, int dims) const;
};

/// Axis-aligned half-open box [lo, hi). Unused axes are ignored in 1D.
struct Region {
  Vec2 lo{0.0, 0.0};
  Vec2 hi{0.0, 0.0};

  bool contains(const Vec2& p, int dims) const;
  bool overlaps(const Region& other, int dims) const;
};

double region_mass(const Wavefunction& psi, const Region& region);

enum class Side { Reflected = 0, Transmitted = 1 };

/// Triangular barrier lattice. Row l holds l+1 barriers at
/// y = apex.y + l * row_spacing, x = apex.x + (node - l/2) * pitch.
/// The incident packet arrives from -x, so "transmitted" arms lie on the
/// +x side of a node and "reflected" arms on the -x side.
struct PinballGeometry {
  int levels = 3;
  double row_spacing = 4.0;
  double pitch = 8.0;
  Vec2 apex{0.0, -4.0};
  Barrier barrier{{0.0, 0.0}, 0.0, 0.25, 2.5};
  bool detectors = false;

  Vec2 node_position(int level, int node) const;
  std::vector<Barrier> barriers() const;
  void validate() const;
};

struct DetectorLayout {
  bool enabled = false;
  std::vector<Region> arms;  // ordered by (level, node, side)
};

std::vector<double> build_potential(std::span<const Barrier> barriers, const Grid& grid);
std::vector<double> build_potential(const PinballGeometry& geom, const Grid& grid);

Region arm_region_of(const PinballGeometry& geom, int level, int node, Side side);
DetectorLayout detector_layout(const PinballGeometry& geom);

struct ScatteringResult {
  double transmitted = 0.0;
  double reflected = 0.0;
  double time = 0.0;
  std::size_t steps = 0;
};

/// 1D single-barrier scattering: evolves until the reflected and transmitted
/// lobes are 6 sigma apart and returns the mass on each side of the barrier
/// centre. The packet must start at least 8 sigma before the barrier.
ScatteringResult transmission_coefficient(const Barrier& barrier, const PacketSpec& packet,
                                          const Grid& grid, double dt = 1e-3);

struct CalibrationSample {
  double height = 0.0;
  double transmission = 0.0;
};

struct CalibrationOptions {
  double target = 0.5;
  double dt = 1e-3;
  double bracket_lo = 0.0;
  double bracket_hi = -1.0;  // <= 0 selects 50 * k0^2 / 2
  int max_iterations = 60;
};

struct CalibrationReport {
  double height = 0.0;
  double transmission = 0.0;
  double reflection = 0.0;
  double target = 0.5;
  double tol = 0.0;
  int iterations = 0;
  std::vector<CalibrationSample> samples;
};

/// Bisection on the barrier height until |T - target| <= tol. The returned
/// height always lies on the T >= target side so that a particle sitting
/// exactly on the split is transmitted.
CalibrationReport calibrate_half_transmission(double width, const PacketSpec& packet,
                                              const Grid& grid, double tol,
                                              const CalibrationOptions& options = {});

void write_calibration_csv(const std::filesystem::path& path, const CalibrationReport& report);

/// Reads the chosen height back from a calibration CSV.
double read_calibrated_height(const std::filesystem::path& path);

}  // namespace pinball
