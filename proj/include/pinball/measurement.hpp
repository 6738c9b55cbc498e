#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pinball/bohm.hpp"
#include "pinball/geometry.hpp"
#include "pinball/wavefield.hpp"

namespace pinball {

/// One bit per completed scattering: '1' transmitted, '0' reflected.
struct DetectorRecord {
  std::string bits;

  std::size_t size() const { return bits.size(); }
  DetectorRecord extended(int bit) const { return {bits + (bit ? '1' : '0')}; }
  bool operator==(const DetectorRecord&) const = default;
};

/// A decohered history: effective wavefunction, the pointer record that
/// labels it, and the probability of that record.
struct Branch {
  Wavefunction psi;
  DetectorRecord record;
  double weight = 1.0;
};

struct SeparationMasses {
  double reflected = 0.0;
  double transmitted = 0.0;
  double residual = 0.0;

  bool separated(double eps_sep) const { return residual < eps_sep; }
};

SeparationMasses separation_overlap(const Wavefunction& psi, const Region& region_r,
                                    const Region& region_t);

struct Collapse {
  Branch branch;
  int bit = 0;
  double discarded_mass = 0.0;
};

/// Masks psi to the region holding the particle and renormalises. Throws
/// PrematureDetection if the lobes still overlap and ParticleInGap if the
/// particle lies in neither region.
Collapse detect_and_collapse(const Branch& branch, const BohmParticle& particle, const Region& region_r,
                             const Region& region_t, double eps_sep = 1e-4);

/// Iterated 1D measured pinball: one barrier at the origin, re-used at every
/// level after the effective wavefunction is moved back to the launch point.
struct MeasuredConfig {
  Grid grid = Grid::line(2048, 128.0);
  PacketSpec packet{{-8.0, 0.0}, {10.0, 0.0}, {1.0, 1.0}};
  Barrier barrier{{0.0, 0.0}, 0.0, 0.25, 0.0};
  int levels = 4;
  double dt = 1e-3;
  double eps_sep = 1e-4;
  double launch_sigmas = 8.0;
  double lattice_pitch = 8.0;
  int output_every = 10;
  /// <= 0 selects 10 |k0|.
  double v_max = 0.0;
  /// In a batch, stop following a particle once no other particle shares its
  /// branch. Its record then ends at the level where it split off.
  bool stop_when_alone = false;
};

struct MeasuredRun {
  double q0 = 0.0;  // re-extracted from the placed particle
  Trajectory trajectory;
  DetectorRecord record;
  double weight = 1.0;
  std::vector<double> q;  // pre-scatter internal coordinate per level
  int final_node = 0;
  std::size_t capped = 0;
  double max_norm_drift = 0.0;
  double discarded_mass = 0.0;
  int ties = 0;
  /// Times the branch was cut down to the lobe holding the particle.
  int windowings = 0;
};

MeasuredRun run_measured_pinball(const MeasuredConfig& config, double q0);

/// Same results as calling run_measured_pinball per q0, but particles that
/// share a detector record share the field evolution.
std::vector<MeasuredRun> run_measured_batch(const MeasuredConfig& config, std::span<const double> q0s);

struct UnitaryConfig {
  Grid grid = Grid::plane(1024, 512, 64.0, 64.0);
  PacketSpec packet{{-6.0, -10.0}, {10.0, 10.0}, {1.0, 1.0}};
  PinballGeometry geometry;
  double dt = 1e-3;
  double duration = 2.0;
  double leak_tol = 1e-6;
  int output_every = 10;
  double v_max = 0.0;
};

struct UnitaryRun {
  std::vector<Trajectory> trajectories;
  std::vector<double> sample_times;
  /// quantiles[s][p]: front quantile of particle p along axis 0 at sample s.
  std::vector<std::vector<double>> quantiles;
  Wavefunction final_psi;
  double max_norm_drift = 0.0;
  double max_boundary_leak = 0.0;
  std::size_t capped = 0;
};

/// Mass within `cells` grid cells of any boundary.
double boundary_mass(const Wavefunction& psi, std::size_t cells = 5);

/// Full 2D unitary evolution through the lattice with Bohm trajectories and
/// no detection. Throws BoundaryLeak when boundary mass exceeds leak_tol.
UnitaryRun run_unitary_pinball(const UnitaryConfig& config, std::span<const Vec2> positions);

}  // namespace pinball
