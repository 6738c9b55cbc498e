#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "pinball/geometry.hpp"
#include "pinball/wavefield.hpp"

namespace pinball {

/// |psi|^2 below this is treated as a genuine node, not underflow.
inline constexpr double kNodeFloor = 1e-30;

struct BohmParticle {
  Vec2 position{0.0, 0.0};
  double time = 0.0;
};

struct VelocitySample {
  Vec2 v{0.0, 0.0};
  bool capped = false;
};

/// Density and probability current of one field snapshot. The guidance
/// velocity at a point is the ratio of the interpolated current to the
/// interpolated density, v = Im(conj(psi) grad psi) / |psi|^2.
class GuidanceField {
 public:
  GuidanceField() = default;
  GuidanceField(const Wavefunction& psi, const std::array<ComplexField, 2>& grad,
                double v_max = std::numeric_limits<double>::infinity());

  /// Throws NodeRegion where the interpolated density is below kNodeFloor.
  VelocitySample velocity(const Vec2& x) const;
  double density_at(const Vec2& x) const;

  const Grid& grid() const { return grid_; }
  double time() const { return time_; }
  double v_max() const { return v_max_; }

 private:
  struct Stencil {
    std::size_t idx[4];
    double w[4];
    int count;
  };
  Stencil stencil(const Vec2& x) const;

  Grid grid_;
  std::vector<double> rho_;
  std::array<std::vector<double>, 2> current_;
  double v_max_ = std::numeric_limits<double>::infinity();
  double time_ = 0.0;
};

/// Convenience: guidance velocity of psi at x (computes the spectral gradient).
Vec2 velocity(const Wavefunction& psi, const Vec2& x,
              double v_max = std::numeric_limits<double>::infinity());

struct AdvanceResult {
  BohmParticle particle;
  int capped = 0;
};

/// One RK4 step of dx/dt = v(x, t) from fields at t, t + dt/2 and t + dt.
/// Positions wrap on the periodic grid.
AdvanceResult advance(const BohmParticle& particle, const GuidanceField& at_start,
                      const GuidanceField& at_half, const GuidanceField& at_end, double dt);

/// Wraps a coordinate into the periodic domain of the grid.
Vec2 wrap(const Grid& grid, Vec2 x);

/// Cumulative distribution of a 1D density on a grid axis, with the density
/// taken piecewise-linear between nodes.
class MarginalCdf {
 public:
  MarginalCdf(const Grid& grid, int axis, std::vector<double> density);

  double total() const { return cumulative_.back(); }
  /// Mass at coordinates <= x, normalised to [0, 1].
  double cdf(double x) const;
  /// Coordinate with normalised mass u behind it.
  double inverse(double u) const;

 private:
  double origin_;
  double dx_;
  std::vector<double> rho_;
  std::vector<double> cumulative_;
};

/// Positions drawn i.i.d. from |psi|^2: inverse CDF in 1D, marginal then
/// conditional CDF in 2D. Deterministic for a given seed.
std::vector<BohmParticle> sample_ensemble(const Wavefunction& psi, std::size_t count,
                                          std::uint64_t seed);

/// Mass strictly ahead of `position` along `axis` in the propagation
/// direction (+1 or -1), normalised by the total. No lobe check.
double front_quantile(const Wavefunction& psi, const Vec2& position, int axis = 0,
                      int direction = +1);

/// Position whose front quantile is q along axis 0 (1D psi).
double position_at_quantile(const Wavefunction& psi, double q, int direction = +1);

inline constexpr double kSingleLobeFraction = 0.99;

/// Fraction of the total mass carried by the largest lobe of the marginal;
/// lobes are maximal runs where the marginal exceeds 1e-4 of its peak.
double dominant_lobe_fraction(const Wavefunction& psi, int axis = 0);

/// Cells [begin, end) along an axis. Lobes from marginal_lobes tile the axis:
/// each gap between two cores is split at its density minimum.
struct Lobe {
  std::size_t begin = 0;
  std::size_t end = 0;
  double mass = 0.0;
};
std::vector<Lobe> marginal_lobes(const Wavefunction& psi, int axis = 0);

/// Internal coordinate: front quantile of the particle inside a single-lobe
/// packet. q < 1/2 is the front half. Throws MultiLobe when the dominant
/// lobe carries less than 99% of the mass.
double internal_coordinate(const Wavefunction& psi, const BohmParticle& particle, int axis = 0,
                           int direction = +1);

/// Kolmogorov-Smirnov distance between samples and a reference CDF.
double ks_statistic(std::vector<double> samples, const MarginalCdf& reference);

struct ScatterEvent {
  int level = 0;
  double q_before = 0.0;
  Side branch = Side::Transmitted;
  double q_after = 0.0;
  bool tie = false;
};

struct TrajectorySample {
  double t = 0.0;
  Vec2 position{0.0, 0.0};
};

struct Trajectory {
  int id = 0;
  std::vector<TrajectorySample> samples;
  std::vector<ScatterEvent> events;
};

/// Alternates the PDE and the particles in lockstep: two split-operator
/// steps produce fields at t + dt_pde and t + 2 dt_pde, then every particle
/// takes one RK4 step of 2 dt_pde.
class LockstepEvolution {
 public:
  LockstepEvolution(Wavefunction psi, std::vector<double> potential, double dt_pde,
                    double v_max = std::numeric_limits<double>::infinity());

  void step(std::span<BohmParticle> particles);

  const Wavefunction& psi() const { return psi_; }
  Wavefunction& mutable_psi() { return psi_; }
  const GuidanceField& field() const { return current_; }
  /// Call after mutating psi out of band (collapse, translation).
  void refresh();

  double time() const { return psi_.time; }
  std::size_t pde_steps() const { return pde_steps_; }
  std::size_t capped() const { return capped_; }
  double dt_pde() const { return stepper_.dt(); }
  SplitStepper& stepper() { return stepper_; }

 private:
  Wavefunction psi_;
  SplitStepper stepper_;
  double v_max_;
  std::array<ComplexField, 2> grad_;
  GuidanceField current_;
  std::size_t pde_steps_ = 0;
  std::size_t capped_ = 0;
};

void write_trajectories_csv(const std::filesystem::path& path, std::span<const Trajectory> trajectories,
                            int dims);
void write_events_csv(const std::filesystem::path& path, std::span<const Trajectory> trajectories);

}  // namespace pinball
