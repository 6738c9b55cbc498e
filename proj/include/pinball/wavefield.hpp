#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <new>
#include <span>
#include <vector>

namespace pinball {

using Complex = std::complex<double>;
using Vec2 = std::array<double, 2>;

/// Allocator that hands FFTW 64-byte aligned storage.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t count) {
    return static_cast<T*>(::operator new(count * sizeof(T), alignment));
  }
  void deallocate(T* ptr, std::size_t) noexcept { ::operator delete(ptr, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using ComplexField = std::vector<Complex, AlignedAllocator<Complex>>;

/// Uniform periodic grid centred on the origin. Axis 0 is the coordinate
/// perpendicular to the barriers; in 2D, storage is row-major with axis 1
/// varying fastest. Units: hbar = 1, m = 1.
struct Grid {
  int dims = 1;
  std::array<std::size_t, 2> n{64, 1};
  std::array<double, 2> length{1.0, 0.0};

  static Grid line(std::size_t n0, double length0);
  static Grid plane(std::size_t n0, std::size_t n1, double length0, double length1);

  double spacing(int axis) const { return length[axis] / static_cast<double>(n[axis]); }
  double origin(int axis) const { return -0.5 * length[axis]; }
  double coord(int axis, std::size_t i) const {
    return origin(axis) + static_cast<double>(i) * spacing(axis);
  }
  std::size_t size() const { return n[0] * n[1]; }
  double cell_volume() const { return dims == 1 ? spacing(0) : spacing(0) * spacing(1); }
  std::size_t index(std::size_t i0, std::size_t i1) const { return i0 * n[1] + i1; }

  /// Throws InvalidArgument unless every per-axis n is a power of two >= 64.
  void validate() const;

  bool operator==(const Grid&) const = default;
};

struct Wavefunction {
  Grid grid;
  ComplexField amp;
  double time = 0.0;
};

/// Gaussian packet exp(-(x-c)^2/4 sigma^2 + i k.x); unused axes are ignored in 1D.
struct PacketSpec {
  Vec2 center{0.0, 0.0};
  Vec2 momentum{10.0, 0.0};
  Vec2 sigma{1.0, 1.0};

  /// |k| sigma >= 5 along the propagation axis; required by scattering runs.
  void validate_resolved_momentum(int dims) const;
};

struct Observables {
  double norm = 0.0;
  Vec2 mean{0.0, 0.0};
  Vec2 variance{0.0, 0.0};
  Vec2 momentum_mean{0.0, 0.0};
};

Wavefunction gaussian_packet(const Grid& grid, const PacketSpec& spec);

double norm(const Wavefunction& psi);
std::vector<double> density(const Wavefunction& psi);
Observables observables(const Wavefunction& psi);

/// |psi|^2 integrated over the other axis (2D) or the density itself (1D).
std::vector<double> marginal_1d(const Wavefunction& psi, int axis);

/// FFT-ordered angular wave numbers along one axis.
std::vector<double> wave_numbers(const Grid& grid, int axis);

/// Multiplies by exp(i k.x); a Galilean boost by k.
void apply_boost(Wavefunction& psi, const Vec2& k);

/// Exact band-limited translation by `shift` along axis 0.
void translate(Wavefunction& psi, double shift);

void renormalize(Wavefunction& psi);

/// Strang split-operator propagator for a fixed potential and time step.
/// Holds FFT plans and precomputed phases; reuse it across steps.
class SplitStepper {
 public:
  SplitStepper(const Grid& grid, std::vector<double> potential, double dt);
  ~SplitStepper();
  SplitStepper(SplitStepper&&) noexcept;
  SplitStepper& operator=(SplitStepper&&) noexcept;

  void step(Wavefunction& psi);

  /// Steps and also returns the spectral gradient of the new state.
  /// `grad` holds one field per grid dimension.
  void step(Wavefunction& psi, std::array<ComplexField, 2>& grad);

  void gradient(const Wavefunction& psi, std::array<ComplexField, 2>& grad);

  double dt() const { return dt_; }
  const Grid& grid() const { return grid_; }
  const std::vector<double>& potential() const { return potential_; }

 private:
  struct Fft;
  void spectral_gradient(std::array<ComplexField, 2>& grad);

  Grid grid_;
  std::vector<double> potential_;
  double dt_;
  std::unique_ptr<Fft> fft_;
  ComplexField kinetic_half_;
  ComplexField potential_phase_;
  ComplexField work_;
  std::array<std::vector<double>, 2> k_;
};

/// One Strang step. Builds a fresh propagator, so loops should hold a SplitStepper.
Wavefunction split_step(const Wavefunction& psi, std::span<const double> potential, double dt);

/// Spectral gradient of psi without stepping.
std::array<ComplexField, 2> spectral_gradient(const Wavefunction& psi);

// Snapshot export. Binary layout: 64-byte little-endian header
// ("BPWF", u32 dims, u64 n0, u64 n1, f64 length0, f64 length1, f64 time,
// 16 zero bytes) followed by interleaved re/im float64, row-major.
void write_binary(const std::filesystem::path& path, const Wavefunction& psi);
Wavefunction read_binary(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const Wavefunction& psi);

}  // namespace pinball
