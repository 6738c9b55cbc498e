#include "pinball/wavefield.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fft.hpp"
#include "pinball/error.hpp"

namespace pinball {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::PacketTooCloseToBoundary: return "packet-too-close-to-boundary";
    case ErrorKind::SigmaUnderResolved: return "sigma-under-resolved";
    case ErrorKind::BarrierOutsideGrid: return "barrier-outside-grid";
    case ErrorKind::LobesNotSeparated: return "lobes-not-separated";
    case ErrorKind::NoSignChange: return "no-sign-change";
    case ErrorKind::NodeRegion: return "node-region";
    case ErrorKind::MultiLobe: return "multi-lobe";
    case ErrorKind::PrematureDetection: return "premature-detection";
    case ErrorKind::ParticleInGap: return "particle-in-gap";
    case ErrorKind::BoundaryLeak: return "boundary-leak";
    case ErrorKind::LengthMismatch: return "length-mismatch";
    case ErrorKind::SequenceTooShort: return "sequence-too-short";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::MissingFile: return "missing-file";
  }
  return "unknown";
}

Grid Grid::line(std::size_t n0, double length0) {
  Grid g;
  g.dims = 1;
  g.n = {n0, 1};
  g.length = {length0, 0.0};
  g.validate();
  return g;
}

Grid Grid::plane(std::size_t n0, std::size_t n1, double length0, double length1) {
  Grid g;
  g.dims = 2;
  g.n = {n0, n1};
  g.length = {length0, length1};
  g.validate();
  return g;
}

void Grid::validate() const {
  if (dims != 1 && dims != 2) throw Error(ErrorKind::InvalidArgument, "grid dims must be 1 or 2");
  for (int a = 0; a < dims; ++a) {
    if (n[a] < 64 || !std::has_single_bit(n[a]))
      throw Error(ErrorKind::InvalidArgument, "grid n must be a power of two >= 64");
    if (!(length[a] > 0.0) || !std::isfinite(length[a]))
      throw Error(ErrorKind::InvalidArgument, "grid length must be positive");
  }
  if (dims == 1 && n[1] != 1) throw Error(ErrorKind::InvalidArgument, "1D grid must have n[1] == 1");
}

void PacketSpec::validate_resolved_momentum(int dims) const {
  double k2 = 0.0;
  for (int a = 0; a < dims; ++a) k2 += momentum[a] * momentum[a];
  if (std::sqrt(k2) * sigma[0] < 5.0)
    throw Error(ErrorKind::InvalidArgument, "packet momentum under-resolved: |k0| sigma < 5");
}

Wavefunction gaussian_packet(const Grid& grid, const PacketSpec& spec) {
  grid.validate();
  for (int a = 0; a < grid.dims; ++a) {
    const double s = spec.sigma[a];
    if (!(s > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be positive");
    if (s < 4.0 * grid.spacing(a)) {
      std::ostringstream os;
      os << "sigma " << s << " < 4 * spacing " << grid.spacing(a) << " on axis " << a;
      throw Error(ErrorKind::SigmaUnderResolved, os.str());
    }
    const double lo = grid.origin(a);
    const double hi = lo + grid.length[a];
    if (spec.center[a] - 5.0 * s < lo || spec.center[a] + 5.0 * s > hi) {
      std::ostringstream os;
      os << "centre " << spec.center[a] << " within 5 sigma of the boundary on axis " << a;
      throw Error(ErrorKind::PacketTooCloseToBoundary, os.str());
    }
  }

  auto axis_factor = [&](int a) {
    std::vector<Complex> f(grid.n[a]);
    const double s = spec.sigma[a];
    for (std::size_t i = 0; i < grid.n[a]; ++i) {
      const double x = grid.coord(a, i);
      const double d = x - spec.center[a];
      f[i] = std::exp(Complex(-d * d / (4.0 * s * s), spec.momentum[a] * x));
    }
    return f;
  };

  Wavefunction psi{grid, ComplexField(grid.size()), 0.0};
  const auto f0 = axis_factor(0);
  if (grid.dims == 1) {
    std::copy(f0.begin(), f0.end(), psi.amp.begin());
  } else {
    const auto f1 = axis_factor(1);
    for (std::size_t i = 0; i < grid.n[0]; ++i)
      for (std::size_t j = 0; j < grid.n[1]; ++j) psi.amp[grid.index(i, j)] = f0[i] * f1[j];
  }
  renormalize(psi);
  return psi;
}

double norm(const Wavefunction& psi) {
  double s = 0.0;
  for (const auto& a : psi.amp) s += std::norm(a);
  return s * psi.grid.cell_volume();
}

void renormalize(Wavefunction& psi) {
  const double s = norm(psi);
  if (!(s > 0.0)) throw Error(ErrorKind::InvalidArgument, "cannot normalise a zero wavefunction");
  const double f = 1.0 / std::sqrt(s);
  for (auto& a : psi.amp) a *= f;
}

std::vector<double> density(const Wavefunction& psi) {
  std::vector<double> rho(psi.amp.size());
  for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = std::norm(psi.amp[i]);
  return rho;
}

std::vector<double> marginal_1d(const Wavefunction& psi, int axis) {
  const Grid& g = psi.grid;
  if (axis < 0 || axis >= g.dims) throw Error(ErrorKind::InvalidArgument, "axis out of range");
  if (g.dims == 1) return density(psi);
  std::vector<double> m(g.n[axis], 0.0);
  const double d_other = g.spacing(1 - axis);
  for (std::size_t i = 0; i < g.n[0]; ++i)
    for (std::size_t j = 0; j < g.n[1]; ++j) {
      const double r = std::norm(psi.amp[g.index(i, j)]);
      m[axis == 0 ? i : j] += r;
    }
  for (auto& v : m) v *= d_other;
  return m;
}

std::vector<double> wave_numbers(const Grid& grid, int axis) {
  const std::size_t n = grid.n[axis];
  const double dk = 2.0 * std::numbers::pi / grid.length[axis];
  std::vector<double> k(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = static_cast<long long>(i);
    k[i] = dk * static_cast<double>(i < n / 2 ? m : m - static_cast<long long>(n));
  }
  return k;
}

Observables observables(const Wavefunction& psi) {
  const Grid& g = psi.grid;
  Observables o;
  o.norm = norm(psi);
  for (int a = 0; a < g.dims; ++a) {
    const auto m = marginal_1d(psi, a);
    const double dx = g.spacing(a);
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double x = g.coord(a, i);
      s0 += m[i];
      s1 += m[i] * x;
      s2 += m[i] * x * x;
    }
    s0 *= dx;
    s1 *= dx;
    s2 *= dx;
    o.mean[a] = s1 / s0;
    o.variance[a] = s2 / s0 - o.mean[a] * o.mean[a];
  }

  ComplexField spec = psi.amp;
  detail::FftPlan plan(g);
  plan.forward(spec.data());
  std::array<std::vector<double>, 2> k{wave_numbers(g, 0),
                                       g.dims == 2 ? wave_numbers(g, 1) : std::vector<double>{0.0}};
  double total = 0.0;
  Vec2 first{0.0, 0.0};
  for (std::size_t i = 0; i < g.n[0]; ++i)
    for (std::size_t j = 0; j < g.n[1]; ++j) {
      const double w = std::norm(spec[g.index(i, j)]);
      total += w;
      first[0] += w * k[0][i];
      if (g.dims == 2) first[1] += w * k[1][j];
    }
  for (int a = 0; a < g.dims; ++a) o.momentum_mean[a] = first[a] / total;
  return o;
}

void apply_boost(Wavefunction& psi, const Vec2& k) {
  const Grid& g = psi.grid;
  for (std::size_t i = 0; i < g.n[0]; ++i) {
    const double x = g.coord(0, i);
    for (std::size_t j = 0; j < g.n[1]; ++j) {
      double phase = k[0] * x;
      if (g.dims == 2) phase += k[1] * g.coord(1, j);
      psi.amp[g.index(i, j)] *= std::polar(1.0, phase);
    }
  }
}

void translate(Wavefunction& psi, double shift) {
  const Grid& g = psi.grid;
  detail::FftPlan plan(g);
  plan.forward(psi.amp.data());
  const auto k = wave_numbers(g, 0);
  const double inv_n = 1.0 / static_cast<double>(g.size());
  for (std::size_t i = 0; i < g.n[0]; ++i) {
    // Drop the Nyquist mode: its shift phase is ambiguous.
    const Complex f = (i == g.n[0] / 2) ? Complex(0.0) : std::polar(inv_n, -k[i] * shift);
    for (std::size_t j = 0; j < g.n[1]; ++j) psi.amp[g.index(i, j)] *= f;
  }
  plan.backward(psi.amp.data());
}

// --- SplitStepper ---------------------------------------------------------

struct SplitStepper::Fft {
  explicit Fft(const Grid& g) : plan(g) {}
  detail::FftPlan plan;
};

SplitStepper::SplitStepper(const Grid& grid, std::vector<double> potential, double dt)
    : grid_(grid), potential_(std::move(potential)), dt_(dt) {
  grid_.validate();
  if (potential_.size() != grid_.size())
    throw Error(ErrorKind::InvalidArgument, "potential size does not match grid");
  for (double v : potential_)
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "potential must be finite");
  if (!std::isfinite(dt_) || dt_ == 0.0) throw Error(ErrorKind::InvalidArgument, "dt must be finite and non-zero");

  fft_ = std::make_unique<Fft>(grid_);
  k_[0] = wave_numbers(grid_, 0);
  k_[1] = grid_.dims == 2 ? wave_numbers(grid_, 1) : std::vector<double>{0.0};

  const std::size_t n = grid_.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  kinetic_half_.resize(n);
  for (std::size_t i = 0; i < grid_.n[0]; ++i)
    for (std::size_t j = 0; j < grid_.n[1]; ++j) {
      const double k2 = k_[0][i] * k_[0][i] + k_[1][j] * k_[1][j];
      // Backward transform normalisation folded into the phase.
      kinetic_half_[grid_.index(i, j)] = std::polar(inv_n, -k2 * dt_ / 4.0);
    }
  potential_phase_.resize(n);
  for (std::size_t i = 0; i < n; ++i) potential_phase_[i] = std::polar(1.0, -potential_[i] * dt_);
  work_.resize(n);
}

SplitStepper::~SplitStepper() = default;
SplitStepper::SplitStepper(SplitStepper&&) noexcept = default;
SplitStepper& SplitStepper::operator=(SplitStepper&&) noexcept = default;

void SplitStepper::step(Wavefunction& psi) {
  Complex* a = psi.amp.data();
  const std::size_t n = psi.amp.size();
  fft_->plan.forward(a);
  for (std::size_t i = 0; i < n; ++i) a[i] *= kinetic_half_[i];
  fft_->plan.backward(a);
  for (std::size_t i = 0; i < n; ++i) a[i] *= potential_phase_[i];
  fft_->plan.forward(a);
  for (std::size_t i = 0; i < n; ++i) a[i] *= kinetic_half_[i];
  std::copy(a, a + n, work_.begin());
  fft_->plan.backward(a);
  psi.time += dt_;
}

void SplitStepper::step(Wavefunction& psi, std::array<ComplexField, 2>& grad) {
  step(psi);
  spectral_gradient(grad);
}

void SplitStepper::gradient(const Wavefunction& psi, std::array<ComplexField, 2>& grad) {
  std::copy(psi.amp.begin(), psi.amp.end(), work_.begin());
  fft_->plan.forward(work_.data());
  const double inv_n = 1.0 / static_cast<double>(grid_.size());
  for (auto& w : work_) w *= inv_n;
  spectral_gradient(grad);
}

// Differentiates the normalised spectrum held in work_.
void SplitStepper::spectral_gradient(std::array<ComplexField, 2>& grad) {
  const std::size_t n = grid_.size();
  for (int a = 0; a < grid_.dims; ++a) {
    auto& out = grad[a];
    out.resize(n);
    const std::size_t nyquist = grid_.n[a] / 2;
    for (std::size_t i = 0; i < grid_.n[0]; ++i)
      for (std::size_t j = 0; j < grid_.n[1]; ++j) {
        const std::size_t idx = grid_.index(i, j);
        const std::size_t m = a == 0 ? i : j;
        const double k = (m == nyquist) ? 0.0 : k_[a][m];
        out[idx] = Complex(0.0, k) * work_[idx];
      }
    fft_->plan.backward(out.data());
  }
  if (grid_.dims == 1) grad[1].clear();
}

Wavefunction split_step(const Wavefunction& psi, std::span<const double> potential, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
  SplitStepper stepper(psi.grid, std::vector<double>(potential.begin(), potential.end()), dt);
  Wavefunction out = psi;
  stepper.step(out);
  return out;
}

std::array<ComplexField, 2> spectral_gradient(const Wavefunction& psi) {
  SplitStepper stepper(psi.grid, std::vector<double>(psi.grid.size(), 0.0), 1.0);
  std::array<ComplexField, 2> grad;
  stepper.gradient(psi, grad);
  return grad;
}

}  // namespace pinball
