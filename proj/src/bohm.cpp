#include "pinball/bohm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "pinball/error.hpp"

namespace pinball {

GuidanceField::GuidanceField(const Wavefunction& psi, const std::array<ComplexField, 2>& grad,
                             double v_max)
    : grid_(psi.grid), v_max_(v_max), time_(psi.time) {
  const std::size_t n = psi.amp.size();
  rho_.resize(n);
  for (std::size_t i = 0; i < n; ++i) rho_[i] = std::norm(psi.amp[i]);
  for (int a = 0; a < grid_.dims; ++a) {
    if (grad[a].size() != n) throw Error(ErrorKind::InvalidArgument, "gradient size mismatch");
    current_[a].resize(n);
    for (std::size_t i = 0; i < n; ++i) current_[a][i] = std::imag(std::conj(psi.amp[i]) * grad[a][i]);
  }
}

GuidanceField::Stencil GuidanceField::stencil(const Vec2& x) const {
  Stencil s{};
  std::size_t lo[2] = {0, 0}, hi[2] = {0, 0};
  double t[2] = {0.0, 0.0};
  for (int a = 0; a < grid_.dims; ++a) {
    const double f = (x[a] - grid_.origin(a)) / grid_.spacing(a);
    const double fl = std::floor(f);
    t[a] = f - fl;
    const auto n = static_cast<long long>(grid_.n[a]);
    long long i = static_cast<long long>(fl) % n;
    if (i < 0) i += n;
    lo[a] = static_cast<std::size_t>(i);
    hi[a] = static_cast<std::size_t>((i + 1) % n);
  }
  if (grid_.dims == 1) {
    s.idx[0] = lo[0];
    s.idx[1] = hi[0];
    s.w[0] = 1.0 - t[0];
    s.w[1] = t[0];
    s.count = 2;
  } else {
    s.idx[0] = grid_.index(lo[0], lo[1]);
    s.idx[1] = grid_.index(hi[0], lo[1]);
    s.idx[2] = grid_.index(lo[0], hi[1]);
    s.idx[3] = grid_.index(hi[0], hi[1]);
    s.w[0] = (1.0 - t[0]) * (1.0 - t[1]);
    s.w[1] = t[0] * (1.0 - t[1]);
    s.w[2] = (1.0 - t[0]) * t[1];
    s.w[3] = t[0] * t[1];
    s.count = 4;
  }
  return s;
}

double GuidanceField::density_at(const Vec2& x) const {
  const Stencil s = stencil(x);
  double r = 0.0;
  for (int k = 0; k < s.count; ++k) r += s.w[k] * rho_[s.idx[k]];
  return r;
}

VelocitySample GuidanceField::velocity(const Vec2& x) const {
  const Stencil s = stencil(x);
  double r = 0.0;
  Vec2 j{0.0, 0.0};
  for (int k = 0; k < s.count; ++k) {
    r += s.w[k] * rho_[s.idx[k]];
    for (int a = 0; a < grid_.dims; ++a) j[a] += s.w[k] * current_[a][s.idx[k]];
  }
  if (!(r >= kNodeFloor)) {
    std::ostringstream os;
    os << "|psi|^2 = " << r << " at (" << x[0] << ", " << x[1] << ") t = " << time_;
    throw Error(ErrorKind::NodeRegion, os.str());
  }
  VelocitySample out;
  double speed2 = 0.0;
  for (int a = 0; a < grid_.dims; ++a) {
    out.v[a] = j[a] / r;
    speed2 += out.v[a] * out.v[a];
  }
  const double speed = std::sqrt(speed2);
  if (speed > v_max_) {
    for (int a = 0; a < grid_.dims; ++a) out.v[a] *= v_max_ / speed;
    out.capped = true;
  }
  return out;
}

Vec2 velocity(const Wavefunction& psi, const Vec2& x, double v_max) {
  const auto grad = spectral_gradient(psi);
  return GuidanceField(psi, grad, v_max).velocity(x).v;
}

Vec2 wrap(const Grid& grid, Vec2 x) {
  for (int a = 0; a < grid.dims; ++a) {
    const double lo = grid.origin(a);
    const double len = grid.length[a];
    double r = std::fmod(x[a] - lo, len);
    if (r < 0.0) r += len;
    x[a] = lo + r;
  }
  return x;
}

AdvanceResult advance(const BohmParticle& particle, const GuidanceField& at_start,
                      const GuidanceField& at_half, const GuidanceField& at_end, double dt) {
  const Grid& g = at_start.grid();
  const int d = g.dims;
  AdvanceResult res;
  auto eval = [&](const GuidanceField& f, const Vec2& x) {
    const VelocitySample s = f.velocity(x);
    res.capped += s.capped ? 1 : 0;
    return s.v;
  };
  auto offset = [&](const Vec2& x, const Vec2& v, double h) {
    Vec2 y = x;
    for (int a = 0; a < d; ++a) y[a] += h * v[a];
    return wrap(g, y);
  };

  const Vec2 x0 = particle.position;
  const Vec2 k1 = eval(at_start, x0);
  const Vec2 k2 = eval(at_half, offset(x0, k1, 0.5 * dt));
  const Vec2 k3 = eval(at_half, offset(x0, k2, 0.5 * dt));
  const Vec2 k4 = eval(at_end, offset(x0, k3, dt));
  Vec2 x1 = x0;
  for (int a = 0; a < d; ++a) x1[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
  res.particle.position = wrap(g, x1);
  res.particle.time = particle.time + dt;
  return res;
}

// --- distributions --------------------------------------------------------

MarginalCdf::MarginalCdf(const Grid& grid, int axis, std::vector<double> density)
    : origin_(grid.origin(axis)), dx_(grid.spacing(axis)), rho_(std::move(density)) {
  if (rho_.size() != grid.n[axis]) throw Error(ErrorKind::InvalidArgument, "density size mismatch");
  cumulative_.assign(rho_.size(), 0.0);
  for (std::size_t i = 0; i + 1 < rho_.size(); ++i)
    cumulative_[i + 1] = cumulative_[i] + 0.5 * (rho_[i] + rho_[i + 1]) * dx_;
  if (!(cumulative_.back() > 0.0)) throw Error(ErrorKind::InvalidArgument, "density has no mass");
}

double MarginalCdf::cdf(double x) const {
  const double f = (x - origin_) / dx_;
  if (f <= 0.0) return 0.0;
  const auto last = rho_.size() - 1;
  if (f >= static_cast<double>(last)) return 1.0;
  const auto i = static_cast<std::size_t>(f);
  const double t = (f - static_cast<double>(i)) * dx_;
  const double slope = (rho_[i + 1] - rho_[i]) / dx_;
  const double m = cumulative_[i] + rho_[i] * t + 0.5 * slope * t * t;
  return m / total();
}

double MarginalCdf::inverse(double u) const {
  const double m = std::clamp(u, 0.0, 1.0) * total();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), m);
  if (it == cumulative_.begin()) return origin_;
  if (it == cumulative_.end()) return origin_ + static_cast<double>(rho_.size() - 1) * dx_;
  const auto i = static_cast<std::size_t>(std::distance(cumulative_.begin(), it) - 1);
  const double r = m - cumulative_[i];
  const double a = 0.5 * (rho_[i + 1] - rho_[i]) / dx_;
  const double b = rho_[i];
  const double disc = std::sqrt(std::max(0.0, b * b + 4.0 * a * r));
  const double denom = b + disc;
  const double t = denom > 0.0 ? std::clamp(2.0 * r / denom, 0.0, dx_) : 0.0;
  return origin_ + static_cast<double>(i) * dx_ + t;
}

std::vector<BohmParticle> sample_ensemble(const Wavefunction& psi, std::size_t count,
                                          std::uint64_t seed) {
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "ensemble count must be >= 1");
  const Grid& g = psi.grid;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const MarginalCdf cdf_x(g, 0, marginal_1d(psi, 0));

  std::vector<BohmParticle> out(count);
  for (auto& p : out) {
    p.time = psi.time;
    p.position[0] = cdf_x.inverse(uniform(rng));
    if (g.dims == 2) {
      const double f = (p.position[0] - g.origin(0)) / g.spacing(0);
      const auto i0 = std::min(static_cast<std::size_t>(f), g.n[0] - 2);
      const double t = f - static_cast<double>(i0);
      std::vector<double> column(g.n[1]);
      for (std::size_t j = 0; j < g.n[1]; ++j)
        column[j] = (1.0 - t) * std::norm(psi.amp[g.index(i0, j)]) + t * std::norm(psi.amp[g.index(i0 + 1, j)]);
      const MarginalCdf cdf_y(g, 1, std::move(column));
      p.position[1] = cdf_y.inverse(uniform(rng));
    }
  }
  return out;
}

double front_quantile(const Wavefunction& psi, const Vec2& position, int axis, int direction) {
  const MarginalCdf cdf(psi.grid, axis, marginal_1d(psi, axis));
  const double behind = cdf.cdf(position[axis]);
  return direction > 0 ? 1.0 - behind : behind;
}

double position_at_quantile(const Wavefunction& psi, double q, int direction) {
  const MarginalCdf cdf(psi.grid, 0, marginal_1d(psi, 0));
  return cdf.inverse(direction > 0 ? 1.0 - q : q);
}

namespace {
constexpr double kLobeSupport = 1e-4;
}

double dominant_lobe_fraction(const Wavefunction& psi, int axis) {
  const auto m = marginal_1d(psi, axis);
  const double peak = *std::max_element(m.begin(), m.end());
  const double threshold = kLobeSupport * peak;
  double total = 0.0, best = 0.0, run = 0.0;
  for (double v : m) {
    total += v;
    if (v > threshold) {
      run += v;
      best = std::max(best, run);
    } else {
      run = 0.0;
    }
  }
  return total > 0.0 ? best / total : 0.0;
}

std::vector<Lobe> marginal_lobes(const Wavefunction& psi, int axis) {
  const auto m = marginal_1d(psi, axis);
  const double threshold = kLobeSupport * *std::max_element(m.begin(), m.end());
  std::vector<std::pair<std::size_t, std::size_t>> cores;
  for (std::size_t i = 0; i < m.size();) {
    if (m[i] <= threshold) {
      ++i;
      continue;
    }
    const std::size_t b = i;
    while (i < m.size() && m[i] > threshold) ++i;
    cores.emplace_back(b, i);
  }
  std::vector<Lobe> lobes;
  std::size_t begin = 0;
  for (std::size_t c = 0; c < cores.size(); ++c) {
    std::size_t end = m.size();
    if (c + 1 < cores.size()) {
      const auto lo = m.begin() + static_cast<std::ptrdiff_t>(cores[c].second);
      const auto hi = m.begin() + static_cast<std::ptrdiff_t>(cores[c + 1].first);
      end = static_cast<std::size_t>(std::min_element(lo, hi) - m.begin());
    }
    Lobe lobe{begin, end, 0.0};
    for (std::size_t i = begin; i < end; ++i) lobe.mass += m[i];
    lobe.mass *= psi.grid.spacing(axis);
    lobes.push_back(lobe);
    begin = end;
  }
  return lobes;
}

double internal_coordinate(const Wavefunction& psi, const BohmParticle& particle, int axis,
                           int direction) {
  const double frac = dominant_lobe_fraction(psi, axis);
  if (frac < kSingleLobeFraction) {
    std::ostringstream os;
    os << "dominant lobe carries " << frac << " of the mass";
    throw Error(ErrorKind::MultiLobe, os.str());
  }
  return front_quantile(psi, particle.position, axis, direction);
}

double ks_statistic(std::vector<double> samples, const MarginalCdf& reference) {
  if (samples.empty()) throw Error(ErrorKind::InvalidArgument, "no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = reference.cdf(samples[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  return d;
}

// --- lockstep -------------------------------------------------------------

LockstepEvolution::LockstepEvolution(Wavefunction psi, std::vector<double> potential, double dt_pde,
                                     double v_max)
    : psi_(std::move(psi)), stepper_(psi_.grid, std::move(potential), dt_pde), v_max_(v_max) {
  refresh();
}

void LockstepEvolution::refresh() {
  stepper_.gradient(psi_, grad_);
  current_ = GuidanceField(psi_, grad_, v_max_);
}

void LockstepEvolution::step(std::span<BohmParticle> particles) {
  stepper_.step(psi_, grad_);
  GuidanceField half(psi_, grad_, v_max_);
  stepper_.step(psi_, grad_);
  GuidanceField end(psi_, grad_, v_max_);
  pde_steps_ += 2;
  const double dt = 2.0 * stepper_.dt();
  for (auto& p : particles) {
    const AdvanceResult r = advance(p, current_, half, end, dt);
    p = r.particle;
    capped_ += static_cast<std::size_t>(r.capped);
  }
  current_ = std::move(end);
}

// --- CSV ------------------------------------------------------------------

void write_trajectories_csv(const std::filesystem::path& path, std::span<const Trajectory> trajectories,
                            int dims) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  out << std::setprecision(17) << "t,x,y,trajectory_id\n";
  for (const auto& tr : trajectories)
    for (const auto& s : tr.samples) {
      out << s.t << ',' << s.position[0] << ',';
      if (dims == 2) out << s.position[1];
      out << ',' << tr.id << '\n';
    }
}

void write_events_csv(const std::filesystem::path& path, std::span<const Trajectory> trajectories) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  out << std::setprecision(17) << "trajectory_id,level,q_before,branch,q_after\n";
  for (const auto& tr : trajectories)
    for (const auto& e : tr.events)
      out << tr.id << ',' << e.level << ',' << e.q_before << ','
          << (e.branch == Side::Transmitted ? 'T' : 'R') << ',' << e.q_after << '\n';
}

}  // namespace pinball
