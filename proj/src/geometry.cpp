#include "pinball/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pinball/error.hpp"

namespace pinball {

double Barrier::value(const Vec2& pos, int dims) const {
  const double d0 = pos[0] - center[0];
  double d2 = d0 * d0;
  if (dims == 2) {
    const double excess = std::max(0.0, std::abs(pos[1] - center[1]) - half_length);
    d2 += excess * excess;
  }
  return height * std::exp(-d2 / (2.0 * width * width));
}

bool Region::contains(const Vec2& p, int dims) const {
  for (int a = 0; a < dims; ++a)
    if (p[a] < lo[a] || p[a] >= hi[a]) return false;
  return true;
}

bool Region::overlaps(const Region& other, int dims) const {
  for (int a = 0; a < dims; ++a)
    if (hi[a] <= other.lo[a] || other.hi[a] <= lo[a]) return false;
  return true;
}

double region_mass(const Wavefunction& psi, const Region& region) {
  const Grid& g = psi.grid;
  double s = 0.0;
  for (std::size_t i = 0; i < g.n[0]; ++i) {
    const double x = g.coord(0, i);
    if (x < region.lo[0] || x >= region.hi[0]) continue;
    for (std::size_t j = 0; j < g.n[1]; ++j) {
      if (g.dims == 2) {
        const double y = g.coord(1, j);
        if (y < region.lo[1] || y >= region.hi[1]) continue;
      }
      s += std::norm(psi.amp[g.index(i, j)]);
    }
  }
  return s * g.cell_volume();
}

Vec2 PinballGeometry::node_position(int level, int node) const {
  return {apex[0] + (node - 0.5 * level) * pitch, apex[1] + level * row_spacing};
}

std::vector<Barrier> PinballGeometry::barriers() const {
  std::vector<Barrier> out;
  for (int l = 0; l < levels; ++l)
    for (int j = 0; j <= l; ++j) {
      Barrier b = barrier;
      b.center = node_position(l, j);
      out.push_back(b);
    }
  return out;
}

void PinballGeometry::validate() const {
  if (levels < 0) throw Error(ErrorKind::InvalidArgument, "levels must be >= 0");
  if (!(row_spacing > 0.0) || !(pitch > 0.0))
    throw Error(ErrorKind::InvalidArgument, "row spacing and pitch must be positive");
  if (barrier.height < 0.0) throw Error(ErrorKind::InvalidArgument, "barrier height must be >= 0");
  if (!(barrier.width > 0.0)) throw Error(ErrorKind::InvalidArgument, "barrier width must be positive");
  if (pitch / 2.0 <= 2.0 * barrier.width)
    throw Error(ErrorKind::InvalidArgument, "pitch too small for the detector gap");
}

std::vector<double> build_potential(std::span<const Barrier> barriers, const Grid& grid) {
  std::vector<double> v(grid.size(), 0.0);
  for (const Barrier& b : barriers) {
    if (b.height < 0.0) throw Error(ErrorKind::InvalidArgument, "barrier height must be >= 0");
    for (int a = 0; a < grid.dims; ++a)
      if (b.width < 2.0 * grid.spacing(a))
        throw Error(ErrorKind::InvalidArgument, "barrier width below two grid spacings");
    for (int a = 0; a < grid.dims; ++a) {
      const double reach = 5.0 * b.width + (a == 1 ? b.half_length : 0.0);
      const double lo = grid.origin(a);
      const double hi = lo + grid.length[a];
      if (b.center[a] - reach < lo || b.center[a] + reach > hi) {
        std::ostringstream os;
        os << "barrier at (" << b.center[0] << ", " << b.center[1] << ") lacks a 5w margin on axis " << a;
        throw Error(ErrorKind::BarrierOutsideGrid, os.str());
      }
    }
    for (std::size_t i = 0; i < grid.n[0]; ++i)
      for (std::size_t j = 0; j < grid.n[1]; ++j) {
        const Vec2 p{grid.coord(0, i), grid.dims == 2 ? grid.coord(1, j) : 0.0};
        v[grid.index(i, j)] += b.value(p, grid.dims);
      }
  }
  return v;
}

std::vector<double> build_potential(const PinballGeometry& geom, const Grid& grid) {
  geom.validate();
  const auto bs = geom.barriers();
  return build_potential(bs, grid);
}

Region arm_region_of(const PinballGeometry& geom, int level, int node, Side side) {
  if (level < 0 || level >= geom.levels || node < 0 || node > level)
    throw Error(ErrorKind::InvalidArgument, "arm index out of range");
  const Vec2 c = geom.node_position(level, node);
  const double gap = 2.0 * geom.barrier.width;
  Region r;
  r.lo[1] = c[1];
  r.hi[1] = c[1] + geom.row_spacing;
  if (side == Side::Transmitted) {
    r.lo[0] = c[0] + gap;
    r.hi[0] = c[0] + 0.5 * geom.pitch;
  } else {
    r.lo[0] = c[0] - 0.5 * geom.pitch;
    r.hi[0] = c[0] - gap;
  }
  return r;
}

DetectorLayout detector_layout(const PinballGeometry& geom) {
  DetectorLayout d;
  d.enabled = geom.detectors;
  if (!d.enabled) return d;
  for (int l = 0; l < geom.levels; ++l)
    for (int j = 0; j <= l; ++j)
      for (Side s : {Side::Reflected, Side::Transmitted}) d.arms.push_back(arm_region_of(geom, l, j, s));
  return d;
}

ScatteringResult transmission_coefficient(const Barrier& barrier, const PacketSpec& packet,
                                          const Grid& grid, double dt) {
  if (grid.dims != 1) throw Error(ErrorKind::InvalidArgument, "transmission runs are 1D");
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
  packet.validate_resolved_momentum(1);
  const double sigma = packet.sigma[0];
  const double k0 = packet.momentum[0];
  const double xb = barrier.center[0];
  if (k0 <= 0.0) throw Error(ErrorKind::InvalidArgument, "packet must move towards +x");
  if (xb - packet.center[0] < 8.0 * sigma)
    throw Error(ErrorKind::InvalidArgument, "packet must start at least 8 sigma before the barrier");

  Wavefunction psi = gaussian_packet(grid, packet);
  const Barrier bs[] = {barrier};
  SplitStepper stepper(grid, build_potential(bs, grid), dt);

  const double arrival = (xb - packet.center[0]) / k0;
  const double max_time = 10.0 * arrival + 10.0 * sigma / k0;
  const double dx = grid.spacing(0);
  constexpr std::size_t kCheckEvery = 10;
  constexpr double kLobeFloor = 1e-6;

  ScatteringResult res;
  while (psi.time < max_time) {
    for (std::size_t s = 0; s < kCheckEvery; ++s) stepper.step(psi);
    res.steps += kCheckEvery;
    if (psi.time < arrival) continue;

    double m_left = 0, m_right = 0, x_left = 0, x_right = 0, window = 0;
    for (std::size_t i = 0; i < grid.n[0]; ++i) {
      const double x = grid.coord(0, i);
      const double r = std::norm(psi.amp[i]) * dx;
      if (std::abs(x - xb) < 3.0 * sigma) window += r;
      if (x < xb) {
        m_left += r;
        x_left += r * x;
      } else if (x > xb) {
        m_right += r;
        x_right += r * x;
      }
    }
    bool separated = window < kLobeFloor;
    if (m_left > kLobeFloor) separated = separated && (xb - x_left / m_left) >= 3.0 * sigma;
    if (m_right > kLobeFloor) separated = separated && (x_right / m_right - xb) >= 3.0 * sigma;
    if (separated) {
      res.transmitted = m_right;
      res.reflected = m_left;
      res.time = psi.time;
      return res;
    }
  }
  std::ostringstream os;
  os << "no separation by t = " << max_time << " (h = " << barrier.height << ")";
  throw Error(ErrorKind::LobesNotSeparated, os.str());
}

CalibrationReport calibrate_half_transmission(double width, const PacketSpec& packet,
                                              const Grid& grid, double tol,
                                              const CalibrationOptions& options) {
  if (!(tol >= 1e-3)) throw Error(ErrorKind::InvalidArgument, "calibration tolerance must be >= 1e-3");
  const double k0 = packet.momentum[0];
  const double hi_default = 50.0 * k0 * k0 / 2.0;
  double lo = options.bracket_lo;
  double hi = options.bracket_hi > 0.0 ? options.bracket_hi : hi_default;

  CalibrationReport rep;
  rep.target = options.target;
  rep.tol = tol;

  auto run = [&](double h) {
    Barrier b{{0.0, 0.0}, h, width, 0.0};
    const ScatteringResult r = transmission_coefficient(b, packet, grid, options.dt);
    rep.samples.push_back({h, r.transmitted});
    return r;
  };

  const double t_lo = run(lo).transmitted;
  const double t_hi = run(hi).transmitted;
  if (!(t_lo >= options.target && t_hi <= options.target)) {
    std::ostringstream os;
    os << "T(" << lo << ") = " << t_lo << ", T(" << hi << ") = " << t_hi
       << " do not bracket " << options.target;
    throw Error(ErrorKind::NoSignChange, os.str());
  }

  for (int it = 1; it <= options.max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const ScatteringResult r = run(mid);
    rep.iterations = it;
    if (r.transmitted >= options.target && r.transmitted - options.target <= tol) {
      rep.height = mid;
      rep.transmission = r.transmitted;
      rep.reflection = r.reflected;
      return rep;
    }
    (r.transmitted > options.target ? lo : hi) = mid;
  }
  throw Error(ErrorKind::NoSignChange, "bisection did not reach the tolerance");
}

void write_calibration_csv(const std::filesystem::path& path, const CalibrationReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  out << std::setprecision(17);
  out << "kind,height,transmission\n";
  for (const auto& s : report.samples) out << "sample," << s.height << ',' << s.transmission << '\n';
  out << "chosen," << report.height << ',' << report.transmission << '\n';
}

double read_calibrated_height(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "calibration file " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("chosen,", 0) == 0) {
      std::istringstream is(line.substr(7));
      double h = 0.0;
      is >> h;
      if (is) return h;
    }
  }
  throw Error(ErrorKind::Io, "no chosen height in " + path.string());
}

}  // namespace pinball
