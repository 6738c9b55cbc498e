#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "pinball/error.hpp"
#include "pinball/geometry.hpp"
#include "pinball/wavefield.hpp"

using namespace pinball;
using std::numbers::pi;

namespace {

// Mean wave number from an O(n^2) DFT, independent of the FFT code path.
double dft_momentum_mean(const Wavefunction& psi) {
  const Grid& g = psi.grid;
  const std::size_t n = g.n[0];
  double num = 0.0, den = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    const double k = 2.0 * pi * (m < n / 2 ? double(m) : double(m) - double(n)) / g.length[0];
    std::complex<double> c = 0.0;
    for (std::size_t j = 0; j < n; ++j) c += psi.amp[j] * std::polar(1.0, -k * g.coord(0, j));
    num += k * std::norm(c);
    den += std::norm(c);
  }
  return num / den;
}

double width(const Wavefunction& psi) { return std::sqrt(observables(psi).variance[0]); }

}  // namespace

TEST_CASE("gaussian packet is normalised and centred") {
  const Grid g = Grid::line(1024, 64.0);
  for (double c : {-8.0, 0.0, 5.5})
    for (double s : {0.5, 1.0, 2.0}) {
      const Wavefunction psi = gaussian_packet(g, {{c, 0.0}, {10.0, 0.0}, {s, 1.0}});
      CHECK(std::abs(norm(psi) - 1.0) < 1e-12);
      CHECK(std::abs(observables(psi).mean[0] - c) < 1e-8);
    }
  const Wavefunction psi = gaussian_packet(g, {{0.0, 0.0}, {10.0, 0.0}, {1.0, 1.0}});
  CHECK(std::abs(observables(psi).mean[0]) < 1e-8);
  CHECK(std::abs(observables(psi).variance[0] - 1.0) < 0.01);
}

TEST_CASE("momentum mean matches a direct transform") {
  const Grid g = Grid::line(1024, 64.0);
  const Wavefunction psi = gaussian_packet(g, {{0.0, 0.0}, {10.0, 0.0}, {1.0, 1.0}});
  CHECK(std::abs(observables(psi).momentum_mean[0] - 10.0) < 1e-6);
  CHECK(std::abs(dft_momentum_mean(psi) - 10.0) < 1e-6);
  const Wavefunction rest = gaussian_packet(g, {{3.0, 0.0}, {0.0, 0.0}, {1.0, 1.0}});
  CHECK(std::abs(observables(rest).momentum_mean[0]) < 1e-8);
}

TEST_CASE("packet preconditions") {
  const Grid g = Grid::line(1024, 64.0);
  CHECK_THROWS_AS(gaussian_packet(g, {{30.0, 0.0}, {10.0, 0.0}, {1.0, 1.0}}), Error);
  CHECK_THROWS_AS(gaussian_packet(g, {{0.0, 0.0}, {10.0, 0.0}, {0.1, 1.0}}), Error);
  CHECK_THROWS_AS(Grid::line(100, 64.0), Error);
  const PacketSpec slow{{0.0, 0.0}, {2.0, 0.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(slow.validate_resolved_momentum(1), Error);
}

TEST_CASE("a single spectral mode only picks up the kinetic phase") {
  const Grid g = Grid::line(256, 32.0);
  const int m = 7;
  const double k = 2.0 * pi * m / g.length[0];
  Wavefunction psi{g, ComplexField(g.size()), 0.0};
  for (std::size_t j = 0; j < g.n[0]; ++j) psi.amp[j] = std::polar(1.0 / std::sqrt(g.length[0]), k * g.coord(0, j));
  const Wavefunction start = psi;
  const double dt = 0.013;
  const std::vector<double> v(g.size(), 0.0);
  const Wavefunction next = split_step(psi, v, dt);
  const std::complex<double> phase = std::polar(1.0, -0.5 * k * k * dt);
  double err = 0.0;
  for (std::size_t j = 0; j < g.n[0]; ++j) err = std::max(err, std::abs(next.amp[j] - phase * start.amp[j]));
  CHECK(err < 1e-12);
}

TEST_CASE("free gaussian spreads as sigma sqrt(1 + t^2 / 4 sigma^4)") {
  const Grid g = Grid::line(2048, 128.0);
  Wavefunction psi = gaussian_packet(g, {{-20.0, 0.0}, {10.0, 0.0}, {1.0, 1.0}});
  SplitStepper st(g, std::vector<double>(g.size(), 0.0), 1e-3);
  for (int s = 1; s <= 4000; ++s) {
    st.step(psi);
    if (s % 1000 == 0) {
      const double t = psi.time;
      const double expected = std::sqrt(1.0 + t * t / 4.0);
      CHECK(std::abs(width(psi) / expected - 1.0) < 0.005);
    }
  }
}

TEST_CASE("split step is unitary for an arbitrary potential") {
  const Grid g = Grid::line(512, 32.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::vector<double> v(g.size());
  for (auto& x : v) x = u(rng);
  Wavefunction psi = gaussian_packet(g, {{0.0, 0.0}, {5.0, 0.0}, {1.0, 1.0}});
  for (int i = 0; i < 5; ++i) {
    psi = split_step(psi, v, 1e-3);
    CHECK(std::abs(norm(psi) - 1.0) < 1e-12);
  }
}

TEST_CASE("2D free evolution factorises into 1D evolutions") {
  const Grid g2 = Grid::plane(256, 128, 32.0, 16.0);
  const Grid gx = Grid::line(256, 32.0), gy = Grid::line(128, 16.0);
  const PacketSpec p{{-3.0, 1.0}, {6.0, -4.0}, {1.0, 0.8}};
  Wavefunction psi = gaussian_packet(g2, p);
  Wavefunction fx = gaussian_packet(gx, {{p.center[0], 0.0}, {p.momentum[0], 0.0}, {p.sigma[0], 1.0}});
  Wavefunction fy = gaussian_packet(gy, {{p.center[1], 0.0}, {p.momentum[1], 0.0}, {p.sigma[1], 1.0}});
  SplitStepper s2(g2, std::vector<double>(g2.size(), 0.0), 2e-3);
  SplitStepper sx(gx, std::vector<double>(gx.size(), 0.0), 2e-3);
  SplitStepper sy(gy, std::vector<double>(gy.size(), 0.0), 2e-3);
  for (int s = 0; s < 50; ++s) {
    s2.step(psi);
    sx.step(fx);
    sy.step(fy);
  }
  double err = 0.0;
  for (std::size_t i = 0; i < g2.n[0]; ++i)
    for (std::size_t j = 0; j < g2.n[1]; ++j) err = std::max(err, std::abs(psi.amp[g2.index(i, j)] - fx.amp[i] * fy.amp[j]));
  CHECK(err < 1e-12);
}

TEST_CASE("marginal of a separable 2D gaussian is the 1D gaussian density") {
  const Grid g = Grid::plane(256, 128, 32.0, 16.0);
  const Wavefunction psi = gaussian_packet(g, {{1.0, -2.0}, {3.0, 1.0}, {1.2, 0.9}});
  for (int axis : {0, 1}) {
    const auto m = marginal_1d(psi, axis);
    const double c = axis == 0 ? 1.0 : -2.0, s = axis == 0 ? 1.2 : 0.9;
    double err = 0.0, integral = 0.0;
    for (std::size_t i = 0; i < g.n[axis]; ++i) {
      const double x = g.coord(axis, i);
      err = std::max(err, std::abs(m[i] - std::exp(-(x - c) * (x - c) / (2 * s * s)) / std::sqrt(2 * pi * s * s)));
      integral += m[i] * g.spacing(axis);
    }
    CHECK(err < 1e-10);
    CHECK(std::abs(integral - 1.0) < 1e-10);
  }
}

TEST_CASE("calibrated split leaves two lobes of equal mass and unit norm") {
  const Grid g = Grid::line(1024, 64.0);
  const PacketSpec p{{-8.0, 0.0}, {10.0, 0.0}, {1.0, 1.0}};
  const CalibrationReport cal = calibrate_half_transmission(0.25, p, g, 1e-3);
  const Barrier b{{0.0, 0.0}, cal.height, 0.25, 0.0};
  const Barrier bs[] = {b};
  Wavefunction psi = gaussian_packet(g, p);
  SplitStepper st(g, build_potential(bs, g), 1e-3);
  while (psi.time < 1.6) st.step(psi);
  CHECK(std::abs(norm(psi) - 1.0) < 1e-10);
  const auto m = marginal_1d(psi, 0);
  double left = 0.0, right = 0.0;
  for (std::size_t i = 0; i < g.n[0]; ++i) (g.coord(0, i) < 0.0 ? left : right) += m[i] * g.spacing(0);
  CHECK(std::abs(left - 0.5) < 0.01);
  CHECK(std::abs(right - 0.5) < 0.01);
}

TEST_CASE("translation and boost are exact on band-limited packets") {
  const Grid g = Grid::line(1024, 64.0);
  Wavefunction psi = gaussian_packet(g, {{-5.0, 0.0}, {4.0, 0.0}, {1.0, 1.0}});
  translate(psi, 7.25);
  const Wavefunction ref = gaussian_packet(g, {{2.25, 0.0}, {4.0, 0.0}, {1.0, 1.0}});
  double err = 0.0;
  for (std::size_t i = 0; i < g.n[0]; ++i) err = std::max(err, std::abs(std::abs(psi.amp[i]) - std::abs(ref.amp[i])));
  CHECK(err < 1e-10);
  apply_boost(psi, {3.0, 0.0});
  CHECK(std::abs(observables(psi).momentum_mean[0] - 7.0) < 1e-8);
}

TEST_CASE("binary snapshot round-trips") {
  const Grid g = Grid::plane(64, 64, 16.0, 16.0);
  Wavefunction psi = gaussian_packet(g, {{0.5, -0.5}, {2.0, 1.0}, {1.0, 1.0}});
  psi.time = 1.25;
  const auto path = std::filesystem::temp_directory_path() / "pinball_snapshot.bin";
  write_binary(path, psi);
  const Wavefunction back = read_binary(path);
  CHECK(back.grid == g);
  CHECK(back.time == 1.25);
  CHECK(back.amp == psi.amp);
  CHECK(std::filesystem::file_size(path) == 64 + 16 * g.size());
  std::filesystem::remove(path);
}
