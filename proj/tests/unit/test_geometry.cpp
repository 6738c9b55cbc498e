#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>
#include <filesystem>

#include "pinball/error.hpp"
#include "pinball/geometry.hpp"

using namespace pinball;

namespace {

const Grid kLine = Grid::line(1024, 64.0);
const PacketSpec kPacket{{-8.0, 0.0}, {10.0, 0.0}, {1.0, 1.0}};

double transmission(double h) {
  return transmission_coefficient({{0.0, 0.0}, h, 0.25, 0.0}, kPacket, kLine).transmitted;
}

}  // namespace

TEST_CASE("potential construction") {
  const Grid g = Grid::plane(256, 256, 32.0, 32.0);
  PinballGeometry none;
  none.levels = 0;
  for (double v : build_potential(none, g)) CHECK(v == 0.0);

  const Barrier one[] = {{{0.0, 0.0}, 75.0, 0.25, 0.0}};
  const auto v1 = build_potential(one, kLine);
  CHECK(std::abs(v1[512] - 75.0) < 1e-9);
  CHECK(kLine.coord(0, 512) == 0.0);

  PinballGeometry geo;
  geo.barrier.height = 50.0;
  const auto v = build_potential(geo, g);
  // Each segment is a flat-topped ridge; count the separate peaks as connected
  // components of the cells above half height.
  std::vector<int> seen(v.size(), 0);
  int peaks = 0;
  for (std::size_t s0 = 0; s0 < v.size(); ++s0) {
    if (seen[s0] || v[s0] <= 25.0) continue;
    ++peaks;
    std::vector<std::size_t> todo{s0};
    seen[s0] = 1;
    while (!todo.empty()) {
      const std::size_t c = todo.back();
      todo.pop_back();
      const std::size_t i = c / g.n[1], j = c % g.n[1];
      const std::size_t nb[] = {i > 0 ? g.index(i - 1, j) : c, i + 1 < g.n[0] ? g.index(i + 1, j) : c,
                                j > 0 ? g.index(i, j - 1) : c, j + 1 < g.n[1] ? g.index(i, j + 1) : c};
      for (std::size_t n : nb)
        if (!seen[n] && v[n] > 25.0) {
          seen[n] = 1;
          todo.push_back(n);
        }
    }
  }
  CHECK(peaks == 6);
  CHECK(*std::max_element(v.begin(), v.end()) <= 50.0 + 1e-9);
  for (const Barrier& b : geo.barriers()) CHECK(std::abs(b.value(b.center, 2) - 50.0) < 1e-12);
}

TEST_CASE("lattice node positions") {
  PinballGeometry geo;
  CHECK(geo.node_position(0, 0)[0] == 0.0);
  CHECK(geo.node_position(0, 0)[1] == -4.0);
  CHECK(geo.node_position(1, 0)[0] == -4.0);
  CHECK(geo.node_position(1, 1)[0] == 4.0);
  CHECK(geo.node_position(2, 1)[1] == 4.0);
}

TEST_CASE("detector arms are disjoint") {
  PinballGeometry geo;
  const Region r = arm_region_of(geo, 0, 0, Side::Reflected);
  const Region t = arm_region_of(geo, 0, 0, Side::Transmitted);
  CHECK_FALSE(r.overlaps(t, 2));
  CHECK_FALSE(detector_layout(geo).enabled);
  geo.detectors = true;
  const DetectorLayout layout = detector_layout(geo);
  CHECK(layout.enabled);
  REQUIRE(layout.arms.size() == 12);
  for (std::size_t a = 0; a < layout.arms.size(); ++a)
    for (std::size_t b = a + 1; b < layout.arms.size(); ++b) CHECK_FALSE(layout.arms[a].overlaps(layout.arms[b], 2));
}

TEST_CASE("region mass of a packet inside a region") {
  const Wavefunction psi = gaussian_packet(kLine, kPacket);
  Region all{{-32.0, 0.0}, {32.0, 0.0}};
  CHECK(std::abs(region_mass(psi, all) - 1.0) < 1e-10);
  Region left{{-32.0, 0.0}, {-8.0, 0.0}};
  // The boundary sits on a grid point, which the half-open box leaves out.
  const double cell = kLine.spacing(0) / std::sqrt(2.0 * 3.141592653589793);
  CHECK(std::abs(region_mass(psi, left) - 0.5) < cell);
}

TEST_CASE("transmission limits and monotonicity") {
  CHECK(std::abs(transmission(0.0) - 1.0) < 1e-6);
  const double big = 50.0 * 100.0 / 2.0;
  CHECK(transmission(big) < 1e-3);
  const double lo = transmission(40.0), hi = transmission(60.0), mid = transmission(50.0);
  CHECK(lo > mid);
  CHECK(mid > hi);
  const ScatteringResult r = transmission_coefficient({{0.0, 0.0}, 50.0, 0.25, 0.0}, kPacket, kLine);
  CHECK(std::abs(r.transmitted + r.reflected - 1.0) < 1e-10);
}

TEST_CASE("packet too close to the barrier is refused") {
  const PacketSpec close{{-3.0, 0.0}, {10.0, 0.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(transmission_coefficient({{0.0, 0.0}, 50.0, 0.25, 0.0}, close, kLine), Error);
}

TEST_CASE("calibration reaches T = 1/2 and coarser tolerance needs fewer steps") {
  const CalibrationReport fine = calibrate_half_transmission(0.25, kPacket, kLine, 1e-3);
  CHECK(std::abs(fine.transmission - 0.5) <= 1e-3);
  CHECK(fine.transmission >= 0.5);
  CHECK(std::abs(fine.transmission + fine.reflection - 1.0) < 1e-6);
  const CalibrationReport coarse = calibrate_half_transmission(0.25, kPacket, kLine, 0.1);
  CHECK(coarse.iterations < fine.iterations);

  const auto path = std::filesystem::temp_directory_path() / "pinball_calibration.csv";
  write_calibration_csv(path, fine);
  CHECK(read_calibrated_height(path) == fine.height);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_calibrated_height(path), Error);
}

TEST_CASE("calibration to a different target") {
  CalibrationOptions opt;
  opt.target = 0.6;
  const CalibrationReport r = calibrate_half_transmission(0.25, kPacket, kLine, 1e-3, opt);
  CHECK(std::abs(r.transmission - 0.6) <= 1e-3);
}
