#include <doctest.h>

#include <cmath>
#include <map>

#include "pinball/bohm.hpp"
#include "pinball/chaos.hpp"
#include "pinball/error.hpp"
#include "pinball/measurement.hpp"

using namespace pinball;

namespace {

double calibrated_height(const Grid& g) {
  static std::map<std::size_t, double> cache;
  auto it = cache.find(g.n[0]);
  if (it == cache.end()) {
    const PacketSpec p{{-8.0, 0.0}, {10.0, 0.0}, {1.0, 1.0}};
    it = cache.emplace(g.n[0], calibrate_half_transmission(0.25, p, g, 1e-3).height).first;
  }
  return it->second;
}

MeasuredConfig measured(int levels) {
  MeasuredConfig c;
  c.barrier.height = calibrated_height(c.grid);
  c.levels = levels;
  return c;
}

const Region kR{{-64.0, 0.0}, {-0.5, 0.0}};
const Region kT{{0.5, 0.0}, {64.0, 0.0}};

Wavefunction split_state(const MeasuredConfig& c) {
  const Barrier bs[] = {c.barrier};
  Wavefunction psi = gaussian_packet(c.grid, c.packet);
  SplitStepper st(c.grid, build_potential(bs, c.grid), c.dt);
  while (psi.time < 1.6) st.step(psi);
  return psi;
}

}  // namespace

TEST_CASE("separation masses") {
  const MeasuredConfig c = measured(1);
  const Wavefunction inside = gaussian_packet(c.grid, {{20.0, 0.0}, {10.0, 0.0}, {1.0, 1.0}});
  const SeparationMasses m = separation_overlap(inside, kR, kT);
  CHECK(m.reflected < 1e-10);
  CHECK(std::abs(m.transmitted - 1.0) < 1e-10);
  CHECK(m.residual < 1e-10);
  CHECK_THROWS_AS(separation_overlap(inside, kR, Region{{-1.0, 0.0}, {5.0, 0.0}}), Error);

  const SeparationMasses s = separation_overlap(split_state(c), kR, kT);
  CHECK(std::abs(s.reflected - 0.5) < 0.01);
  CHECK(std::abs(s.transmitted - 0.5) < 0.01);
  CHECK(s.residual < 1e-4);
}

TEST_CASE("overlapping lobes refuse detection") {
  const MeasuredConfig c = measured(1);
  Wavefunction psi = gaussian_packet(c.grid, {{-0.5, 0.0}, {10.0, 0.0}, {1.0, 1.0}});
  const Wavefunction b = gaussian_packet(c.grid, {{0.5, 0.0}, {-10.0, 0.0}, {1.0, 1.0}});
  for (std::size_t i = 0; i < psi.amp.size(); ++i) psi.amp[i] += b.amp[i];
  renormalize(psi);
  const Branch br{psi, {}, 1.0};
  CHECK(separation_overlap(psi, kR, kT).residual > 1e-4);
  CHECK_THROWS_AS(detect_and_collapse(br, {{5.0, 0.0}, 0.0}, kR, kT, 1e-4), Error);
}

TEST_CASE("collapse onto the branch holding the particle") {
  const MeasuredConfig c = measured(1);
  const Branch br{split_state(c), {}, 1.0};
  const Collapse t = detect_and_collapse(br, {{10.0, 0.0}, 0.0}, kR, kT, 1e-4);
  CHECK(t.bit == 1);
  CHECK(t.branch.record.bits == "1");
  CHECK(std::abs(norm(t.branch.psi) - 1.0) < 1e-10);
  CHECK(std::abs(t.branch.weight - 0.5) < 0.005);
  CHECK(std::abs(t.discarded_mass - 0.5) < 0.01);

  const Collapse r = detect_and_collapse(br, {{-10.0, 0.0}, 0.0}, kR, kT, 1e-4);
  CHECK(r.bit == 0);
  CHECK(region_mass(r.branch.psi, kT) < 1e-8);
  CHECK_THROWS_AS(detect_and_collapse(br, {{0.0, 0.0}, 0.0}, kR, kT, 1e-4), Error);
}

TEST_CASE("q0 = 1/4 reads 11 with the tie rule") {
  const MeasuredRun run = run_measured_pinball(measured(2), 0.25);
  CHECK(run.record.bits == "11");
  REQUIRE(run.q.size() == 2);
  CHECK(std::abs(run.q[0] - 0.25) < 1e-3);
  CHECK(std::abs(run.q[1] - 0.5) < 0.01);
  CHECK(run.final_node == 2);
}

TEST_CASE("q0 = 0.3 follows the doubling map for four levels") {
  const MeasuredRun run = run_measured_pinball(measured(4), 0.3);
  const double expected[] = {0.3, 0.6, 0.2, 0.4};
  REQUIRE(run.q.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(run.q[i] - expected[i]) < 0.02);
  CHECK(run.record.bits == "1011");
  CHECK(run.max_norm_drift < 1e-10);
  CHECK(run.capped == 0);
  CHECK(run.trajectory.events.size() == 4);
  for (const auto& e : run.trajectory.events) CHECK(std::abs(e.q_after - bernoulli_step(e.q_before)) < 0.02);
}

TEST_CASE("q0 and q0 + 2^-8 share their first bits then split") {
  const double q0s[] = {0.3, 0.3 + std::ldexp(1.0, -8)};
  const auto runs = run_measured_batch(measured(10), q0s);
  const auto f = first_mismatch_level(runs[0].record.bits, runs[1].record.bits);
  REQUIRE(f);
  CHECK(*f >= 7);
  CHECK(*f <= 10);
  CHECK(runs[0].record.bits.substr(0, 6) == symbolic_path(0.3, 6));
}

TEST_CASE("batched runs match single runs") {
  const MeasuredConfig c = measured(3);
  const double q0s[] = {0.1, 0.45, 0.8};
  const auto batch = run_measured_batch(c, q0s);
  for (std::size_t i = 0; i < 3; ++i) {
    const MeasuredRun one = run_measured_pinball(c, q0s[i]);
    CHECK(one.record.bits == batch[i].record.bits);
    CHECK(one.q == batch[i].q);
    CHECK(one.weight == batch[i].weight);
  }
}

TEST_CASE("branch weights are products of split masses and match path frequencies") {
  const MeasuredConfig c = measured(3);
  const Wavefunction psi0 = gaussian_packet(c.grid, c.packet);
  std::vector<double> q0s;
  for (const auto& p : sample_ensemble(psi0, 400, 17)) q0s.push_back(front_quantile(psi0, p.position));
  const auto runs = run_measured_batch(c, q0s);
  std::map<std::string, int> count;
  std::map<std::string, double> weight;
  for (const auto& r : runs) {
    ++count[r.record.bits];
    weight[r.record.bits] = r.weight;
    CHECK(std::abs(r.weight - 0.125) < 0.01);
  }
  double total = 0.0;
  for (const auto& [bits, w] : weight) total += w;
  CHECK(total <= 1.0 + 1e-9);
  for (const auto& [bits, n] : count) {
    const double p = weight[bits];
    const double sd = std::sqrt(400.0 * p * (1.0 - p));
    CHECK(std::abs(n - 400.0 * p) <= 3.0 * sd);
  }
}

TEST_CASE("measured engine argument checks") {
  MeasuredConfig c = measured(1);
  CHECK_THROWS_AS(run_measured_pinball(c, 0.0), Error);
  CHECK_THROWS_AS(run_measured_pinball(c, 1.0), Error);
  c.levels = 17;
  CHECK_THROWS_AS(run_measured_pinball(c, 0.5), Error);
  c = measured(1);
  c.output_every = 3;
  CHECK_THROWS_AS(run_measured_pinball(c, 0.5), Error);
  c = measured(1);
  c.grid = Grid::plane(64, 64, 16.0, 16.0);
  CHECK_THROWS_AS(run_measured_pinball(c, 0.5), Error);
}

TEST_CASE("unitary run checks and leak abort") {
  UnitaryConfig u;
  u.grid = Grid::line(1024, 64.0);
  const Vec2 pos[] = {{-6.0, -10.0}};
  CHECK_THROWS_AS(run_unitary_pinball(u, pos), Error);
  u = UnitaryConfig{};
  u.geometry.levels = 4;
  CHECK_THROWS_AS(run_unitary_pinball(u, pos), Error);

  u = UnitaryConfig{};
  u.grid = Grid::plane(256, 256, 32.0, 32.0);
  u.packet = {{-6.0, -6.0}, {10.0, 10.0}, {1.0, 1.0}};
  u.geometry.barrier.height = 50.0;
  u.duration = 0.02;
  u.leak_tol = 1e-300;
  try {
    run_unitary_pinball(u, pos);
    FAIL("expected a boundary leak");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BoundaryLeak);
  }
}

TEST_CASE("short unitary run keeps the norm and records every particle") {
  UnitaryConfig u;
  u.grid = Grid::plane(256, 256, 32.0, 32.0);
  u.packet = {{-6.0, -6.0}, {10.0, 10.0}, {1.0, 1.0}};
  u.geometry.barrier.height = 50.0;
  u.duration = 0.1;
  const Vec2 pos[] = {{-6.0, -6.0}, {-5.99, -6.0}};
  const UnitaryRun r = run_unitary_pinball(u, pos);
  CHECK(r.trajectories.size() == 2);
  CHECK(r.sample_times.size() == r.quantiles.size());
  CHECK(r.max_norm_drift < 1e-10);
  CHECK(r.capped == 0);
  // Free flight: both particles move with the packet, about k t along each axis.
  const Vec2 end = r.trajectories[0].samples.back().position;
  CHECK(std::abs(end[0] + 6.0 - 1.0) < 0.05);
  CHECK(std::abs(end[1] + 6.0 - 1.0) < 0.05);
  CHECK(r.quantiles.back()[0] > r.quantiles.back()[1]);
}
