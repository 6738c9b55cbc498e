#include "pinball/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "pinball/error.hpp"

namespace pinball {

SeparationMasses separation_overlap(const Wavefunction& psi, const Region& region_r,
                                    const Region& region_t) {
  const int dims = psi.grid.dims;
  if (region_r.overlaps(region_t, dims))
    throw Error(ErrorKind::InvalidArgument, "detector regions overlap");
  SeparationMasses m;
  m.reflected = region_mass(psi, region_r);
  m.transmitted = region_mass(psi, region_t);
  m.residual = std::max(0.0, norm(psi) - m.reflected - m.transmitted);
  return m;
}

Collapse detect_and_collapse(const Branch& branch, const BohmParticle& particle, const Region& region_r,
                             const Region& region_t, double eps_sep) {
  const SeparationMasses m = separation_overlap(branch.psi, region_r, region_t);
  if (!m.separated(eps_sep)) {
    std::ostringstream os;
    os << "residual overlap " << m.residual << " >= " << eps_sep;
    throw Error(ErrorKind::PrematureDetection, os.str());
  }
  const int dims = branch.psi.grid.dims;
  int bit;
  if (region_t.contains(particle.position, dims)) {
    bit = 1;
  } else if (region_r.contains(particle.position, dims)) {
    bit = 0;
  } else {
    std::ostringstream os;
    os << "particle at x = " << particle.position[0] << " is in neither detector region";
    throw Error(ErrorKind::ParticleInGap, os.str());
  }

  const Region& keep = bit ? region_t : region_r;
  const double kept_mass = bit ? m.transmitted : m.reflected;
  Collapse c;
  c.bit = bit;
  c.discarded_mass = norm(branch.psi) - kept_mass;
  c.branch.record = branch.record.extended(bit);
  c.branch.weight = branch.weight * kept_mass;
  c.branch.psi = branch.psi;
  const Grid& g = c.branch.psi.grid;
  for (std::size_t i = 0; i < g.n[0]; ++i)
    for (std::size_t j = 0; j < g.n[1]; ++j) {
      const Vec2 p{g.coord(0, i), g.dims == 2 ? g.coord(1, j) : 0.0};
      if (!keep.contains(p, dims)) c.branch.psi.amp[g.index(i, j)] = 0.0;
    }
  renormalize(c.branch.psi);
  return c;
}

namespace {

double default_v_max(const PacketSpec& packet, int dims, double v_max) {
  if (v_max > 0.0) return v_max;
  double k2 = 0.0;
  for (int a = 0; a < dims; ++a) k2 += packet.momentum[a] * packet.momentum[a];
  return 10.0 * std::sqrt(k2);
}

struct Walker {
  std::size_t run;
  BohmParticle particle;
};

struct Group {
  Branch branch;
  std::vector<Walker> walkers;
  int level = 0;
  bool windowed = false;
};

// Splits a branch whose marginal has fallen apart into lobes separated by
// near-empty gaps; each walker keeps the lobe it sits in. Empty when the
// dominant lobe already holds the required mass.
std::vector<Group> window_lobes(Group& grp) {
  const Grid& g = grp.branch.psi.grid;
  if (grp.windowed || dominant_lobe_fraction(grp.branch.psi) >= kSingleLobeFraction) return {};
  const std::vector<Lobe> lobes = marginal_lobes(grp.branch.psi);
  std::map<std::size_t, Group> parts;
  for (const Walker& w : grp.walkers) {
    const double f = std::round((w.particle.position[0] - g.origin(0)) / g.spacing(0));
    const auto cell = static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(g.n[0] - 1)));
    std::size_t l = 0;
    while (l + 1 < lobes.size() && cell >= lobes[l].end) ++l;
    Group& part = parts[l];
    if (part.walkers.empty()) {
      part.branch.psi = grp.branch.psi;
      for (std::size_t i = 0; i < g.n[0]; ++i)
        if (i < lobes[l].begin || i >= lobes[l].end) part.branch.psi.amp[i] = 0.0;
      renormalize(part.branch.psi);
      part.branch.record = grp.branch.record;
      part.branch.weight = grp.branch.weight * lobes[l].mass;
      part.level = grp.level;
      part.windowed = true;
    }
    part.walkers.push_back(w);
  }
  std::vector<Group> out;
  for (auto& [l, part] : parts) out.push_back(std::move(part));
  return out;
}

// Moves the effective wavefunction back to the launch point: time reversal
// and a Galilean boost restore propagation along +x with mean momentum k0,
// then a translation puts the centroid launch_sigmas widths before the
// barrier. None of these change |psi|^2 at the instant, so the particle keeps
// its ordering in the packet.
double recenter(Wavefunction& psi, const MeasuredConfig& cfg) {
  const Observables o = observables(psi);
  for (auto& a : psi.amp) a = std::conj(a);
  apply_boost(psi, {cfg.packet.momentum[0] + o.momentum_mean[0], 0.0});
  const double width = std::sqrt(o.variance[0]);
  const double shift = cfg.barrier.center[0] - cfg.launch_sigmas * width - o.mean[0];
  translate(psi, shift);
  renormalize(psi);
  return shift;
}

}  // namespace

std::vector<MeasuredRun> run_measured_batch(const MeasuredConfig& cfg, std::span<const double> q0s) {
  const Grid& g = cfg.grid;
  if (g.dims != 1) throw Error(ErrorKind::InvalidArgument, "measured pinball runs on a 1D grid");
  if (cfg.levels < 1 || cfg.levels > 16) throw Error(ErrorKind::InvalidArgument, "levels must be in [1, 16]");
  if (cfg.output_every < 2 || cfg.output_every % 2 != 0)
    throw Error(ErrorKind::InvalidArgument, "output_every must be a positive even number of PDE steps");
  cfg.packet.validate_resolved_momentum(1);
  const double k0 = cfg.packet.momentum[0];
  const double xb = cfg.barrier.center[0];
  const double v_max = default_v_max(cfg.packet, 1, cfg.v_max);
  const Barrier barriers[] = {cfg.barrier};
  const std::vector<double> potential = build_potential(barriers, g);

  const double gap = 2.0 * cfg.barrier.width;
  Region region_r, region_t;
  region_r.lo[0] = g.origin(0);
  region_r.hi[0] = xb - gap;
  region_t.lo[0] = xb + gap;
  region_t.hi[0] = g.origin(0) + g.length[0];

  std::vector<MeasuredRun> runs(q0s.size());
  Group root;
  root.branch.psi = gaussian_packet(g, cfg.packet);
  if (xb - cfg.packet.center[0] < cfg.launch_sigmas * cfg.packet.sigma[0])
    throw Error(ErrorKind::InvalidArgument, "packet starts too close to the barrier");
  for (std::size_t r = 0; r < q0s.size(); ++r) {
    if (!(q0s[r] > 0.0 && q0s[r] < 1.0)) throw Error(ErrorKind::InvalidArgument, "q0 must lie in (0, 1)");
    BohmParticle p{{position_at_quantile(root.branch.psi, q0s[r]), 0.0}, 0.0};
    root.walkers.push_back({r, p});
    runs[r].q0 = front_quantile(root.branch.psi, p.position);
    runs[r].trajectory.id = static_cast<int>(r);
  }

  const int lock_per_sample = cfg.output_every / 2;
  std::vector<Group> stack;
  stack.push_back(std::move(root));

  while (!stack.empty()) {
    Group grp = std::move(stack.back());
    stack.pop_back();

    const bool alone = cfg.stop_when_alone && q0s.size() > 1 && grp.walkers.size() == 1;
    if (grp.level == cfg.levels || alone) {
      for (const Walker& w : grp.walkers) {
        MeasuredRun& run = runs[w.run];
        run.record = grp.branch.record;
        run.weight = grp.branch.weight;
        run.final_node = static_cast<int>(std::count(run.record.bits.begin(), run.record.bits.end(), '1'));
      }
      continue;
    }

    if (auto parts = window_lobes(grp); !parts.empty()) {
      for (Group& part : parts) {
        const double cut = 1.0 - part.branch.weight / grp.branch.weight;
        for (const Walker& w : part.walkers) {
          runs[w.run].discarded_mass += cut;
          ++runs[w.run].windowings;
        }
        stack.push_back(std::move(part));
      }
      continue;
    }

    const int node = static_cast<int>(std::count(grp.branch.record.bits.begin(), grp.branch.record.bits.end(), '1'));
    const double lateral = (node - 0.5 * grp.level) * cfg.lattice_pitch;
    std::vector<double> q_before(grp.walkers.size());
    for (std::size_t i = 0; i < grp.walkers.size(); ++i) {
      try {
        q_before[i] = internal_coordinate(grp.branch.psi, grp.walkers[i].particle);
      } catch (const Error& e) {
        throw Error(e.kind(), e.detail() + " (level " + std::to_string(grp.level + 1) + ", record '" +
                                  grp.branch.record.bits + "')");
      }
      runs[grp.walkers[i].run].q.push_back(q_before[i]);
    }

    const Observables start = observables(grp.branch.psi);
    const double arrival = (xb - start.mean[0]) / k0;
    const double max_time = 10.0 * arrival + 10.0 * std::sqrt(start.variance[0]) / k0;
    const double t0 = grp.branch.psi.time;

    std::vector<BohmParticle> particles;
    for (const Walker& w : grp.walkers) particles.push_back(w.particle);
    auto record_samples = [&](double t) {
      for (std::size_t i = 0; i < particles.size(); ++i)
        runs[grp.walkers[i].run].trajectory.samples.push_back({t, {particles[i].position[0], lateral}});
    };

    LockstepEvolution ev(std::move(grp.branch.psi), potential, cfg.dt, v_max);
    record_samples(ev.time());
    SeparationMasses masses;
    for (long lock = 1;; ++lock) {
      ev.step(particles);
      if (lock % lock_per_sample != 0) continue;
      record_samples(ev.time());
      if (ev.time() - t0 < arrival) continue;
      masses = separation_overlap(ev.psi(), region_r, region_t);
      if (masses.separated(cfg.eps_sep)) break;
      if (ev.time() - t0 > max_time) {
        std::ostringstream os;
        os << "level " << grp.level + 1 << ": residual " << masses.residual << " after t = " << ev.time() - t0;
        throw Error(ErrorKind::LobesNotSeparated, os.str());
      }
    }
    const double drift = std::abs(norm(ev.psi()) - 1.0);
    Branch scattered{ev.psi(), grp.branch.record, grp.branch.weight};

    struct Child {
      Group group;
      double shift = 0.0;
      double discarded = 0.0;
    };
    std::map<int, Child> children;
    for (std::size_t i = 0; i < particles.size(); ++i) {
      BohmParticle p = particles[i];
      // Still between the regions once the lobes have separated means the
      // particle sits on the split point to within the residual mass: tie
      // rule, transmitted, placed at the rear edge of the transmitted arm.
      bool tie = false;
      if (!region_t.contains(p.position, 1) && !region_r.contains(p.position, 1)) {
        p.position[0] = region_t.lo[0];
        tie = true;
      }
      const int bit = region_t.contains(p.position, 1) ? 1 : 0;
      auto it = children.find(bit);
      if (it == children.end()) {
        Collapse c = detect_and_collapse(scattered, p, region_r, region_t, cfg.eps_sep);
        Child child;
        child.group.branch = std::move(c.branch);
        child.group.level = grp.level + 1;
        child.discarded = c.discarded_mass;
        child.shift = recenter(child.group.branch.psi, cfg);
        it = children.emplace(bit, std::move(child)).first;
      }
      Child& child = it->second;
      p.position[0] += child.shift;
      p.position = wrap(g, p.position);

      MeasuredRun& run = runs[grp.walkers[i].run];
      ScatterEvent e;
      e.level = grp.level + 1;
      e.q_before = q_before[i];
      e.branch = bit ? Side::Transmitted : Side::Reflected;
      e.q_after = front_quantile(child.group.branch.psi, p.position);
      e.tie = tie;
      run.trajectory.events.push_back(e);
      run.ties += tie ? 1 : 0;
      run.capped += ev.capped();
      run.max_norm_drift = std::max(run.max_norm_drift, drift);
      run.discarded_mass += child.discarded;
      child.group.walkers.push_back({grp.walkers[i].run, p});
    }
    for (auto& [bit, child] : children) stack.push_back(std::move(child.group));
  }
  return runs;
}

MeasuredRun run_measured_pinball(const MeasuredConfig& config, double q0) {
  const double q[] = {q0};
  return run_measured_batch(config, q).front();
}

double boundary_mass(const Wavefunction& psi, std::size_t cells) {
  const Grid& g = psi.grid;
  auto near_edge = [&](std::size_t i, int a) { return i < cells || i + cells >= g.n[a]; };
  double s = 0.0;
  for (std::size_t i = 0; i < g.n[0]; ++i)
    for (std::size_t j = 0; j < g.n[1]; ++j)
      if (near_edge(i, 0) || (g.dims == 2 && near_edge(j, 1))) s += std::norm(psi.amp[g.index(i, j)]);
  return s * g.cell_volume();
}

UnitaryRun run_unitary_pinball(const UnitaryConfig& cfg, std::span<const Vec2> positions) {
  const Grid& g = cfg.grid;
  if (g.dims != 2) throw Error(ErrorKind::InvalidArgument, "unitary pinball runs on a 2D grid");
  if (cfg.geometry.levels < 1 || cfg.geometry.levels > 3)
    throw Error(ErrorKind::InvalidArgument, "unitary pinball supports 1 to 3 levels");
  if (cfg.output_every < 2 || cfg.output_every % 2 != 0)
    throw Error(ErrorKind::InvalidArgument, "output_every must be a positive even number of PDE steps");
  const double v_max = default_v_max(cfg.packet, 2, cfg.v_max);

  UnitaryRun out;
  std::vector<BohmParticle> particles;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    particles.push_back({positions[i], 0.0});
    out.trajectories.push_back({static_cast<int>(i), {}, {}});
  }

  LockstepEvolution ev(gaussian_packet(g, cfg.packet), build_potential(cfg.geometry, g), cfg.dt, v_max);
  auto sample = [&] {
    out.sample_times.push_back(ev.time());
    const MarginalCdf cdf(g, 0, marginal_1d(ev.psi(), 0));
    std::vector<double> q(particles.size());
    for (std::size_t i = 0; i < particles.size(); ++i) {
      out.trajectories[i].samples.push_back({ev.time(), particles[i].position});
      q[i] = 1.0 - cdf.cdf(particles[i].position[0]);
    }
    out.quantiles.push_back(std::move(q));
    out.max_norm_drift = std::max(out.max_norm_drift, std::abs(norm(ev.psi()) - 1.0));
    const double leak = boundary_mass(ev.psi());
    out.max_boundary_leak = std::max(out.max_boundary_leak, leak);
    if (leak > cfg.leak_tol) {
      std::ostringstream os;
      os << "boundary mass " << leak << " exceeds " << cfg.leak_tol << " at t = " << ev.time();
      throw Error(ErrorKind::BoundaryLeak, os.str());
    }
  };

  sample();
  const int lock_per_sample = cfg.output_every / 2;
  for (long lock = 1; ev.time() < cfg.duration - 1e-12; ++lock) {
    ev.step(particles);
    if (lock % lock_per_sample == 0) sample();
  }
  out.capped = ev.capped();
  out.final_psi = ev.psi();
  return out;
}

}  // namespace pinball
