#include "pinball/scenario.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "pinball/bohm.hpp"
#include "pinball/chaos.hpp"
#include "pinball/error.hpp"
#include "pinball/measurement.hpp"

#ifndef PINBALL_VERSION
#define PINBALL_VERSION "0.0.0"
#endif

namespace pinball {

namespace {

std::string hex(const unsigned char* d, unsigned n) {
  std::ostringstream os;
  for (unsigned i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(d[i]);
  return os.str();
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  void update(const char* p, std::size_t n) { EVP_DigestUpdate(ctx_, p, n); }
  std::string finish() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned n = 0;
    EVP_DigestFinal_ex(ctx_, md, &n);
    return hex(md, n);
  }

 private:
  EVP_MD_CTX* ctx_;
};

// Asymptotic Kolmogorov critical value c(alpha) / sqrt(n).
double ks_critical(double alpha, std::size_t n) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  out << std::setprecision(17);
  return out;
}

struct Context {
  const ScenarioConfig& cfg;
  std::filesystem::path out;
  RunManifest& manifest;

  std::filesystem::path file(const std::string& name) {
    if (std::none_of(manifest.outputs.begin(), manifest.outputs.end(),
                     [&](const OutputFile& f) { return f.name == name; }))
      manifest.outputs.push_back({name, ""});
    return out / name;
  }

  void check(const std::string& name, double value, const std::string& rel, double limit) {
    bool ok = false;
    if (rel == "<=") ok = value <= limit;
    else if (rel == "<") ok = value < limit;
    else if (rel == ">=") ok = value >= limit;
    else if (rel == "==") ok = value == limit;
    manifest.assertions.push_back({name, value, limit, rel, ok});
  }

  nlohmann::ordered_json& metric(const std::string& key) { return manifest.metrics[key]; }
};

double height_for(Context& x) {
  const CalibrationOutcome cal = resolve_barrier_height(x.cfg, x.out);
  if (cal.source == "calibrated") x.file("calibration.csv");
  x.metric("barrier_height") = cal.height;
  x.metric("height_source") = cal.source;
  return cal.height;
}

std::vector<BohmParticle> initial_particles(const ScenarioConfig& c, const Wavefunction& psi0) {
  if (c.particles_q0.empty()) return sample_ensemble(psi0, c.particles_count, c.seed);
  std::vector<BohmParticle> ps;
  for (double q : c.particles_q0) ps.push_back({{position_at_quantile(psi0, q), 0.0}, psi0.time});
  return ps;
}

// Independent measured runs split into contiguous chunks, one per worker.
// The field of a branch does not depend on which particles ride on it, so
// the split does not change any result.
std::vector<MeasuredRun> parallel_measured(const MeasuredConfig& m, const std::vector<double>& q0s) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(worker_threads()), q0s.size());
  if (workers <= 1) return run_measured_batch(m, q0s);
  std::vector<std::vector<MeasuredRun>> parts(workers);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  const std::size_t chunk = (q0s.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      const std::size_t lo = std::min(q0s.size(), w * chunk);
      const std::size_t hi = std::min(q0s.size(), lo + chunk);
      try {
        parts[w] = run_measured_batch(m, std::span(q0s).subspan(lo, hi - lo));
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<MeasuredRun> all;
  for (auto& p : parts)
    for (auto& r : p) all.push_back(std::move(r));
  return all;
}

MeasuredConfig measured_config(const ScenarioConfig& c, double height) {
  MeasuredConfig m;
  m.grid = c.grid();
  m.packet = c.packet();
  m.barrier = {{0.0, 0.0}, height, c.barrier_width, 0.0};
  m.levels = c.measured_levels;
  m.dt = c.dt;
  m.eps_sep = c.measured_eps_sep;
  m.launch_sigmas = c.measured_launch_sigmas;
  m.lattice_pitch = c.geometry_pitch;
  m.output_every = c.output_every;
  return m;
}

// Pair bases sit at evenly spaced front quantiles (or the configured q0
// list); partners are offset by pair_offset sigma towards +x.
std::vector<double> pair_bases(const ScenarioConfig& c) {
  if (!c.particles_q0.empty()) return c.particles_q0;
  std::vector<double> q;
  for (int i = 0; i < c.particles_pairs; ++i) q.push_back((i + 0.5) / c.particles_pairs);
  return q;
}

void run_calibrate(Context& x) {
  const ScenarioConfig& c = x.cfg;
  Grid g = Grid::line(c.grid_n[0], c.grid_length[0]);
  PacketSpec p = c.packet();
  CalibrationOptions opt;
  opt.target = c.calibration_target;
  opt.dt = c.dt;
  const CalibrationReport rep = calibrate_half_transmission(c.barrier_width, p, g, c.calibration_tol, opt);
  write_calibration_csv(x.file("calibration.csv"), rep);
  x.metric("barrier_height") = rep.height;
  x.metric("transmission") = rep.transmission;
  x.metric("reflection") = rep.reflection;
  x.metric("iterations") = rep.iterations;
  x.check("abs_T_minus_target", std::abs(rep.transmission - rep.target), "<=", rep.tol);
  x.check("abs_R_plus_T_minus_1", std::abs(rep.transmission + rep.reflection - 1.0), "<=", 1e-6);
}

void run_single_barrier(Context& x) {
  const ScenarioConfig& c = x.cfg;
  const double h = height_for(x);
  const Grid g = c.grid();
  const PacketSpec p = c.packet();
  p.validate_resolved_momentum(1);
  const Barrier bs[] = {{{0.0, 0.0}, h, c.barrier_width, 0.0}};
  const Wavefunction psi0 = gaussian_packet(g, p);
  std::vector<BohmParticle> ps = initial_particles(c, psi0);
  std::vector<double> q0(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) q0[i] = front_quantile(psi0, ps[i].position);

  std::vector<std::size_t> order(ps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ps[a].position[0] < ps[b].position[0]; });

  std::vector<Trajectory> traj(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) traj[i].id = static_cast<int>(i);
  const std::vector<double> potential = build_potential(bs, g);
  LockstepEvolution ev(psi0, potential, c.dt, 10.0 * p.momentum[0]);
  const double dx = g.spacing(0);
  int ordering_violations = 0;
  double drift = 0.0;
  auto sample = [&] {
    for (std::size_t i = 0; i < ps.size(); ++i) traj[i].samples.push_back({ev.time(), ps[i].position});
    for (std::size_t k = 1; k < order.size(); ++k)
      if (ps[order[k]].position[0] < ps[order[k - 1]].position[0] - dx) ++ordering_violations;
    drift = std::max(drift, std::abs(norm(ev.psi()) - 1.0));
  };
  sample();
  for (long lock = 1; ev.time() < c.duration - 1e-12; ++lock) {
    ev.step(ps);
    if (lock % (c.output_every / 2) == 0) sample();
  }
  if (traj.empty() || traj[0].samples.back().t != ev.time()) sample();

  const MarginalCdf cdf(g, 0, density(ev.psi()));
  const double behind_barrier = cdf.cdf(0.0);
  int front_violations = 0, transmitted = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double xf = ps[i].position[0];
    const Side side = xf > 0.0 ? Side::Transmitted : Side::Reflected;
    const double q_after = side == Side::Transmitted ? (1.0 - cdf.cdf(xf)) / (1.0 - behind_barrier)
                                                     : (behind_barrier - cdf.cdf(xf)) / behind_barrier;
    traj[i].events.push_back({1, q0[i], side, q_after, false});
    transmitted += side == Side::Transmitted;
    if (q0[i] < 0.5 - c.check_front_band && side == Side::Reflected) ++front_violations;
    if (q0[i] > 0.5 + c.check_front_band && side == Side::Transmitted) ++front_violations;
  }

  write_trajectories_csv(x.file("trajectories.csv"), traj, 1);
  write_events_csv(x.file("events.csv"), traj);
  {
    auto out = open_csv(x.file("potential.csv"));
    out << "x,V\n";
    for (std::size_t i = 0; i < g.n[0]; ++i) out << g.coord(0, i) << ',' << potential[i] << '\n';
  }
  x.metric("particles") = ps.size();
  x.metric("transmission") = 1.0 - behind_barrier;
  x.metric("fraction_transmitted") = static_cast<double>(transmitted) / static_cast<double>(ps.size());
  x.metric("max_norm_drift") = drift;
  x.metric("capped") = ev.capped();
  x.check("front_rule_violations", front_violations, "==", 0);
  x.check("ordering_violations", ordering_violations, "==", 0);
  x.check("max_norm_drift", drift, "<=", c.check_norm_drift);
  x.check("capped_velocities", static_cast<double>(ev.capped()), "==", 0);
}

void run_unitary(Context& x) {
  const ScenarioConfig& c = x.cfg;
  const double h = height_for(x);
  UnitaryConfig u;
  u.grid = c.grid();
  u.packet = c.packet();
  u.geometry = c.geometry(h);
  u.dt = c.dt;
  u.duration = c.duration;
  u.leak_tol = c.leak_tol;
  u.output_every = c.output_every;
  u.packet.validate_resolved_momentum(2);

  const Wavefunction psi0 = gaussian_packet(u.grid, u.packet);
  const MarginalCdf cdf0(u.grid, 0, marginal_1d(psi0, 0));
  std::vector<Vec2> pos;
  const int pairs = c.particles_pairs;
  for (double q : pairs > 0 ? pair_bases(c) : std::vector<double>{}) {
    const double xb = cdf0.inverse(1.0 - q);
    pos.push_back({xb, u.packet.center[1]});
    pos.push_back({xb + c.particles_pair_offset * u.packet.sigma[0], u.packet.center[1]});
  }
  const std::size_t n_pairs = pos.size() / 2;
  const std::vector<BohmParticle> ens = sample_ensemble(psi0, c.particles_count, c.seed);
  for (const auto& b : ens) pos.push_back(b.position);

  const UnitaryRun run = run_unitary_pinball(u, pos);

  write_trajectories_csv(x.file("trajectories.csv"), run.trajectories, 2);
  {
    auto out = open_csv(x.file("barriers.csv"));
    out << "x,y,height,width,half_length\n";
    for (const Barrier& b : u.geometry.barriers())
      out << b.center[0] << ',' << b.center[1] << ',' << b.height << ',' << b.width << ',' << b.half_length << '\n';
  }

  const double time_per_level = c.geometry_row_spacing / std::abs(u.packet.momentum[1]);
  double max_ratio = 0.0, max_q_ratio = 0.0, max_rate = -std::numeric_limits<double>::infinity();
  {
    auto out = open_csv(x.file("separations.csv"));
    out << "pair,t,distance,abs_dq\n";
    auto summary = open_csv(x.file("pairs.csv"));
    summary << "pair,q0,initial_distance,final_distance,ratio,dq_ratio,rate_per_level\n";
    const std::size_t last = run.sample_times.size() - 1;
    for (std::size_t k = 0; k < n_pairs; ++k) {
      const auto& a = run.trajectories[2 * k].samples;
      const auto& b = run.trajectories[2 * k + 1].samples;
      std::vector<double> dist, dq;
      for (std::size_t s = 0; s < a.size(); ++s) {
        dist.push_back(std::hypot(a[s].position[0] - b[s].position[0], a[s].position[1] - b[s].position[1]));
        dq.push_back(std::abs(run.quantiles[s][2 * k] - run.quantiles[s][2 * k + 1]));
        out << k << ',' << run.sample_times[s] << ',' << dist.back() << ',' << dq.back() << '\n';
      }
      const double ratio = dist[last] / dist[0];
      const double q_ratio = dq[last] / dq[0];
      const double rate = log_separation_slope(run.sample_times, dq) * time_per_level;
      summary << k << ',' << run.quantiles[0][2 * k] << ',' << dist[0] << ',' << dist[last] << ',' << ratio << ','
              << q_ratio << ',' << rate << '\n';
      max_ratio = std::max(max_ratio, ratio);
      max_q_ratio = std::max(max_q_ratio, q_ratio);
      max_rate = std::max(max_rate, rate);
    }
  }

  double ks = 0.0;
  if (!ens.empty()) {
    std::vector<double> xs;
    for (std::size_t i = 2 * n_pairs; i < run.trajectories.size(); ++i)
      xs.push_back(run.trajectories[i].samples.back().position[0]);
    ks = ks_statistic(xs, MarginalCdf(u.grid, 0, marginal_1d(run.final_psi, 0)));
  }

  x.metric("pairs") = n_pairs;
  x.metric("ensemble") = ens.size();
  x.metric("max_norm_drift") = run.max_norm_drift;
  x.metric("max_boundary_mass") = run.max_boundary_leak;
  x.metric("capped") = run.capped;
  if (n_pairs > 0) {
    x.metric("max_separation_ratio") = max_ratio;
    x.metric("max_quantile_separation_ratio") = max_q_ratio;
    x.metric("max_divergence_rate_per_level") = max_rate;
  }
  x.check("max_norm_drift", run.max_norm_drift, "<=", c.check_norm_drift);
  x.check("capped_velocities", static_cast<double>(run.capped), "==", 0);
  if (!ens.empty()) {
    x.metric("ks_final_marginal") = ks;
    x.check("ks_final_marginal", ks, "<=", ks_critical(c.check_ks_alpha, ens.size()));
  }
  if (n_pairs > 0 && c.check_max_separation_ratio > 0.0)
    x.check("max_separation_ratio", max_ratio, "<", c.check_max_separation_ratio);
}

void write_records(Context& x, const std::vector<MeasuredRun>& runs) {
  auto out = open_csv(x.file("records.csv"));
  out << "run_id,q0,bits,final_node,weight,q\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const MeasuredRun& r = runs[i];
    out << i << ',' << r.q0 << ',' << r.record.bits << ',' << r.final_node << ',' << r.weight << ',';
    for (std::size_t k = 0; k < r.q.size(); ++k) out << (k ? ";" : "") << r.q[k];
    out << '\n';
  }
}

void measured_common_checks(Context& x, const std::vector<MeasuredRun>& runs) {
  double drift = 0.0;
  std::size_t capped = 0;
  int ties = 0, windowed = 0;
  for (const auto& r : runs) {
    drift = std::max(drift, r.max_norm_drift);
    capped += r.capped;
    ties += r.ties;
    windowed += r.windowings > 0;
  }
  x.metric("runs") = runs.size();
  x.metric("max_norm_drift") = drift;
  x.metric("capped") = capped;
  x.metric("ties") = ties;
  x.metric("runs_windowed") = windowed;
  x.check("max_norm_drift", drift, "<=", x.cfg.check_norm_drift);
  x.check("capped_velocities", static_cast<double>(capped), "==", 0);
}

void run_measured(Context& x) {
  const ScenarioConfig& c = x.cfg;
  const double h = height_for(x);
  const MeasuredConfig m = measured_config(c, h);
  const Wavefunction psi0 = gaussian_packet(m.grid, m.packet);

  std::vector<double> q0s;
  const bool paired = c.particles_pairs > 0;
  if (paired) {
    for (double q : pair_bases(c)) {
      const double xb = position_at_quantile(psi0, q);
      q0s.push_back(q);
      q0s.push_back(front_quantile(psi0, {xb + c.particles_pair_offset * m.packet.sigma[0], 0.0}));
    }
  } else if (!c.particles_q0.empty()) {
    q0s = c.particles_q0;
  } else {
    for (const auto& b : sample_ensemble(psi0, c.particles_count, c.seed))
      q0s.push_back(front_quantile(psi0, b.position));
  }

  const std::vector<MeasuredRun> runs = parallel_measured(m, q0s);
  std::vector<Trajectory> traj;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    traj.push_back(runs[i].trajectory);
    traj.back().id = static_cast<int>(i);
  }
  write_trajectories_csv(x.file("trajectories.csv"), traj, 2);
  write_events_csv(x.file("events.csv"), traj);
  write_records(x, runs);
  measured_common_checks(x, runs);

  // Oracle comparison on the q0 re-extracted from each placed particle.
  const int k = std::min(c.check_oracle_levels, c.measured_levels);
  double max_dev = 0.0;
  int mismatches = 0;
  std::optional<int> first_over;
  {
    auto out = open_csv(x.file("oracle.csv"));
    out << "run_id,level,q_sim,q_oracle,deviation,bit_sim,bit_oracle\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto sim = QuantileSequence::from_q(runs[i].q);
      const auto orc = QuantileSequence::oracle(runs[i].q0, static_cast<int>(sim.size()));
      const OracleComparison cmp = compare_sequences(sim, orc);
      for (std::size_t l = 0; l < sim.size(); ++l)
        out << i << ',' << l + 1 << ',' << sim.q[l] << ',' << orc.q[l] << ',' << cmp.deviation[l] << ','
            << sim.bits[l] << ',' << orc.bits[l] << '\n';
      for (int l = 0; l < k; ++l) {
        max_dev = std::max(max_dev, cmp.deviation[static_cast<std::size_t>(l)]);
        mismatches += sim.bits[static_cast<std::size_t>(l)] != orc.bits[static_cast<std::size_t>(l)];
      }
      if (auto f = cmp.first_exceeding(c.check_oracle_deviation); f && (!first_over || *f < *first_over))
        first_over = f;
    }
  }
  if (runs.size() <= 8) {
    auto& list = x.metric("sequences");
    for (const auto& r : runs) list.push_back({{"q0", r.q0}, {"bits", r.record.bits}, {"q", r.q}});
  }
  x.metric("first_level_over_oracle_tolerance") = first_over ? nlohmann::ordered_json(*first_over) : nullptr;
  if (k > 0) {
    x.metric("oracle_max_deviation") = max_dev;
    x.check("oracle_max_deviation", max_dev, "<=", c.check_oracle_deviation);
    x.check("oracle_bit_mismatches", mismatches, "==", 0);
  }

  auto report_pair = [&](const MeasuredRun& a, const MeasuredRun& b, const std::string& name) {
    const DivergenceReport rep =
        divergence_report(QuantileSequence::from_q(a.q), QuantileSequence::from_q(b.q));
    write_divergence_csv(x.file(name), rep);
    return rep;
  };
  if (paired) {
    auto out = open_csv(x.file("pairs.csv"));
    out << "pair,q0_a,q0_b,first_mismatch,hamming,lyapunov\n";
    int diverged = 0;
    const std::size_t n = runs.size() / 2;
    for (std::size_t p = 0; p < n; ++p) {
      std::ostringstream name;
      name << "divergence_" << std::setw(2) << std::setfill('0') << p << ".csv";
      const DivergenceReport rep = report_pair(runs[2 * p], runs[2 * p + 1], name.str());
      const int ham = rep.rows.empty() ? 0 : rep.rows.back().hamming;
      diverged += ham >= 1;
      out << p << ',' << runs[2 * p].q0 << ',' << runs[2 * p + 1].q0 << ','
          << (rep.first_mismatch ? std::to_string(*rep.first_mismatch) : "") << ',' << ham << ',' << rep.lyapunov
          << '\n';
    }
    const double frac = n ? static_cast<double>(diverged) / static_cast<double>(n) : 0.0;
    x.metric("diverged_fraction") = frac;
    if (c.check_min_diverged_fraction > 0.0) x.check("diverged_fraction", frac, ">=", c.check_min_diverged_fraction);
  } else if (runs.size() == 2) {
    const DivergenceReport rep = report_pair(runs[0], runs[1], "divergence.csv");
    x.metric("first_mismatch") = rep.first_mismatch ? nlohmann::ordered_json(*rep.first_mismatch) : nullptr;
    x.metric("lyapunov") = std::isnan(rep.lyapunov) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(rep.lyapunov);
  }
}

void run_ensemble_stats(Context& x) {
  const ScenarioConfig& c = x.cfg;
  const double h = height_for(x);

  // Equivariance: a |psi|^2-distributed ensemble stays |psi(t)|^2-distributed.
  const Grid g = c.grid();
  const PacketSpec p = c.packet();
  const Barrier bs[] = {{{0.0, 0.0}, h, c.barrier_width, 0.0}};
  const Wavefunction psi0 = gaussian_packet(g, p);
  std::vector<BohmParticle> ps = sample_ensemble(psi0, c.stats_ensemble, c.seed);
  LockstepEvolution ev(psi0, build_potential(bs, g), c.dt, 10.0 * p.momentum[0]);
  const double critical = ks_critical(c.check_ks_alpha, ps.size());
  double max_ks = 0.0;
  {
    auto out = open_csv(x.file("ks.csv"));
    out << "t,D,critical\n";
    auto test = [&] {
      std::vector<double> xs;
      for (const auto& b : ps) xs.push_back(b.position[0]);
      const double d = ks_statistic(std::move(xs), MarginalCdf(g, 0, density(ev.psi())));
      max_ks = std::max(max_ks, d);
      out << ev.time() << ',' << d << ',' << critical << '\n';
    };
    test();
    const long every = 10L * c.output_every / 2;
    long lock = 0;
    for (lock = 1; ev.time() < c.duration - 1e-12; ++lock)
      if (ev.step(ps), lock % every == 0) test();
    if ((lock - 1) % every != 0) test();
  }
  x.metric("ks_max") = max_ks;
  x.metric("ks_critical") = critical;
  x.check("ks_max", max_ks, "<=", critical);

  // Chaos statistics: pairs q0, q0 +- 2^-k through the measured pinball.
  MeasuredConfig m = measured_config(c, h);
  m.stop_when_alone = true;
  const double delta = std::ldexp(1.0, -c.stats_delta_exp);
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> uni(2.0 * delta, 1.0 - 2.0 * delta);
  std::vector<double> q0s;
  for (int i = 0; i < c.stats_pairs; ++i) {
    const double q = uni(rng);
    q0s.insert(q0s.end(), {q, q + delta, q - delta});
  }
  const std::vector<MeasuredRun> runs = parallel_measured(m, q0s);
  measured_common_checks(x, runs);

  const double none = c.measured_levels + 1;
  // Records of a pair run to the level where the two particles parted, so
  // they are compared over their common length.
  auto common = [](const MeasuredRun& a, const MeasuredRun& b) {
    const std::size_t n = std::min(a.q.size(), b.q.size());
    return std::pair{QuantileSequence::from_q({a.q.begin(), a.q.begin() + static_cast<std::ptrdiff_t>(n)}),
                     QuantileSequence::from_q({b.q.begin(), b.q.begin() + static_cast<std::ptrdiff_t>(n)})};
  };
  auto oracle_mismatch = [&](double q0, double q1) {
    const int n = c.measured_levels;
    const auto f = first_mismatch_level(QuantileSequence::oracle(q0, n).bits, QuantileSequence::oracle(q1, n).bits);
    return f ? *f : none;
  };
  std::vector<double> plus, minus, lyap, oracle_plus;
  int asymmetric = 0;
  auto out = open_csv(x.file("chaos_stats.csv"));
  out << "pair,q0,first_mismatch_plus,first_mismatch_minus,oracle_mismatch_plus,oracle_mismatch_minus,"
         "lyapunov_plus,lyapunov_minus\n";
  for (int i = 0; i < c.stats_pairs; ++i) {
    const MeasuredRun& base = runs[3 * i];
    double l[2] = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double f[2], o[2];
    for (int s = 0; s < 2; ++s) {
      const MeasuredRun& other = runs[3 * i + 1 + s];
      const auto [a, b] = common(base, other);
      const auto mm = first_mismatch_level(a.bits, b.bits);
      f[s] = mm ? *mm : none;
      o[s] = oracle_mismatch(base.q0, other.q0);
      try {
        l[s] = lyapunov_pair(a, b);
        lyap.push_back(l[s]);
      } catch (const Error&) {
      }
    }
    plus.push_back(f[0]);
    minus.push_back(f[1]);
    oracle_plus.push_back(o[0]);
    asymmetric += std::abs(f[0] - f[1]) > 1.0;
    out << i << ',' << base.q0 << ',' << f[0] << ',' << f[1] << ',' << o[0] << ',' << o[1] << ',' << l[0] << ','
        << l[1] << '\n';
  }
  double mean_lyap = 0.0;
  for (double l : lyap) mean_lyap += l;
  mean_lyap /= static_cast<double>(std::max<std::size_t>(1, lyap.size()));

  const double med_plus = median(plus), med_minus = median(minus);
  x.metric("delta") = delta;
  x.metric("median_first_mismatch") = med_plus;
  x.metric("median_first_mismatch_negated") = med_minus;
  x.metric("oracle_median_first_mismatch") = median(oracle_plus);
  x.metric("lyapunov_pairs") = lyap.size();
  x.metric("pairs_differing_by_more_than_one_level") = asymmetric;
  x.metric("lyapunov") = mean_lyap;
  x.check("median_first_mismatch_lo", med_plus, ">=", c.check_median_lo);
  x.check("median_first_mismatch_hi", med_plus, "<=", c.check_median_hi);
  x.check("abs_lyapunov_minus_ln2", std::abs(mean_lyap - std::numbers::ln2), "<=", c.check_lyapunov_tol);
  x.check("median_sensitivity_asymmetry", std::abs(med_plus - med_minus), "<=", 1.0);
}

}  // namespace

std::string sha256_hex(const std::string& data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.finish();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) h.update(buf, static_cast<std::size_t>(in.gcount()));
  return h.finish();
}

nlohmann::ordered_json to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["scenario"] = m.scenario;
  j["status"] = m.status;
  j["exit_code"] = m.exit_code;
  if (!m.error.empty()) j["error"] = m.error;
  j["version"] = m.version;
  j["config_sha256"] = m.config_hash;
  j["wall_time_s"] = m.wall_time;
  j["metrics"] = m.metrics;
  j["assertions"] = nlohmann::ordered_json::array();
  for (const auto& a : m.assertions)
    j["assertions"].push_back(
        {{"name", a.name}, {"value", a.value}, {"relation", a.relation}, {"limit", a.limit}, {"passed", a.passed}});
  j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& f : m.outputs) j["outputs"].push_back({{"file", f.name}, {"sha256", f.sha256}});
  return j;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  out << to_json(manifest).dump(2) << '\n';
}

int worker_threads() {
  if (const char* s = std::getenv("PINBALL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (end != s && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

CalibrationOutcome resolve_barrier_height(const ScenarioConfig& c, const std::filesystem::path& out_dir) {
  CalibrationOutcome o;
  if (c.barrier_height) {
    o.height = *c.barrier_height;
    o.source = "config";
    return o;
  }
  if (!c.calibration_file.empty()) {
    o.height = read_calibrated_height(c.base_dir / c.calibration_file);
    o.source = "file";
    return o;
  }
  // Only the motion normal to the barriers scatters, so the 2D barriers use
  // the 1D calibration along axis 0.
  const Grid g = Grid::line(c.grid_n[0], c.grid_length[0]);
  PacketSpec p;
  p.sigma = {c.packet_sigma[0], 1.0};
  p.momentum = {c.packet_momentum[0], 0.0};
  p.center = {c.dims() == 1 ? c.packet_center[0] : -8.0 * p.sigma[0], 0.0};
  CalibrationOptions opt;
  opt.target = c.calibration_target;
  opt.dt = c.dt;
  const CalibrationReport rep = calibrate_half_transmission(c.barrier_width, p, g, c.calibration_tol, opt);
  if (!out_dir.empty()) write_calibration_csv(out_dir / "calibration.csv", rep);
  o.height = rep.height;
  o.transmission = rep.transmission;
  o.reflection = rep.reflection;
  o.iterations = rep.iterations;
  o.source = "calibrated";
  return o;
}

RunManifest run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
  RunManifest m;
  m.scenario = to_string(config.kind);
  m.version = PINBALL_VERSION;
  const std::string echo = serialize(config);
  m.config_hash = sha256_hex(echo);
  const auto t0 = std::chrono::steady_clock::now();
  Context x{config, out_dir, m};
  try {
    {
      std::ofstream out(x.file("config.cfg"));
      out << echo;
    }
    switch (config.kind) {
      case ScenarioKind::Calibrate: run_calibrate(x); break;
      case ScenarioKind::SingleBarrier: run_single_barrier(x); break;
      case ScenarioKind::PinballUnitary: run_unitary(x); break;
      case ScenarioKind::PinballMeasured: run_measured(x); break;
      case ScenarioKind::EnsembleStats: run_ensemble_stats(x); break;
    }
    const bool ok = std::all_of(m.assertions.begin(), m.assertions.end(), [](const Assertion& a) { return a.passed; });
    m.exit_code = ok ? kExitOk : kExitAssertion;
    m.status = ok ? "ok" : "failed";
  } catch (const Error& e) {
    m.exit_code = e.kind() == ErrorKind::Config ? kExitConfig : kExitAbort;
    m.status = "failed";
    m.error = e.what();
  } catch (const std::exception& e) {
    m.exit_code = kExitAbort;
    m.status = "failed";
    m.error = e.what();
  }
  m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (auto& f : m.outputs)
    if (std::filesystem::exists(out_dir / f.name)) f.sha256 = sha256_file(out_dir / f.name);
  std::erase_if(m.outputs, [](const OutputFile& f) { return f.sha256.empty(); });
  write_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace pinball
