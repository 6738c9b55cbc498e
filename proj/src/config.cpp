#include "pinball/config.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "pinball/error.hpp"

namespace pinball {

namespace {

struct Bad : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end || s.empty()) throw Bad("'" + s + "' is not a valid number");
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(trim(item)));
  if (out.empty()) throw Bad("empty list");
  return out;
}

std::string format(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}
template <class T>
std::string format(T v) requires std::is_integral_v<T> {
  return std::to_string(v);
}
template <class T>
std::string format_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format(v[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<void(ScenarioConfig&, const std::string&)> set;
  std::function<std::string(const ScenarioConfig&)> get;
};

template <class T>
Field scalar(const char* key, T ScenarioConfig::*m) {
  return {key, [m](ScenarioConfig& c, const std::string& s) { c.*m = parse_number<T>(s); },
          [m](const ScenarioConfig& c) { return format(c.*m); }};
}

template <class T>
Field list(const char* key, std::vector<T> ScenarioConfig::*m) {
  return {key, [m](ScenarioConfig& c, const std::string& s) { c.*m = parse_list<T>(s); },
          [m](const ScenarioConfig& c) { return format_list(c.*m); }};
}

const std::map<std::string, ScenarioKind>& kinds() {
  static const std::map<std::string, ScenarioKind> m{
      {"calibrate", ScenarioKind::Calibrate},
      {"single_barrier", ScenarioKind::SingleBarrier},
      {"pinball_unitary", ScenarioKind::PinballUnitary},
      {"pinball_measured", ScenarioKind::PinballMeasured},
      {"ensemble_stats", ScenarioKind::EnsembleStats},
  };
  return m;
}

const std::vector<Field>& fields() {
  using C = ScenarioConfig;
  static const std::vector<Field> f{
      {"scenario",
       [](C& c, const std::string& s) {
         const auto it = kinds().find(s);
         if (it == kinds().end())
           throw Bad("unknown scenario '" + s +
                     "' (calibrate, single_barrier, pinball_unitary, pinball_measured, ensemble_stats)");
         c.kind = it->second;
       },
       [](const C& c) { return std::string(to_string(c.kind)); }},
      scalar("seed", &C::seed),
      scalar("dt", &C::dt),
      scalar("output.every", &C::output_every),
      list("grid.n", &C::grid_n),
      list("grid.length", &C::grid_length),
      list("packet.center", &C::packet_center),
      list("packet.momentum", &C::packet_momentum),
      list("packet.sigma", &C::packet_sigma),
      scalar("barrier.width", &C::barrier_width),
      {"barrier.height",
       [](C& c, const std::string& s) {
         if (s == "auto")
           c.barrier_height.reset();
         else
           c.barrier_height = parse_number<double>(s);
       },
       [](const C& c) { return c.barrier_height ? format(*c.barrier_height) : std::string("auto"); }},
      scalar("barrier.half_length", &C::barrier_half_length),
      {"calibration.file", [](C& c, const std::string& s) { c.calibration_file = s; },
       [](const C& c) { return c.calibration_file; }},
      scalar("calibration.tol", &C::calibration_tol),
      scalar("calibration.target", &C::calibration_target),
      scalar("geometry.levels", &C::geometry_levels),
      scalar("geometry.row_spacing", &C::geometry_row_spacing),
      scalar("geometry.pitch", &C::geometry_pitch),
      list("geometry.apex", &C::geometry_apex),
      scalar("duration", &C::duration),
      scalar("leak_tol", &C::leak_tol),
      scalar("particles.count", &C::particles_count),
      {"particles.q0", [](C& c, const std::string& s) { c.particles_q0 = s.empty() ? std::vector<double>{} : parse_list<double>(s); },
       [](const C& c) { return format_list(c.particles_q0); }},
      scalar("particles.pairs", &C::particles_pairs),
      scalar("particles.pair_offset", &C::particles_pair_offset),
      scalar("measured.levels", &C::measured_levels),
      scalar("measured.eps_sep", &C::measured_eps_sep),
      scalar("measured.launch_sigmas", &C::measured_launch_sigmas),
      scalar("stats.pairs", &C::stats_pairs),
      scalar("stats.delta_exp", &C::stats_delta_exp),
      scalar("stats.ensemble", &C::stats_ensemble),
      scalar("check.norm_drift", &C::check_norm_drift),
      scalar("check.front_band", &C::check_front_band),
      scalar("check.oracle_deviation", &C::check_oracle_deviation),
      scalar("check.oracle_levels", &C::check_oracle_levels),
      scalar("check.max_separation_ratio", &C::check_max_separation_ratio),
      scalar("check.min_diverged_fraction", &C::check_min_diverged_fraction),
      scalar("check.ks_alpha", &C::check_ks_alpha),
      scalar("check.median_lo", &C::check_median_lo),
      scalar("check.median_hi", &C::check_median_hi),
      scalar("check.lyapunov_tol", &C::check_lyapunov_tol),
  };
  return f;
}

void fill_defaults(ScenarioConfig& c) {
  const bool two = c.dims() == 2;
  // Deep measured runs broaden the packet; the longer line keeps stray
  // reflected mass from wrapping into the next level.
  const bool deep = c.kind == ScenarioKind::PinballMeasured || c.kind == ScenarioKind::EnsembleStats;
  if (c.grid_n.empty())
    c.grid_n = two ? std::vector<std::size_t>{1024, 512} : std::vector<std::size_t>{deep ? 2048u : 1024u};
  if (c.grid_length.empty()) c.grid_length = two ? std::vector<double>{64, 64} : std::vector<double>{deep ? 128.0 : 64.0};
  if (c.packet_center.empty()) c.packet_center = two ? std::vector<double>{-6, -10} : std::vector<double>{-8};
  if (c.packet_momentum.empty()) c.packet_momentum = two ? std::vector<double>{10, 10} : std::vector<double>{10};
  if (c.packet_sigma.empty()) c.packet_sigma = two ? std::vector<double>{1, 1} : std::vector<double>{1};
  if (c.duration == 0.0) {
    if (two)
      c.duration = 2.0;
    else if (c.kind == ScenarioKind::SingleBarrier || c.kind == ScenarioKind::EnsembleStats)
      // Both lobes end as far from the barrier as the packet started.
      c.duration = c.packet_momentum[0] != 0.0 ? 2.0 * std::abs(c.packet_center[0]) / std::abs(c.packet_momentum[0]) : 0.0;
  }
}

void validate(const ScenarioConfig& c, std::vector<std::string>& errors) {
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  const std::size_t d = static_cast<std::size_t>(c.dims());
  need(c.dt > 0.0, "dt: must be > 0");
  need(c.output_every >= 2 && c.output_every % 2 == 0, "output.every: must be an even number >= 2");
  need(c.grid_n.size() == d, "grid.n: needs " + std::to_string(d) + " value(s)");
  for (auto n : c.grid_n) need(n >= 64 && std::has_single_bit(n), "grid.n: each entry must be a power of two >= 64");
  need(c.grid_length.size() == d, "grid.length: needs " + std::to_string(d) + " value(s)");
  for (double l : c.grid_length) need(l > 0.0, "grid.length: must be > 0");
  need(c.packet_center.size() == d, "packet.center: needs " + std::to_string(d) + " value(s)");
  need(c.packet_momentum.size() == d, "packet.momentum: needs " + std::to_string(d) + " value(s)");
  need(c.packet_sigma.size() == d, "packet.sigma: needs " + std::to_string(d) + " value(s)");
  for (double s : c.packet_sigma) need(s > 0.0, "packet.sigma: must be > 0");
  if (!c.packet_momentum.empty()) need(c.packet_momentum[0] > 0.0, "packet.momentum: axis-0 component must be > 0");
  need(c.barrier_width > 0.0, "barrier.width: must be > 0");
  if (c.barrier_height) need(*c.barrier_height >= 0.0, "barrier.height: must be >= 0 or 'auto'");
  need(c.barrier_half_length >= 0.0, "barrier.half_length: must be >= 0");
  need(c.calibration_tol >= 1e-3, "calibration.tol: must be >= 1e-3");
  need(c.calibration_target > 0.0 && c.calibration_target < 1.0, "calibration.target: must be in (0, 1)");
  if (!c.calibration_file.empty())
    need(std::filesystem::exists(c.base_dir / c.calibration_file),
         "calibration.file: " + (c.base_dir / c.calibration_file).string() + " does not exist");
  need(c.geometry_levels >= 1 && c.geometry_levels <= 3, "geometry.levels: must be in [1, 3]");
  need(c.geometry_row_spacing > 0.0, "geometry.row_spacing: must be > 0");
  need(c.geometry_pitch > 4.0 * c.barrier_width, "geometry.pitch: must exceed 4 barrier widths");
  need(c.geometry_apex.size() == 2, "geometry.apex: needs 2 values");
  need(c.duration >= 0.0, "duration: must be >= 0");
  need(c.leak_tol > 0.0, "leak_tol: must be > 0");
  need(c.particles_count >= 1, "particles.count: must be >= 1");
  for (double q : c.particles_q0) need(q > 0.0 && q < 1.0, "particles.q0: each entry must be in (0, 1)");
  need(c.particles_pairs >= 0, "particles.pairs: must be >= 0");
  need(c.particles_pair_offset > 0.0, "particles.pair_offset: must be > 0");
  need(c.measured_levels >= 1 && c.measured_levels <= 16, "measured.levels: must be in [1, 16]");
  need(c.measured_eps_sep > 0.0 && c.measured_eps_sep < 1.0, "measured.eps_sep: must be in (0, 1)");
  need(c.measured_launch_sigmas >= 5.0, "measured.launch_sigmas: must be >= 5");
  need(c.stats_pairs >= 1, "stats.pairs: must be >= 1");
  need(c.stats_delta_exp >= 1 && c.stats_delta_exp <= 40, "stats.delta_exp: must be in [1, 40]");
  need(c.stats_ensemble >= 1, "stats.ensemble: must be >= 1");
  need(c.check_norm_drift > 0.0, "check.norm_drift: must be > 0");
  need(c.check_front_band >= 0.0 && c.check_front_band < 0.5, "check.front_band: must be in [0, 0.5)");
  need(c.check_oracle_deviation > 0.0, "check.oracle_deviation: must be > 0");
  need(c.check_oracle_levels >= 0, "check.oracle_levels: must be >= 0");
  need(c.check_max_separation_ratio >= 0.0, "check.max_separation_ratio: must be >= 0");
  need(c.check_min_diverged_fraction >= 0.0 && c.check_min_diverged_fraction <= 1.0,
       "check.min_diverged_fraction: must be in [0, 1]");
  need(c.check_ks_alpha > 0.0 && c.check_ks_alpha < 1.0, "check.ks_alpha: must be in (0, 1)");
  need(c.check_median_lo <= c.check_median_hi, "check.median_lo: must be <= check.median_hi");
  need(c.check_lyapunov_tol > 0.0, "check.lyapunov_tol: must be > 0");
}

}  // namespace

const char* to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::Calibrate: return "calibrate";
    case ScenarioKind::SingleBarrier: return "single_barrier";
    case ScenarioKind::PinballUnitary: return "pinball_unitary";
    case ScenarioKind::PinballMeasured: return "pinball_measured";
    case ScenarioKind::EnsembleStats: return "ensemble_stats";
  }
  return "?";
}

Grid ScenarioConfig::grid() const {
  if (dims() == 2) return Grid::plane(grid_n[0], grid_n[1], grid_length[0], grid_length[1]);
  return Grid::line(grid_n[0], grid_length[0]);
}

PacketSpec ScenarioConfig::packet() const {
  PacketSpec p;
  for (int a = 0; a < dims(); ++a) {
    p.center[a] = packet_center[a];
    p.momentum[a] = packet_momentum[a];
    p.sigma[a] = packet_sigma[a];
  }
  if (dims() == 1) p.sigma[1] = 1.0;
  return p;
}

PinballGeometry ScenarioConfig::geometry(double height) const {
  PinballGeometry g;
  g.levels = geometry_levels;
  g.row_spacing = geometry_row_spacing;
  g.pitch = geometry_pitch;
  g.apex = {geometry_apex[0], geometry_apex[1]};
  g.barrier = {{0.0, 0.0}, height, barrier_width, barrier_half_length};
  return g;
}

ScenarioConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  std::map<std::string, const Field*> table;
  for (const Field& f : fields()) table[f.key] = &f;

  ScenarioConfig c;
  c.base_dir = base_dir;
  std::vector<std::string> errors;
  std::map<std::string, int> seen;
  std::vector<std::pair<const Field*, std::pair<int, std::string>>> assignments;

  std::istringstream in(text);
  std::string raw;
  for (int line_no = 1; std::getline(in, raw); ++line_no) {
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + "expected key = value");
      continue;
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) {
      errors.push_back(where + "unknown key '" + key + "'");
      continue;
    }
    if (auto [s, fresh] = seen.emplace(key, line_no); !fresh) {
      errors.push_back(where + key + ": already set on line " + std::to_string(s->second));
      continue;
    }
    assignments.push_back({it->second, {line_no, value}});
  }
  if (!seen.count("scenario")) errors.push_back("scenario: missing (required)");

  // The scenario decides the defaults, so it is applied before anything else.
  std::stable_partition(assignments.begin(), assignments.end(),
                        [](const auto& a) { return std::string(a.first->key) == "scenario"; });
  for (const auto& [field, lv] : assignments) {
    try {
      field->set(c, lv.second);
    } catch (const Bad& e) {
      errors.push_back("line " + std::to_string(lv.first) + ": " + field->key + ": " + e.what());
    }
  }
  fill_defaults(c);
  validate(c, errors);
  if (!errors.empty()) {
    std::string msg = "invalid config";
    for (const auto& e : errors) msg += "\n  " + e;
    throw Error(ErrorKind::Config, msg);
  }
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string serialize(const ScenarioConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace pinball
