#include <doctest.h>

#include <random>
#include <sstream>

#include "pinball/config.hpp"
#include "pinball/error.hpp"

using namespace pinball;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    return e.what();
  }
  FAIL("config parsed: " << text);
  return {};
}

// A random valid config written in the key = value format, with keys in
// random order and a random subset of keys left at their defaults.
std::string random_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pick = [&](double p) { return u(rng) < p; };
  const char* kinds[] = {"calibrate", "single_barrier", "pinball_unitary", "pinball_measured", "ensemble_stats"};
  const std::string kind = kinds[rng() % 5];
  const bool two = kind == "pinball_unitary";
  std::vector<std::string> lines;
  auto add = [&](const std::string& k, const std::string& v) {
    if (pick(0.6)) lines.push_back(k + " = " + v);
  };
  auto num = [&](double lo, double hi) {
    std::ostringstream os;
    os.precision(17);
    os << lo + (hi - lo) * u(rng);
    return os.str();
  };
  add("seed", std::to_string(rng() % 100000));
  add("dt", num(1e-4, 2e-3));
  add("output.every", std::to_string(2 * (1 + rng() % 10)));
  add("grid.n", two ? "512, 256" : std::to_string(1024 << (rng() % 2)));
  add("grid.length", two ? num(40, 80) + "," + num(40, 80) : num(60, 140));
  add("packet.sigma", two ? num(0.8, 1.5) + "," + num(0.8, 1.5) : num(0.8, 1.5));
  add("packet.momentum", two ? "10,10" : num(8, 12));
  add("barrier.width", num(0.2, 0.4));
  add("barrier.height", pick(0.5) ? "auto" : num(0, 100));
  add("barrier.half_length", num(1, 3));
  add("calibration.tol", num(1e-3, 1e-2));
  add("calibration.target", num(0.3, 0.7));
  add("geometry.levels", std::to_string(1 + rng() % 3));
  add("geometry.apex", num(-1, 1) + "," + num(-5, -3));
  add("duration", num(0.5, 3));
  add("particles.count", std::to_string(1 + rng() % 500));
  if (pick(0.5)) add("particles.q0", num(0.01, 0.5) + ", " + num(0.5, 0.99));
  add("particles.pairs", std::to_string(rng() % 30));
  add("measured.levels", std::to_string(1 + rng() % 16));
  add("measured.eps_sep", num(1e-6, 1e-3));
  add("stats.pairs", std::to_string(1 + rng() % 60));
  add("check.ks_alpha", num(0.001, 0.1));
  add("check.median_lo", "8");
  add("check.lyapunov_tol", num(0.01, 0.5));
  std::shuffle(lines.begin(), lines.end(), rng);
  lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(rng() % (lines.size() + 1)), "scenario = " + kind);
  std::string text = "# generated\n";
  for (const auto& l : lines) text += l + "\n";
  return text;
}

}  // namespace

TEST_CASE("minimal calibrate config fills defaults and echoes them") {
  const ScenarioConfig c = parse_config("scenario = calibrate\n");
  CHECK(c.kind == ScenarioKind::Calibrate);
  CHECK(c.grid_n == std::vector<std::size_t>{1024});
  CHECK(c.packet_sigma == std::vector<double>{1.0});
  CHECK_FALSE(c.barrier_height);
  const std::string echo = serialize(c);
  CHECK(echo.find("barrier.height = auto") != std::string::npos);
  CHECK(echo.find("packet.momentum = 10") != std::string::npos);
  CHECK(parse_config(echo) == c);
}

TEST_CASE("per-kind defaults") {
  const ScenarioConfig u = parse_config("scenario = pinball_unitary");
  CHECK(u.grid_n == std::vector<std::size_t>{1024, 512});
  CHECK(u.grid_length == std::vector<double>{64, 64});
  CHECK(u.duration == 2.0);
  const ScenarioConfig m = parse_config("scenario = pinball_measured");
  CHECK(m.grid_n == std::vector<std::size_t>{2048});
  const ScenarioConfig s = parse_config("scenario = single_barrier");
  CHECK(s.duration == doctest::Approx(1.6));
}

TEST_CASE("config errors name the field and the constraint") {
  const std::string neg = config_error("scenario = single_barrier\npacket.sigma = -1\n");
  CHECK(neg.find("packet.sigma") != std::string::npos);
  CHECK(neg.find("> 0") != std::string::npos);
  CHECK(config_error("scenario = calibrate\ncolour = red\n").find("unknown key 'colour'") != std::string::npos);
  CHECK(config_error("dt = 0.001\n").find("scenario") != std::string::npos);
  CHECK(config_error("scenario = calibrate\ndt = 1\ndt = 2\n").find("already set") != std::string::npos);
  CHECK(config_error("scenario = warp\n").find("warp") != std::string::npos);
  CHECK(config_error("scenario = calibrate\ndt = fast\n").find("dt") != std::string::npos);
  CHECK(config_error("scenario = calibrate\ncalibration.file = nowhere.csv\n").find("does not exist") !=
        std::string::npos);
}

TEST_CASE("every problem is reported at once") {
  const std::string all =
      config_error("scenario = single_barrier\npacket.sigma = -1\ndt = -2\nbogus = 1\nmeasured.levels = 40\n");
  for (const char* key : {"packet.sigma", "dt", "bogus", "measured.levels"}) CHECK(all.find(key) != std::string::npos);
}

TEST_CASE("round trip over generated configs") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 300; ++i) {
    const std::string text = random_config(rng);
    INFO(text);
    const ScenarioConfig c = parse_config(text);
    const std::string echo = serialize(c);
    const ScenarioConfig back = parse_config(echo);
    CHECK(back == c);
    CHECK(serialize(back) == echo);
  }
}
