#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pinball/config.hpp"
#include "pinball/error.hpp"
#include "pinball/scenario.hpp"
#include "pinball/verify.hpp"

using namespace pinball;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("pinball_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("sha256 of known strings") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("calibrate scenario reports h* and passes its checks") {
  const fs::path out = fresh_dir("calibrate");
  const RunManifest m = run_scenario(parse_config("scenario = calibrate\n"), out);
  CHECK(m.exit_code == kExitOk);
  CHECK(m.status == "ok");
  CHECK(m.metrics.contains("barrier_height"));
  CHECK(std::abs(m.metrics["transmission"].get<double>() - 0.5) <= 1e-3);
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "calibration.csv"));
  const auto j = nlohmann::json::parse(slurp(out / "manifest.json"));
  for (const auto& f : j["outputs"]) CHECK(f["sha256"].get<std::string>() == sha256_file(out / f["file"].get<std::string>()));
  CHECK(j["config_sha256"] == sha256_hex(slurp(out / "config.cfg")));

  // A barrier height given in the config skips calibration.
  const ScenarioConfig fixed = parse_config("scenario = single_barrier\nbarrier.height = 50.77362060546875\nparticles.count = 20\n");
  CHECK(resolve_barrier_height(fixed).source == "config");
  spit(out / "h.cfg", "scenario = single_barrier\ncalibration.file = calibration.csv\n");
  const ScenarioConfig from_file = load_config(out / "h.cfg");
  const CalibrationOutcome o = resolve_barrier_height(from_file);
  CHECK(o.source == "file");
  CHECK(o.height == m.metrics["barrier_height"].get<double>());
}

TEST_CASE("measured pair emits a divergence report and reruns identically") {
  const ScenarioConfig c = parse_config(
      "scenario = pinball_measured\nbarrier.height = 50.77362060546875\nparticles.q0 = 0.3, 0.3009765625\n"
      "measured.levels = 10\n");
  const fs::path a = fresh_dir("pair_a"), b = fresh_dir("pair_b");
  const RunManifest ma = run_scenario(c, a);
  const RunManifest mb = run_scenario(c, b);
  CHECK(ma.exit_code == kExitOk);
  CHECK(fs::exists(a / "divergence.csv"));
  CHECK(fs::exists(a / "records.csv"));
  CHECK(ma.metrics.contains("first_mismatch"));
  CHECK(ma.metrics.dump() == mb.metrics.dump());
  for (const auto& f : ma.outputs) CHECK(slurp(a / f.name) == slurp(b / f.name));

  const VerifyReport self = verify_golden(a, b);
  CHECK(self.passed());
  CHECK(self.exceedances.empty());
  CHECK(self.files.size() >= 5);
}

TEST_CASE("verify names every cell beyond tolerance") {
  const fs::path gold = fresh_dir("gold"), out = fresh_dir("out");
  spit(gold / "a.csv", "t,x,label\n0,1.0,p\n1,2.0,q\n# lyapunov=0.69,first_mismatch=9\n");
  spit(gold / "tolerances.cfg", "# per column\na.csv:x = 1e-6\n* = 0\n");
  spit(out / "a.csv", "t,x,label\n0,1.0000001,p\n1,2.5,r\n# lyapunov=0.7,first_mismatch=9\n");
  const VerifyReport r = verify_golden(out, gold);
  CHECK_FALSE(r.passed());
  REQUIRE(r.exceedances.size() == 3);
  CHECK(r.exceedances[0].line == 3);
  CHECK(r.exceedances[0].column == "x");
  CHECK(r.exceedances[1].column == "label");
  CHECK(r.exceedances[2].column == "lyapunov");
  CHECK(r.summary().find("a.csv line 3 column x") != std::string::npos);

  spit(out / "a.csv", "t,x,label\n0,1.0000001,p\n1,2.0,q\n# lyapunov=0.69,first_mismatch=9\n");
  CHECK(verify_golden(out, gold).passed());

  spit(out / "a.csv", "t,y,label\n");
  CHECK_FALSE(verify_golden(out, gold).problems.empty());

  fs::remove(out / "a.csv");
  try {
    verify_golden(out, gold);
    FAIL("expected a missing file error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingFile);
  }
  CHECK_THROWS_AS(parse_tolerances("x.csv = -1\n"), Error);
  CHECK_THROWS_AS(parse_tolerances("no equals sign\n"), Error);
  CHECK(parse_tolerances("a.csv:x = 0.5\na.csv = 0.1\n").lookup("a.csv", "y") == 0.1);

  spit(gold / "l.csv", "id,q\n0,0.25;0.5\n");
  spit(out / "a.csv", slurp(gold / "a.csv"));
  spit(out / "l.csv", "id,q\n0,0.25;0.5000000001\n");
  spit(gold / "tolerances.cfg", "l.csv = 1e-6\n");
  CHECK(verify_golden(out, gold).passed());
  spit(out / "l.csv", "id,q\n0,0.25;0.6\n");
  CHECK(verify_golden(out, gold).exceedances.size() == 1);
  spit(out / "l.csv", "id,q\n0,0.25\n");
  CHECK(verify_golden(out, gold).exceedances.size() == 1);
}

TEST_CASE("module errors become a failed manifest with exit code 4") {
  const fs::path out = fresh_dir("abort");
  ScenarioConfig c = parse_config("scenario = single_barrier\nbarrier.height = 50\npacket.center = -30\n");
  const RunManifest m = run_scenario(c, out);
  CHECK(m.exit_code == kExitAbort);
  CHECK(m.status == "failed");
  CHECK_FALSE(m.error.empty());
  CHECK(fs::exists(out / "manifest.json"));
}

TEST_CASE("failed assertions give exit code 3") {
  const fs::path out = fresh_dir("assert");
  const ScenarioConfig c =
      parse_config("scenario = pinball_measured\nbarrier.height = 45\nparticles.q0 = 0.3\nmeasured.levels = 2\n"
                   "check.oracle_levels = 2\n");
  const RunManifest m = run_scenario(c, out);
  CHECK(m.exit_code == kExitAssertion);
}

TEST_CASE("thread cap from the environment") {
  setenv("PINBALL_THREADS", "3", 1);
  CHECK(worker_threads() == 3);
  setenv("PINBALL_THREADS", "zero", 1);
  CHECK(worker_threads() >= 1);
  unsetenv("PINBALL_THREADS");
}
