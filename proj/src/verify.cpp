#include "pinball/verify.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

#include "pinball/error.hpp"

namespace pinball {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<double> number(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || p != end) return std::nullopt;
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

// Cells of a '#' line as (key, value) pairs.
std::vector<std::pair<std::string, std::string>> comment_cells(const std::string& line) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& c : split(trim(std::string_view(line).substr(1)))) {
    const auto eq = c.find('=');
    if (eq == std::string::npos) out.emplace_back(trim(c), "");
    else out.emplace_back(trim(c.substr(0, eq)), trim(c.substr(eq + 1)));
  }
  return out;
}

void compare_cell(VerifyReport& rep, const ToleranceTable& tol, const std::string& file, std::size_t line,
                  const std::string& column, const std::string& golden, const std::string& actual) {
  if (golden == actual) return;
  const double t = tol.lookup(file, column);
  // Cells may hold ';'-separated lists, compared element by element.
  std::vector<std::string> gs, as;
  for (auto [src, dst] : {std::pair{&golden, &gs}, std::pair{&actual, &as}}) {
    std::stringstream ss(*src);
    for (std::string item; std::getline(ss, item, ';');) dst->push_back(item);
  }
  double diff = std::numeric_limits<double>::quiet_NaN();
  if (gs.size() == as.size() && !gs.empty()) {
    double worst = 0.0;
    bool numeric = true;
    for (std::size_t i = 0; i < gs.size() && numeric; ++i) {
      if (gs[i] == as[i]) continue;
      const auto g = number(gs[i]), a = number(as[i]);
      if (!g || !a) numeric = false;
      else if (!(std::isnan(*g) && std::isnan(*a))) worst = std::max(worst, std::abs(*g - *a));
    }
    if (numeric) {
      if (worst <= t) return;
      diff = worst;
    }
  }
  rep.exceedances.push_back({file, line, column, golden, actual, diff, t});
}

void compare_file(VerifyReport& rep, const ToleranceTable& tol, const std::string& name,
                  const std::vector<std::string>& golden, const std::vector<std::string>& actual) {
  if (golden.empty()) return;
  if (actual.empty() || actual.front() != golden.front()) {
    rep.problems.push_back(name + ": header differs");
    return;
  }
  if (actual.size() != golden.size()) {
    std::ostringstream os;
    os << name << ": " << actual.size() << " lines, golden has " << golden.size();
    rep.problems.push_back(os.str());
  }
  const std::vector<std::string> header = split(golden.front());
  const std::size_t n = std::min(golden.size(), actual.size());
  for (std::size_t l = 1; l < n; ++l) {
    const std::string& gl = golden[l];
    const std::string& al = actual[l];
    if (!gl.empty() && gl.front() == '#') {
      const auto gc = comment_cells(gl), ac = comment_cells(al.empty() || al.front() != '#' ? "#" : al);
      if (gc.size() != ac.size()) {
        rep.problems.push_back(name + ": line " + std::to_string(l + 1) + " differs in shape");
        continue;
      }
      for (std::size_t c = 0; c < gc.size(); ++c) {
        if (gc[c].first != ac[c].first) {
          rep.problems.push_back(name + ": line " + std::to_string(l + 1) + " key '" + ac[c].first + "'");
          continue;
        }
        compare_cell(rep, tol, name, l + 1, gc[c].first, gc[c].second, ac[c].second);
      }
      continue;
    }
    const auto gc = split(gl), ac = split(al);
    if (gc.size() != ac.size()) {
      rep.problems.push_back(name + ": line " + std::to_string(l + 1) + " has " + std::to_string(ac.size()) +
                             " cells, golden has " + std::to_string(gc.size()));
      continue;
    }
    for (std::size_t c = 0; c < gc.size(); ++c)
      compare_cell(rep, tol, name, l + 1, c < header.size() ? header[c] : std::to_string(c), gc[c], ac[c]);
  }
}

}  // namespace

double ToleranceTable::lookup(const std::string& file, const std::string& column) const {
  for (const std::string& key : {file + ":" + column, file, std::string("*")})
    if (auto it = entries.find(key); it != entries.end()) return it->second;
  return 0.0;
}

ToleranceTable parse_tolerances(const std::string& text) {
  ToleranceTable t;
  std::vector<std::string> errors;
  std::stringstream ss(text);
  std::size_t n = 0;
  for (std::string raw; std::getline(ss, raw);) {
    ++n;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string key = eq == std::string::npos ? "" : trim(line.substr(0, eq));
    const auto v = eq == std::string::npos ? std::nullopt : number(trim(line.substr(eq + 1)));
    if (key.empty() || !v || !(*v >= 0.0)) {
      errors.push_back("tolerances line " + std::to_string(n) + ": expected 'key = non-negative number'");
      continue;
    }
    t.entries[key] = *v;
  }
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
    throw Error(ErrorKind::Config, msg);
  }
  return t;
}

std::string VerifyReport::summary() const {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& p : problems) os << "MISMATCH " << p << '\n';
  for (const auto& e : exceedances) {
    os << "EXCEEDS " << e.file << " line " << e.line << " column " << e.column << ": golden " << e.golden
       << ", actual " << e.actual;
    if (!std::isnan(e.difference)) os << ", |diff| " << e.difference << " > " << e.tolerance;
    os << '\n';
  }
  os << (passed() ? "PASS" : "FAIL") << ": " << files.size() << " files, " << exceedances.size()
     << " exceedances, " << problems.size() << " structural mismatches\n";
  return os.str();
}

VerifyReport verify_golden(const std::filesystem::path& output_dir, const std::filesystem::path& golden_dir) {
  for (const auto& d : {output_dir, golden_dir})
    if (!std::filesystem::is_directory(d)) throw Error(ErrorKind::MissingFile, d.string() + " is not a directory");
  ToleranceTable tol;
  if (const auto tf = golden_dir / "tolerances.cfg"; std::filesystem::exists(tf)) {
    std::ifstream in(tf);
    std::stringstream ss;
    ss << in.rdbuf();
    tol = parse_tolerances(ss.str());
  }
  VerifyReport rep;
  for (const auto& entry : std::filesystem::directory_iterator(golden_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") rep.files.push_back(entry.path().filename().string());
  std::sort(rep.files.begin(), rep.files.end());
  for (const std::string& name : rep.files) {
    if (!std::filesystem::exists(output_dir / name))
      throw Error(ErrorKind::MissingFile, (output_dir / name).string() + " (present in golden set)");
    compare_file(rep, tol, name, read_lines(golden_dir / name), read_lines(output_dir / name));
  }
  return rep;
}

}  // namespace pinball
