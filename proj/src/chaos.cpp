#include "pinball/chaos.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "pinball/error.hpp"

namespace pinball {

namespace {

constexpr std::size_t kMinLevels = 8;

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b)
    throw Error(ErrorKind::LengthMismatch,
                "sequence lengths differ: " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

double bernoulli_step(double x) {
  if (!(x >= 0.0 && x < 1.0)) throw Error(ErrorKind::InvalidArgument, "bernoulli_step needs x in [0, 1)");
  // Doubling is exact in binary floating point; the subtraction is too.
  const double y = 2.0 * x;
  return y >= 1.0 ? y - 1.0 : y;
}

int front_bit(double q) { return q > 0.0 && q <= 0.5 ? 1 : 0; }

std::string symbolic_path(double x0, int n) { return QuantileSequence::oracle(x0, n).bits; }

QuantileSequence QuantileSequence::from_q(std::vector<double> q) {
  QuantileSequence s;
  s.bits.reserve(q.size());
  for (double v : q) s.bits.push_back(front_bit(v) ? '1' : '0');
  s.q = std::move(q);
  return s;
}

QuantileSequence QuantileSequence::oracle(double x0, int n) {
  if (n < 0) throw Error(ErrorKind::InvalidArgument, "sequence length must be >= 0");
  std::vector<double> q;
  q.reserve(static_cast<std::size_t>(n));
  double x = x0;
  for (int i = 0; i < n; ++i) {
    q.push_back(x);
    if (i + 1 < n) x = bernoulli_step(x);
  }
  return from_q(std::move(q));
}

double circular_distance(double a, double b) {
  const double d = std::abs(a - b);
  const double f = d - std::floor(d);
  return std::min(f, 1.0 - f);
}

double lyapunov_oracle(const QuantileSequence& seq) {
  if (seq.size() < kMinLevels) throw Error(ErrorKind::SequenceTooShort, "need at least 8 levels");
  // |d/dx (2x mod 1)| = 2 on every branch.
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) sum += std::log(2.0);
  return sum / static_cast<double>(seq.size() - 1);
}

double lyapunov_pair(const QuantileSequence& a, const QuantileSequence& b) {
  require_same_length(a.size(), b.size());
  if (a.size() < kMinLevels) throw Error(ErrorKind::SequenceTooShort, "need at least 8 levels");
  const auto split = first_mismatch_level(a.bits, b.bits);
  const std::size_t last = split ? static_cast<std::size_t>(*split - 1) : a.size() - 1;
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < last; ++i) {
    const double d0 = circular_distance(a.q[i], b.q[i]);
    const double d1 = circular_distance(a.q[i + 1], b.q[i + 1]);
    if (d0 <= 0.0 || d1 <= 0.0) continue;
    sum += std::log(d1 / d0);
    ++count;
  }
  if (count == 0) throw Error(ErrorKind::SequenceTooShort, "no usable levels before the split");
  return sum / count;
}

double log_separation_slope(std::span<const double> t, std::span<const double> sep) {
  require_same_length(t.size(), sep.size());
  double st = 0, sy = 0, stt = 0, sty = 0;
  int n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(sep[i] > 0.0)) continue;
    const double y = std::log(sep[i]);
    st += t[i];
    sy += y;
    stt += t[i] * t[i];
    sty += t[i] * y;
    ++n;
  }
  if (n < 2) throw Error(ErrorKind::SequenceTooShort, "need two positive separations");
  const double den = n * stt - st * st;
  if (den == 0.0) throw Error(ErrorKind::InvalidArgument, "sample times are all equal");
  return (n * sty - st * sy) / den;
}

std::optional<int> first_mismatch_level(const std::string& a, const std::string& b) {
  require_same_length(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return static_cast<int>(i + 1);
  return std::nullopt;
}

int path_hamming(const std::string& a, const std::string& b) {
  require_same_length(a.size(), b.size());
  int node_a = 0, node_b = 0, h = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    node_a += a[i] == '1';
    node_b += b[i] == '1';
    h += node_a != node_b;
  }
  return h;
}

std::optional<int> OracleComparison::first_exceeding(double flag) const {
  for (std::size_t i = 0; i < deviation.size(); ++i)
    if (deviation[i] > flag) return static_cast<int>(i + 1);
  return std::nullopt;
}

OracleComparison compare_sequences(const QuantileSequence& simulated, const QuantileSequence& oracle) {
  require_same_length(simulated.size(), oracle.size());
  require_same_length(simulated.bits.size(), simulated.q.size());
  OracleComparison c;
  for (std::size_t i = 0; i < simulated.size(); ++i) {
    c.deviation.push_back(circular_distance(simulated.q[i], oracle.q[i]));
    c.max_deviation = std::max(c.max_deviation, c.deviation.back());
  }
  c.first_mismatch = first_mismatch_level(simulated.bits, oracle.bits);
  return c;
}

OracleComparison compare_to_oracle(const QuantileSequence& simulated, double x0) {
  return compare_sequences(simulated, QuantileSequence::oracle(x0, static_cast<int>(simulated.size())));
}

DivergenceReport divergence_report(const QuantileSequence& a, const QuantileSequence& b) {
  require_same_length(a.size(), b.size());
  DivergenceReport r;
  int node_a = 0, node_b = 0, h = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    node_a += a.bits[i] == '1';
    node_b += b.bits[i] == '1';
    h += node_a != node_b;
    r.rows.push_back({static_cast<int>(i + 1), a.q[i], b.q[i], circular_distance(a.q[i], b.q[i]), a.bits[i],
                      b.bits[i], h});
  }
  r.first_mismatch = first_mismatch_level(a.bits, b.bits);
  try {
    r.lyapunov = lyapunov_pair(a, b);
  } catch (const Error&) {
    r.lyapunov = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

void write_divergence_csv(const std::filesystem::path& path, const DivergenceReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  out << std::setprecision(17);
  out << "level,q_a,q_b,abs_dq,bit_a,bit_b,hamming\n";
  for (const auto& r : report.rows)
    out << r.level << ',' << r.q_a << ',' << r.q_b << ',' << r.dq << ',' << r.bit_a << ',' << r.bit_b << ','
        << r.hamming << '\n';
  out << "# lyapunov=" << report.lyapunov
      << ",first_mismatch=" << (report.first_mismatch ? std::to_string(*report.first_mismatch) : "none") << '\n';
}

}  // namespace pinball
