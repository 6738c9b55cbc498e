#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pinball {

/// 2x mod 1 on [0, 1).
double bernoulli_step(double x);

/// 1 (transmitted) when 0 < q <= 1/2. q = 0 is the same point as q = 1,
/// the back end of the packet, so it reflects.
int front_bit(double q);

/// First n bits of the orbit of x0 under bernoulli_step.
std::string symbolic_path(double x0, int n);

struct QuantileSequence {
  std::vector<double> q;
  std::string bits;

  /// Derives bits from q with front_bit.
  static QuantileSequence from_q(std::vector<double> q);
  /// Exact orbit x0, 2 x0 mod 1, ... of length n.
  static QuantileSequence oracle(double x0, int n);

  std::size_t size() const { return q.size(); }
};

/// Distance on the circle [0, 1) with 0 identified with 1.
double circular_distance(double a, double b);

/// Mean log |f'| along the oracle orbit; ln 2 for any seed. Needs >= 8 levels.
double lyapunov_oracle(const QuantileSequence& seq);

/// Mean one-level growth of ln |dq| for two nearby sequences, taken over
/// the levels before their bits first disagree (the mismatch level itself
/// still counts, since both q are read before that scattering). Needs >= 8
/// levels and at least one usable step.
double lyapunov_pair(const QuantileSequence& a, const QuantileSequence& b);

/// Least-squares slope of ln(sep) against t. Zero separations are skipped.
double log_separation_slope(std::span<const double> t, std::span<const double> sep);

/// 1-based level of the first differing bit, or nullopt.
std::optional<int> first_mismatch_level(const std::string& a, const std::string& b);

/// Lattice node after each level is the number of transmissions so far; the
/// Hamming distance counts levels at which the two paths sit on different
/// nodes.
int path_hamming(const std::string& a, const std::string& b);

struct OracleComparison {
  std::vector<double> deviation;  // circular |q_sim - q_oracle| per level
  double max_deviation = 0.0;
  std::optional<int> first_mismatch;
  /// First 1-based level at which deviation exceeds `flag`, if any.
  std::optional<int> first_exceeding(double flag) const;
};

OracleComparison compare_sequences(const QuantileSequence& simulated, const QuantileSequence& oracle);
OracleComparison compare_to_oracle(const QuantileSequence& simulated, double x0);

struct DivergenceRow {
  int level = 0;
  double q_a = 0.0;
  double q_b = 0.0;
  double dq = 0.0;
  char bit_a = '0';
  char bit_b = '0';
  int hamming = 0;  // cumulative path distance up to this level
};

struct DivergenceReport {
  std::vector<DivergenceRow> rows;
  std::optional<int> first_mismatch;
  /// NaN when the sequences are too short for an estimate.
  double lyapunov = 0.0;
};

DivergenceReport divergence_report(const QuantileSequence& a, const QuantileSequence& b);

/// Header `level,q_a,q_b,abs_dq,bit_a,bit_b,hamming`, then a `#` summary line.
void write_divergence_csv(const std::filesystem::path& path, const DivergenceReport& report);

}  // namespace pinball
