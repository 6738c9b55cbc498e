#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pinball {

/// Absolute tolerances keyed by "file:column", "file" or "*"; the most
/// specific key wins and anything unlisted must match exactly.
struct ToleranceTable {
  std::map<std::string, double> entries;

  double lookup(const std::string& file, const std::string& column) const;
};

/// Reads `key = tol` lines ('#' starts a comment). Throws Config on a
/// malformed line or a negative tolerance.
ToleranceTable parse_tolerances(const std::string& text);

struct Exceedance {
  std::string file;
  std::size_t line = 0;  // 1-based, header is line 1
  std::string column;
  std::string golden;
  std::string actual;
  double difference = 0.0;  // NaN for non-numeric mismatches
  double tolerance = 0.0;
};

struct VerifyReport {
  std::vector<std::string> files;
  std::vector<Exceedance> exceedances;
  std::vector<std::string> problems;  // header or row-count mismatches

  bool passed() const { return exceedances.empty() && problems.empty(); }
  std::string summary() const;
};

/// Compares every *.csv in golden_dir against the same file in output_dir.
/// Lines starting with '#' hold `key=value` cells compared under column `key`;
/// cells holding ';'-separated lists are compared element by element.
/// Throws MissingFile when a golden CSV has no counterpart.
VerifyReport verify_golden(const std::filesystem::path& output_dir, const std::filesystem::path& golden_dir);

}  // namespace pinball
