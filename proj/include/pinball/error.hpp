#pragma once

#include <stdexcept>
#include <string>

namespace pinball {

enum class ErrorKind {
  InvalidArgument,
  PacketTooCloseToBoundary,
  SigmaUnderResolved,
  BarrierOutsideGrid,
  LobesNotSeparated,
  NoSignChange,
  NodeRegion,
  MultiLobe,
  PrematureDetection,
  ParticleInGap,
  BoundaryLeak,
  LengthMismatch,
  SequenceTooShort,
  Config,
  Io,
  MissingFile,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so the CLI can map it
/// to an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace pinball
