#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gnssbench {

enum class ErrorKind {
  InvalidCoordinate,
  Format,
  Checksum,
  Parse,
  InsufficientData,
  RankDeficient,
  Domain,
  EmptyReport,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::InvalidCoordinate: return "invalid-coordinate";
  case ErrorKind::Format: return "format";
  case ErrorKind::Checksum: return "checksum";
  case ErrorKind::Parse: return "parse";
  case ErrorKind::InsufficientData: return "insufficient-data";
  case ErrorKind::RankDeficient: return "rank-deficient";
  case ErrorKind::Domain: return "domain";
  case ErrorKind::EmptyReport: return "empty-report";
  case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so that callers (the
/// CLI in particular) can map it onto an exit code without string matching.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

} // namespace gnssbench
