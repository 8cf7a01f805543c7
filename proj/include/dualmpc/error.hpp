#pragma once

#include <stdexcept>
#include <string>

namespace dualmpc {

enum class ErrorKind {
  InvalidArgument,
  NumericalFailure,
  InfeasibleTightening,
  NoRciExists,
  RmpcInfeasible,
  AssumptionViolation,
  ConfigError,
  IoError,
};

const char* to_string(ErrorKind kind);

/// Exception carrying a machine-readable kind so callers (the CLI in
/// particular) can map failures onto stable exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::InfeasibleTightening: return "InfeasibleTightening";
    case ErrorKind::NoRciExists: return "NoRciExists";
    case ErrorKind::RmpcInfeasible: return "RmpcInfeasible";
    case ErrorKind::AssumptionViolation: return "AssumptionViolation";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace dualmpc
