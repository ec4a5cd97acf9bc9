#pragma once

#include <stdexcept>
#include <string>

namespace dsoba {

enum class ErrorCode {
  IncompatibleSize,
  NonStochasticWeights,
  SpectralGapDegenerate,
  DimensionMismatch,
  LowerSolveDiverged,
  SingularHessian,
  DegenerateDelta,
  ConfigMismatch,
  NumericalDivergence,
  GridMismatch,
  EmptyInput,
  ParseError,
  ValidationError,
  IoError,
  WallClockLimit,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IncompatibleSize: return "IncompatibleSize";
    case ErrorCode::NonStochasticWeights: return "NonStochasticWeights";
    case ErrorCode::SpectralGapDegenerate: return "SpectralGapDegenerate";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::LowerSolveDiverged: return "LowerSolveDiverged";
    case ErrorCode::SingularHessian: return "SingularHessian";
    case ErrorCode::DegenerateDelta: return "DegenerateDelta";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::NumericalDivergence: return "NumericalDivergence";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::WallClockLimit: return "WallClockLimit";
  }
  return "Unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by the engine; carries the iteration at which the state blew up.
class DivergenceError : public Error {
 public:
  DivergenceError(long iteration, const std::string& message)
      : Error(ErrorCode::NumericalDivergence,
              "iteration " + std::to_string(iteration) + ": " + message),
        iteration_(iteration) {}

  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

/// Config problems carry the offending key (empty when not key-specific).
class ConfigError : public Error {
 public:
  ConfigError(ErrorCode code, std::string key, const std::string& message)
      : Error(code, key.empty() ? message : "'" + key + "': " + message), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace dsoba
