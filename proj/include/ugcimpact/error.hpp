#pragma once

#include <stdexcept>
#include <string>

namespace ugcimpact {

enum class ErrorCode {
  InvalidArgument,
  NonAlignable,
  EmptyOverlap,
  DegenerateInput,
  DimensionMismatch,
  NotPositiveDefinite,
  OptimizationFailed,
  NonConvergence,
  CombinatorialLimit,
  NoQualifiedPairs,
  CounterfactualNearZero,
  BootstrapFailed,
  PeriodOrderError,
  ParseError,
  SchemaMismatch,
};

const char* to_string(ErrorCode code) noexcept;

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ugcimpact
