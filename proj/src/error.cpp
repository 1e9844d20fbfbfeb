#include "ugcimpact/error.hpp"

namespace ugcimpact {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonAlignable: return "NonAlignable";
    case ErrorCode::EmptyOverlap: return "EmptyOverlap";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::OptimizationFailed: return "OptimizationFailed";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::CombinatorialLimit: return "CombinatorialLimit";
    case ErrorCode::NoQualifiedPairs: return "NoQualifiedPairs";
    case ErrorCode::CounterfactualNearZero: return "CounterfactualNearZero";
    case ErrorCode::BootstrapFailed: return "BootstrapFailed";
    case ErrorCode::PeriodOrderError: return "PeriodOrderError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
  }
  return "Unknown";
}

}  // namespace ugcimpact
