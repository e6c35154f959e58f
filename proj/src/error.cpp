#include "adr/error.hpp"

namespace adr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParseError: return "parse_error";
    case ErrorCode::kSchemaViolation: return "schema_violation";
    case ErrorCode::kInvalidDefinition: return "invalid_definition";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kWrongState: return "wrong_state";
    case ErrorCode::kBadToken: return "bad_token";
    case ErrorCode::kCapacityExhausted: return "capacity_exhausted";
    case ErrorCode::kDuplicateUser: return "duplicate_user";
    case ErrorCode::kUnsetMetric: return "unset_metric";
    case ErrorCode::kZeroDenominator: return "zero_denominator";
    case ErrorCode::kOverlappingPhases: return "overlapping_phases";
    case ErrorCode::kMalformedLine: return "malformed_line";
    case ErrorCode::kStorageFailure: return "storage_failure";
    case ErrorCode::kCapExceeded: return "cap_exceeded";
    case ErrorCode::kDecisionFailed: return "decision_failed";
    case ErrorCode::kEmpty: return "empty";
    case ErrorCode::kVersionConflict: return "version_conflict";
  }
  return "unknown";
}

}  // namespace adr
