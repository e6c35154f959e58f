#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace adr {

// Stable error codes. The string form is part of the HTTP contract and the
// CLI's --json output, so never rename an existing entry.
enum class ErrorCode {
  kParseError,
  kSchemaViolation,
  kInvalidDefinition,
  kInvalidArgument,
  kNotFound,
  kWrongState,
  kBadToken,
  kCapacityExhausted,
  kDuplicateUser,
  kUnsetMetric,
  kZeroDenominator,
  kOverlappingPhases,
  kMalformedLine,
  kStorageFailure,
  kCapExceeded,
  kDecisionFailed,
  kEmpty,
  kVersionConflict,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace adr
