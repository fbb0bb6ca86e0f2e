#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rar {

enum class ErrorCode {
  kInvalidArgument,
  kIoError,
  kDiskFull,
  kSchemaVersionMismatch,
  kCorruptRecord,
  kConflict,
  kEmptyAfterCleaning,
  kEmptyCorpus,
  kEmptyQuery,
  kTemplateBudgetExceeded,
  kParseFailure,
  kVerifierUnavailable,
  kVerdictUndecidable,
  kClaimExtractionFailed,
  kUnknownPrompt,
  kGroupTooSmall,
  kNonFinite,
  kLengthMismatch,
  kInternal,
};

// Stable snake_case identifier used on the wire and in result files.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rar
