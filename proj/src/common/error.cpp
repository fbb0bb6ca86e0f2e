#include "rar/error.hpp"

namespace rar {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kIoError: return "io_error";
    case ErrorCode::kDiskFull: return "disk_full";
    case ErrorCode::kSchemaVersionMismatch: return "schema_version_mismatch";
    case ErrorCode::kCorruptRecord: return "corrupt_record";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kEmptyAfterCleaning: return "empty_after_cleaning";
    case ErrorCode::kEmptyCorpus: return "empty_corpus";
    case ErrorCode::kEmptyQuery: return "empty_query";
    case ErrorCode::kTemplateBudgetExceeded: return "template_budget_exceeded";
    case ErrorCode::kParseFailure: return "parse_failure";
    case ErrorCode::kVerifierUnavailable: return "verifier_unavailable";
    case ErrorCode::kVerdictUndecidable: return "verdict_undecidable";
    case ErrorCode::kClaimExtractionFailed: return "claim_extraction_failed";
    case ErrorCode::kUnknownPrompt: return "unknown_prompt";
    case ErrorCode::kGroupTooSmall: return "group_too_small";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kLengthMismatch: return "length_mismatch";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

}  // namespace rar
