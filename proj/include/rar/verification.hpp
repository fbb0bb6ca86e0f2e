#pragma once

#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rar/retrieval.hpp"

namespace rar::verification {

enum class Mode { kWholeResponseBinary, kWholeResponseRating, kPerClaim };

enum class BinaryLabel { kNoContradiction, kContradiction };
enum class ClaimLabel { kSupported, kContradicted, kInconclusive };
struct Rating {
  int value = 0;  // 0..10
  bool operator==(const Rating&) const = default;
};

using VerdictKind = std::variant<BinaryLabel, ClaimLabel, Rating>;

struct Verdict {
  VerdictKind kind;
  std::string reasoning;
  std::string raw_model_output;
  int attempts = 1;

  bool operator==(const Verdict&) const = default;
};

std::string_view mode_name(Mode mode);
std::string_view label_name(BinaryLabel label);
std::string_view label_name(ClaimLabel label);
// "no_contradiction", "supported", "rating:7", ...
std::string verdict_kind_name(const VerdictKind& kind);

struct VerifierRequest {
  std::string prompt_text;
  std::string response_text;
  retrieval::EvidenceSet evidence;
  Mode mode = Mode::kWholeResponseBinary;
  std::optional<std::string> claim_text;

  // Throws kInvalidArgument.
  void validate() const;
};

struct PromptBudget {
  std::size_t passage_chars = 4000;  // code points per passage
  std::size_t max_passages = 8;
  std::size_t max_prompt_chars = 64000;
};

// Passages as numbered blocks "[i] (doc_id) text", truncated to the budget.
// Throws kTemplateBudgetExceeded when not even one passage fits.
std::string render_passages(const retrieval::EvidenceSet& evidence, std::string_view fixed_text,
                            const PromptBudget& budget);

std::string render_prompt(const VerifierRequest& req, const PromptBudget& budget = {});
std::string render_claim_extraction_prompt(std::string_view prompt_text, std::string_view response_text);
std::string render_dataset_curation_prompt(const retrieval::EvidenceSet& evidence, std::string_view claim_text,
                                           const PromptBudget& budget = {});

// All throw kParseFailure.
Verdict parse_binary_verdict(std::string_view model_output);
Verdict parse_rating_verdict(std::string_view model_output);
Verdict parse_claim_verdict(std::string_view model_output);
std::vector<std::string> parse_claim_list(std::string_view model_output);

class VerifierBackend {
 public:
  virtual ~VerifierBackend() = default;

  // Stable description of everything that affects verdicts; part of the
  // reward cache key.
  virtual std::string describe() const = 0;
  virtual bool ready() const { return true; }

  // Raw completion for a rendered prompt. Throws kVerifierUnavailable.
  virtual std::string complete(const std::string& prompt) = 0;

  // Backends that decide without a language model return a verdict here and
  // skip rendering.
  virtual std::optional<Verdict> judge(const VerifierRequest&) { return std::nullopt; }
  virtual std::optional<std::vector<std::string>> extract_claims(std::string_view /*prompt_text*/,
                                                                 std::string_view /*response_text*/) {
    return std::nullopt;
  }
};

// Caps the number of calls in flight on the wrapped backend; excess callers
// wait.
class BoundedBackend final : public VerifierBackend {
 public:
  BoundedBackend(std::shared_ptr<VerifierBackend> inner, std::size_t max_inflight);

  std::string describe() const override { return inner_->describe(); }
  bool ready() const override { return inner_->ready(); }
  std::string complete(const std::string& prompt) override;
  std::optional<Verdict> judge(const VerifierRequest& req) override;
  std::optional<std::vector<std::string>> extract_claims(std::string_view prompt_text,
                                                         std::string_view response_text) override;

  std::size_t max_inflight() const { return max_inflight_; }
  std::size_t peak_inflight() const;

 private:
  class Slot;
  std::shared_ptr<VerifierBackend> inner_;
  std::size_t max_inflight_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t inflight_ = 0;
  std::size_t peak_ = 0;
};

struct VerifyOptions {
  int retry_limit = 2;  // extra attempts after a parse failure
  PromptBudget budget;
};

// Throws kVerifierUnavailable, kVerdictUndecidable, kTemplateBudgetExceeded.
Verdict verify(const VerifierRequest& req, VerifierBackend& backend, const VerifyOptions& options = {});

// Claim list for a response; kClaimExtractionFailed after persistent parse
// failures. Claims are trimmed, empties dropped, exact duplicates removed.
std::vector<std::string> extract_claims(std::string_view prompt_text, std::string_view response_text,
                                        VerifierBackend& backend, const VerifyOptions& options = {});

// ---------------------------------------------------------------------------
// Deterministic oracle over a table of (subject, relation, value) facts.

struct Fact {
  std::string subject;
  std::string relation;
  std::string value;
  // Sentence shapes asserting this relation, with {subject} and {value}
  // placeholders, e.g. "{subject} is the capital of {value}".
  std::vector<std::string> patterns;
};

struct Assertion {
  std::string subject;
  std::string relation;
  std::string value;

  bool operator==(const Assertion&) const = default;
  auto operator<=>(const Assertion&) const = default;
};

class FactTable {
 public:
  FactTable() = default;
  explicit FactTable(std::vector<Fact> facts, std::vector<std::string> conjunctions = {" and "});

  // JSON list of facts, or {"facts": [...], "conjunctions": [...]}.
  static FactTable parse(std::string_view json_text);
  static FactTable load(const std::filesystem::path& path);

  const std::vector<Fact>& facts() const { return facts_; }
  const std::vector<std::string>& conjunctions() const { return conjunctions_; }

  // Assertions a single statement makes, matched against the declared
  // patterns after normalization.
  std::vector<Assertion> assertions_in(std::string_view statement) const;

  // Statements a response decomposes into: sentences, then clauses joined by
  // the declared conjunctions. A clause without a known subject inherits the
  // one from the previous clause of the same sentence.
  std::vector<std::string> statements(std::string_view response) const;

  bool is_contradicted(const Assertion& a) const;
  bool is_supported(const Assertion& a) const;

  // Canonical digest of the table contents.
  std::string digest() const;

 private:
  struct CompiledPattern {
    std::string relation;
    std::string prefix;
    std::string infix;  // between the two placeholders
    std::string suffix;
    bool subject_first = true;
  };

  std::vector<Fact> facts_;
  std::vector<std::string> conjunctions_;
  std::vector<CompiledPattern> patterns_;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> values_;
  std::map<std::string, std::string> subjects_;  // normalized -> display form
};

std::string normalize_statement(std::string_view text);

// Whole-response rating for a number of contradicted facts.
inline int oracle_rating(std::size_t contradictions) {
  return contradictions == 0 ? 10 : contradictions == 1 ? 4 : 1;
}

class OracleBackend final : public VerifierBackend {
 public:
  explicit OracleBackend(FactTable table);

  std::string describe() const override;
  std::string complete(const std::string& prompt) override;
  std::optional<Verdict> judge(const VerifierRequest& req) override;
  std::optional<std::vector<std::string>> extract_claims(std::string_view prompt_text,
                                                         std::string_view response_text) override;

  const FactTable& table() const { return table_; }

 private:
  FactTable table_;
  std::string digest_;
};

struct RemoteConfig {
  std::string endpoint;  // e.g. http://host:port/v1/chat/completions
  std::string model;
  std::string api_key;
  int timeout_ms = 60000;
  int max_tokens = 2048;
  int transport_retries = 2;
};

// Chat-completions style endpoint, temperature 0, one sample.
class RemoteLmBackend final : public VerifierBackend {
 public:
  explicit RemoteLmBackend(RemoteConfig config);
  ~RemoteLmBackend() override;

  std::string describe() const override;
  bool ready() const override;
  std::string complete(const std::string& prompt) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rar::verification
