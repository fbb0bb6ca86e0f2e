#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "rar/datastore.hpp"
#include "rar/error.hpp"
#include "rar/retrieval.hpp"
#include "rar/verification.hpp"

namespace rar::rewards {

enum class RewardType { kBinaryRar, kVeriScore, kBinaryVeriScore, kConflictOnly, kRatingRar };

struct RewardKind {
  RewardType type = RewardType::kBinaryRar;
  double threshold = 0.5;  // binary VeriScore only, in (0, 1]

  // binary_rar, veriscore, binary_veriscore[:t], conflict_only, rating_rar.
  // Throws kInvalidArgument.
  static RewardKind parse(std::string_view name);
  std::string name() const;
  bool uses_claims() const;

  bool operator==(const RewardKind&) const = default;
};

// Bucket for per-kind verifier call counters.
std::string_view stats_key(RewardType type);

struct ClaimCounts {
  std::size_t total = 0;
  std::size_t supported = 0;
  std::size_t contradicted = 0;
};

struct ClaimReward {
  double value = 0.0;
  bool degenerate = false;
};

// Value of a claim-based kind. Zero claims are degenerate.
ClaimReward claim_reward(const RewardKind& kind, const ClaimCounts& counts);

struct Claim {
  std::string text;
  std::optional<verification::ClaimLabel> verdict;

  bool operator==(const Claim&) const = default;
};

struct RewardResult {
  double value = 0.0;
  RewardKind kind;
  std::vector<verification::Verdict> verdicts;
  std::vector<retrieval::ChunkId> evidence_used;
  std::optional<std::vector<Claim>> claims;
  bool degenerate = false;
  bool cache_hit = false;
  int verifier_calls = 0;
  int attempts = 0;
  double latency_ms = 0.0;
};

// Field-for-field equality ignoring latency and cache_hit.
bool same_outcome(const RewardResult& a, const RewardResult& b);

struct ScoringConfig {
  retrieval::RetrievalConfig retrieval;
  retrieval::RetrievalConfig claim_retrieval = retrieval::RetrievalConfig::claim_defaults();
  verification::VerifyOptions verify;
};

// Scores one response against one precache entry. Indexes are built on first
// use and shared afterwards.
class Scorer {
 public:
  Scorer(std::shared_ptr<verification::VerifierBackend> backend,
         std::shared_ptr<const retrieval::TokenCounter> tokenizer, ScoringConfig config = {});

  RewardResult score(const RewardKind& kind, std::string_view response, const datastore::PrecacheEntry& entry);

  RewardResult score_binary_rar(std::string_view prompt, std::string_view response,
                                const datastore::PrecacheEntry& entry);
  RewardResult score_veriscore(std::string_view prompt, std::string_view response,
                               const datastore::PrecacheEntry& entry);
  RewardResult score_conflict_only(std::string_view prompt, std::string_view response,
                                   const datastore::PrecacheEntry& entry);
  RewardResult score_binary_veriscore(std::string_view prompt, std::string_view response,
                                      const datastore::PrecacheEntry& entry, double threshold = 0.5);
  RewardResult score_rating_rar(std::string_view prompt, std::string_view response,
                                const datastore::PrecacheEntry& entry);

  // Throws kClaimExtractionFailed.
  std::vector<Claim> extract_claims(std::string_view prompt, std::string_view response);

  // Everything besides the inputs that can change a reward.
  std::string config_digest() const;

  const ScoringConfig& config() const { return config_; }
  verification::VerifierBackend& backend() { return *backend_; }
  const retrieval::TokenCounter& tokenizer() const { return *tokenizer_; }

  std::shared_ptr<const retrieval::Bm25Index> index_for(const datastore::PrecacheEntry& entry,
                                                        const retrieval::RetrievalConfig& cfg);

 private:
  struct ClaimTally;
  ClaimTally evaluate_claims(std::string_view prompt, std::string_view response,
                             const datastore::PrecacheEntry& entry);
  retrieval::EvidenceSet evidence_for(const retrieval::Bm25Index& index, std::string_view query,
                                      const retrieval::RetrievalConfig& cfg);
  RewardResult whole_response(std::string_view prompt, std::string_view response,
                              const datastore::PrecacheEntry& entry, verification::Mode mode);

  std::shared_ptr<verification::VerifierBackend> backend_;
  std::shared_ptr<const retrieval::TokenCounter> tokenizer_;
  ScoringConfig config_;
  std::mutex index_mutex_;
  std::map<std::string, std::shared_ptr<const retrieval::Bm25Index>> indexes_;
};

// Content-addressed reward store, optionally persisted as one JSON record per
// line.
class RewardCache {
 public:
  RewardCache() = default;
  explicit RewardCache(std::filesystem::path path);

  static std::string key(const RewardKind& kind, std::string_view prompt_id, std::string_view response,
                         std::string_view version_hash, std::string_view config_digest);

  std::optional<RewardResult> get(const std::string& key) const;
  void put(const std::string& key, const RewardResult& result);
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::shared_mutex mutex_;
  std::mutex file_mutex_;
  std::unordered_map<std::string, RewardResult> entries_;
};

struct ScoreRequest {
  std::string prompt_id;
  std::string response;
};

struct ScoreOutcome {
  std::string prompt_id;
  std::optional<RewardResult> result;
  std::optional<ErrorCode> error;
  std::string error_message;
  double latency_ms = 0.0;

  bool ok() const { return result.has_value(); }
};

struct StatsSnapshot {
  std::uint64_t items = 0;
  std::uint64_t errors = 0;
  std::uint64_t cache_lookups = 0;
  std::uint64_t cache_hits = 0;
  std::map<std::string, std::uint64_t> verifier_calls;
  double latency_p50_ms = 0.0;
  double latency_p95_ms = 0.0;

  double cache_hit_rate() const {
    return cache_lookups == 0 ? 0.0 : static_cast<double>(cache_hits) / static_cast<double>(cache_lookups);
  }
};

struct EngineConfig {
  std::size_t workers = 8;
  bool use_cache = true;
  std::optional<std::filesystem::path> cache_path;
  std::optional<std::filesystem::path> audit_log;
};

class RewardEngine {
 public:
  RewardEngine(std::shared_ptr<const datastore::PromptSet> prompts, std::shared_ptr<Scorer> scorer,
               EngineConfig config = {});

  // Results in input order; failures are reported per item.
  std::vector<ScoreOutcome> score_batch(std::span<const ScoreRequest> requests, const RewardKind& kind);
  ScoreOutcome score_one(const ScoreRequest& request, const RewardKind& kind);

  std::shared_ptr<const datastore::PromptSet> promptset() const;
  void set_promptset(std::shared_ptr<const datastore::PromptSet> prompts);

  StatsSnapshot stats() const;
  Scorer& scorer() { return *scorer_; }
  const RewardCache& cache() const { return cache_; }

 private:
  void record(const ScoreOutcome& outcome, const RewardKind& kind, const ScoreRequest& request);

  mutable std::mutex prompts_mutex_;
  std::shared_ptr<const datastore::PromptSet> prompts_;
  std::shared_ptr<Scorer> scorer_;
  EngineConfig config_;
  RewardCache cache_;

  mutable std::mutex stats_mutex_;
  StatsSnapshot stats_;
  std::vector<double> latencies_;
};

// Wire and file formats.
nlohmann::ordered_json to_json(const verification::Verdict& verdict);
nlohmann::ordered_json to_json(const RewardResult& result, bool include_timing = true);
nlohmann::ordered_json to_json(const ScoreOutcome& outcome, bool include_timing = true);
nlohmann::ordered_json to_json(const StatsSnapshot& stats);
// Throws kCorruptRecord.
verification::Verdict verdict_from_json(const nlohmann::json& j);
RewardResult reward_result_from_json(const nlohmann::json& j);

// Engine configuration file.
struct VerifierSettings {
  std::string backend = "oracle";  // oracle | remote
  std::string endpoint;
  std::string model;
  std::string api_key;
  int timeout_ms = 60000;
  int max_tokens = 2048;
  int retry_limit = 2;
  std::optional<std::filesystem::path> oracle_facts;
  verification::PromptBudget budget;
};

struct Settings {
  std::string listen = "127.0.0.1:8080";
  std::size_t max_batch = 256;
  std::size_t max_inflight_verifier = 8;
  std::size_t workers = 8;
  std::optional<std::filesystem::path> cache_path;
  std::optional<std::filesystem::path> promptset_path;
  std::optional<std::filesystem::path> audit_log;
  std::optional<std::string> bearer_token;
  retrieval::RetrievalConfig retrieval;
  retrieval::RetrievalConfig claim_retrieval = retrieval::RetrievalConfig::claim_defaults();
  std::optional<std::filesystem::path> vocabulary_path;
  VerifierSettings verifier;

  // Throws kInvalidArgument.
  void validate() const;
};

// Relative paths resolve against `base_dir`. Unknown keys are rejected.
Settings parse_settings(std::string_view json_text, const std::filesystem::path& base_dir = {});
Settings load_settings(const std::filesystem::path& path);
// RAR_LISTEN and RAR_VERIFIER_API_KEY.
void apply_environment(Settings& settings);

std::shared_ptr<const retrieval::TokenCounter> make_tokenizer(const Settings& settings);
// The configured backend behind the in-flight cap.
std::shared_ptr<verification::BoundedBackend> make_backend(const Settings& settings);
ScoringConfig make_scoring_config(const Settings& settings);

}  // namespace rar::rewards
