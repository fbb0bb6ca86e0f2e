#include <chrono>
#include <charconv>
#include <future>

#include "rar/digest.hpp"
#include "rar/rewards.hpp"

namespace rar::rewards {

namespace {

using verification::ClaimLabel;
using verification::Mode;
using verification::Verdict;
using verification::VerifierRequest;

std::string number(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::vector<retrieval::ChunkId> ids_of(const retrieval::EvidenceSet& evidence) {
  std::vector<retrieval::ChunkId> ids;
  ids.reserve(evidence.size());
  for (const auto& scored : evidence.chunks) ids.push_back(scored.chunk.id);
  return ids;
}

}  // namespace

struct Scorer::ClaimTally {
  std::vector<Claim> claims;
  std::vector<Verdict> verdicts;
  std::vector<retrieval::ChunkId> evidence_used;
  std::size_t supported = 0;
  std::size_t contradicted = 0;
  bool degenerate = false;
  int verifier_calls = 0;
  int attempts = 0;
};

Scorer::Scorer(std::shared_ptr<verification::VerifierBackend> backend,
               std::shared_ptr<const retrieval::TokenCounter> tokenizer, ScoringConfig config)
    : backend_(std::move(backend)), tokenizer_(std::move(tokenizer)), config_(std::move(config)) {
  if (!backend_) throw Error(ErrorCode::kInvalidArgument, "scorer needs a verifier backend");
  if (!tokenizer_) throw Error(ErrorCode::kInvalidArgument, "scorer needs a tokenizer");
  config_.retrieval.validate();
  config_.claim_retrieval.validate();
}

std::string Scorer::config_digest() const {
  Sha256 hash;
  hash.update_framed("rar.scoring.v1");
  hash.update_framed(tokenizer_->name());
  for (const auto* cfg : {&config_.retrieval, &config_.claim_retrieval}) {
    hash.update_framed(std::to_string(cfg->chunk_size_tokens));
    hash.update_framed(std::to_string(cfg->top_k));
    hash.update_framed(number(cfg->bm25_k1));
    hash.update_framed(number(cfg->bm25_b));
  }
  hash.update_framed(backend_->describe());
  hash.update_framed(std::to_string(config_.verify.retry_limit));
  hash.update_framed(std::to_string(config_.verify.budget.passage_chars));
  hash.update_framed(std::to_string(config_.verify.budget.max_passages));
  hash.update_framed(std::to_string(config_.verify.budget.max_prompt_chars));
  return hash.hex_digest();
}

std::shared_ptr<const retrieval::Bm25Index> Scorer::index_for(const datastore::PrecacheEntry& entry,
                                                              const retrieval::RetrievalConfig& cfg) {
  const std::string key = entry.version_hash + "|" + entry.prompt_id + "|" + std::to_string(cfg.chunk_size_tokens);
  {
    std::lock_guard lock(index_mutex_);
    if (auto it = indexes_.find(key); it != indexes_.end()) return it->second;
  }
  auto built = std::make_shared<const retrieval::Bm25Index>(retrieval::Bm25Index::build(entry, cfg, *tokenizer_));
  std::lock_guard lock(index_mutex_);
  return indexes_.emplace(key, std::move(built)).first->second;
}

retrieval::EvidenceSet Scorer::evidence_for(const retrieval::Bm25Index& index, std::string_view query,
                                            const retrieval::RetrievalConfig& cfg) {
  try {
    return retrieval::retrieve(index, query, cfg);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kEmptyQuery) throw;
    return retrieval::leading_chunks(index, cfg);
  }
}

RewardResult Scorer::whole_response(std::string_view prompt, std::string_view response,
                                    const datastore::PrecacheEntry& entry, Mode mode) {
  const auto index = index_for(entry, config_.retrieval);
  VerifierRequest req{std::string(prompt), std::string(response), evidence_for(*index, response, config_.retrieval),
                      mode, std::nullopt};
  RewardResult result;
  result.kind = {mode == Mode::kWholeResponseBinary ? RewardType::kBinaryRar : RewardType::kRatingRar};
  result.evidence_used = ids_of(req.evidence);
  result.verifier_calls = 1;
  try {
    Verdict verdict = verification::verify(req, *backend_, config_.verify);
    result.attempts = verdict.attempts;
    if (mode == Mode::kWholeResponseBinary) {
      result.value = std::get<verification::BinaryLabel>(verdict.kind) == verification::BinaryLabel::kNoContradiction
                         ? 1.0
                         : 0.0;
    } else {
      result.value = std::get<verification::Rating>(verdict.kind).value / 10.0;
    }
    result.verdicts.push_back(std::move(verdict));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kVerdictUndecidable) throw;
    result.attempts = std::max(0, config_.verify.retry_limit) + 1;
    result.value = mode == Mode::kWholeResponseBinary ? 1.0 : 0.5;
    result.degenerate = true;
  }
  return result;
}

RewardResult Scorer::score_binary_rar(std::string_view prompt, std::string_view response,
                                      const datastore::PrecacheEntry& entry) {
  return whole_response(prompt, response, entry, Mode::kWholeResponseBinary);
}

RewardResult Scorer::score_rating_rar(std::string_view prompt, std::string_view response,
                                      const datastore::PrecacheEntry& entry) {
  return whole_response(prompt, response, entry, Mode::kWholeResponseRating);
}

std::vector<Claim> Scorer::extract_claims(std::string_view prompt, std::string_view response) {
  std::vector<Claim> claims;
  for (auto& text : verification::extract_claims(prompt, response, *backend_, config_.verify)) {
    claims.push_back({std::move(text), std::nullopt});
  }
  return claims;
}

Scorer::ClaimTally Scorer::evaluate_claims(std::string_view prompt, std::string_view response,
                                           const datastore::PrecacheEntry& entry) {
  ClaimTally tally;
  tally.claims = extract_claims(prompt, response);
  tally.verifier_calls = 1;
  tally.attempts = 1;
  if (tally.claims.empty()) {
    tally.degenerate = true;
    return tally;
  }
  const auto index = index_for(entry, config_.claim_retrieval);

  struct PerClaim {
    std::optional<Verdict> verdict;
    std::vector<retrieval::ChunkId> evidence;
  };
  std::vector<std::future<PerClaim>> pending;
  pending.reserve(tally.claims.size());
  for (const auto& claim : tally.claims) {
    pending.push_back(std::async(std::launch::async, [&, text = claim.text] {
      PerClaim out;
      VerifierRequest req{std::string(prompt), std::string(response),
                          evidence_for(*index, text, config_.claim_retrieval), Mode::kPerClaim, text};
      out.evidence = ids_of(req.evidence);
      try {
        out.verdict = verification::verify(req, *backend_, config_.verify);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kVerdictUndecidable) throw;
      }
      return out;
    }));
  }

  std::exception_ptr failure;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    PerClaim out;
    try {
      out = pending[i].get();
    } catch (...) {
      if (!failure) failure = std::current_exception();
      continue;
    }
    ++tally.verifier_calls;
    for (auto& id : out.evidence) {
      if (std::find(tally.evidence_used.begin(), tally.evidence_used.end(), id) == tally.evidence_used.end()) {
        tally.evidence_used.push_back(std::move(id));
      }
    }
    ClaimLabel label = ClaimLabel::kInconclusive;
    if (out.verdict) {
      label = std::get<ClaimLabel>(out.verdict->kind);
      tally.attempts += out.verdict->attempts;
      tally.verdicts.push_back(std::move(*out.verdict));
    } else {
      tally.attempts += std::max(0, config_.verify.retry_limit) + 1;
      tally.degenerate = true;
    }
    tally.claims[i].verdict = label;
    if (label == ClaimLabel::kSupported) ++tally.supported;
    if (label == ClaimLabel::kContradicted) ++tally.contradicted;
  }
  if (failure) std::rethrow_exception(failure);
  return tally;
}

RewardResult Scorer::score_veriscore(std::string_view prompt, std::string_view response,
                                     const datastore::PrecacheEntry& entry) {
  ClaimTally tally = evaluate_claims(prompt, response, entry);
  RewardResult result;
  result.kind = {RewardType::kVeriScore};
  const ClaimReward reward = claim_reward(result.kind, {tally.claims.size(), tally.supported, tally.contradicted});
  result.value = reward.value;
  result.degenerate = tally.degenerate || reward.degenerate;
  result.verdicts = std::move(tally.verdicts);
  result.evidence_used = std::move(tally.evidence_used);
  result.claims = std::move(tally.claims);
  result.verifier_calls = tally.verifier_calls;
  result.attempts = tally.attempts;
  return result;
}

RewardResult Scorer::score_conflict_only(std::string_view prompt, std::string_view response,
                                         const datastore::PrecacheEntry& entry) {
  ClaimTally tally = evaluate_claims(prompt, response, entry);
  RewardResult result;
  result.kind = {RewardType::kConflictOnly};
  const ClaimReward reward = claim_reward(result.kind, {tally.claims.size(), tally.supported, tally.contradicted});
  result.value = reward.value;
  result.degenerate = tally.degenerate || reward.degenerate;
  result.verdicts = std::move(tally.verdicts);
  result.evidence_used = std::move(tally.evidence_used);
  result.claims = std::move(tally.claims);
  result.verifier_calls = tally.verifier_calls;
  result.attempts = tally.attempts;
  return result;
}

RewardResult Scorer::score_binary_veriscore(std::string_view prompt, std::string_view response,
                                            const datastore::PrecacheEntry& entry, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "binary_veriscore threshold must lie in (0, 1]");
  }
  RewardResult result = score_veriscore(prompt, response, entry);
  result.kind = {RewardType::kBinaryVeriScore, threshold};
  result.value = result.value >= threshold ? 1.0 : 0.0;
  return result;
}

RewardResult Scorer::score(const RewardKind& kind, std::string_view response, const datastore::PrecacheEntry& entry) {
  const auto start = std::chrono::steady_clock::now();
  const std::string_view prompt = entry.prompt_text;
  RewardResult result;
  switch (kind.type) {
    case RewardType::kBinaryRar: result = score_binary_rar(prompt, response, entry); break;
    case RewardType::kVeriScore: result = score_veriscore(prompt, response, entry); break;
    case RewardType::kBinaryVeriScore: result = score_binary_veriscore(prompt, response, entry, kind.threshold); break;
    case RewardType::kConflictOnly: result = score_conflict_only(prompt, response, entry); break;
    case RewardType::kRatingRar: result = score_rating_rar(prompt, response, entry); break;
  }
  result.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

ClaimReward claim_reward(const RewardKind& kind, const ClaimCounts& counts) {
  if (counts.supported + counts.contradicted > counts.total) {
    throw Error(ErrorCode::kInvalidArgument, "claim counts exceed the total");
  }
  const bool empty = counts.total == 0;
  const auto total = static_cast<double>(counts.total);
  switch (kind.type) {
    case RewardType::kVeriScore:
      return {empty ? 0.0 : static_cast<double>(counts.supported) / total, empty};
    case RewardType::kBinaryVeriScore: {
      const double score = empty ? 0.0 : static_cast<double>(counts.supported) / total;
      return {score >= kind.threshold ? 1.0 : 0.0, empty};
    }
    case RewardType::kConflictOnly:
      return {empty ? 1.0 : static_cast<double>(counts.total - counts.contradicted) / total, empty};
    case RewardType::kBinaryRar:
      return {counts.contradicted == 0 ? 1.0 : 0.0, false};
    case RewardType::kRatingRar:
      return {verification::oracle_rating(counts.contradicted) / 10.0, false};
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown reward kind");
}

}  // namespace rar::rewards
