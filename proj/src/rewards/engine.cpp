#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "rar/digest.hpp"
#include "rar/fileio.hpp"
#include "rar/rewards.hpp"

namespace rar::rewards {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

// Percentiles cover the most recent items only.
constexpr std::size_t kLatencyWindow = 4096;

// Nearest-rank percentile.
double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

}  // namespace

RewardEngine::RewardEngine(std::shared_ptr<const datastore::PromptSet> prompts, std::shared_ptr<Scorer> scorer,
                           EngineConfig config)
    : prompts_(std::move(prompts)),
      scorer_(std::move(scorer)),
      config_(std::move(config)),
      cache_(config_.cache_path ? RewardCache(*config_.cache_path) : RewardCache()) {
  if (!prompts_) prompts_ = std::make_shared<const datastore::PromptSet>();
  if (!scorer_) throw Error(ErrorCode::kInvalidArgument, "engine needs a scorer");
  if (config_.workers < 1) throw Error(ErrorCode::kInvalidArgument, "engine needs at least one worker");
}

std::shared_ptr<const datastore::PromptSet> RewardEngine::promptset() const {
  std::lock_guard lock(prompts_mutex_);
  return prompts_;
}

void RewardEngine::set_promptset(std::shared_ptr<const datastore::PromptSet> prompts) {
  if (!prompts) prompts = std::make_shared<const datastore::PromptSet>();
  std::lock_guard lock(prompts_mutex_);
  prompts_ = std::move(prompts);
}

ScoreOutcome RewardEngine::score_one(const ScoreRequest& request, const RewardKind& kind) {
  const auto start = std::chrono::steady_clock::now();
  ScoreOutcome outcome;
  outcome.prompt_id = request.prompt_id;
  bool looked_up = false;
  try {
    const auto prompts = promptset();
    const auto* entry = prompts->find(request.prompt_id);
    if (entry == nullptr) throw Error(ErrorCode::kUnknownPrompt, "unknown prompt_id '" + request.prompt_id + "'");
    std::string key;
    if (config_.use_cache) {
      key = RewardCache::key(kind, request.prompt_id, request.response, entry->version_hash,
                             scorer_->config_digest());
      looked_up = true;
      if (auto cached = cache_.get(key)) {
        cached->cache_hit = true;
        outcome.result = std::move(cached);
      }
    }
    if (!outcome.result) {
      RewardResult fresh = scorer_->score(kind, request.response, *entry);
      if (config_.use_cache) cache_.put(key, fresh);
      outcome.result = std::move(fresh);
    }
  } catch (const Error& e) {
    outcome.error = e.code();
    outcome.error_message = e.what();
  }
  outcome.latency_ms = elapsed_ms(start);
  if (outcome.result) outcome.result->latency_ms = outcome.latency_ms;
  {
    std::lock_guard lock(stats_mutex_);
    if (looked_up) ++stats_.cache_lookups;
  }
  record(outcome, kind, request);
  return outcome;
}

std::vector<ScoreOutcome> RewardEngine::score_batch(std::span<const ScoreRequest> requests, const RewardKind& kind) {
  std::vector<ScoreOutcome> outcomes(requests.size());
  const std::size_t workers = std::min(config_.workers, requests.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < requests.size(); ++i) outcomes[i] = score_one(requests[i], kind);
    return outcomes;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < requests.size(); i = next++) outcomes[i] = score_one(requests[i], kind);
    });
  }
  for (auto& t : pool) t.join();
  return outcomes;
}

void RewardEngine::record(const ScoreOutcome& outcome, const RewardKind& kind, const ScoreRequest& request) {
  {
    std::lock_guard lock(stats_mutex_);
    ++stats_.items;
    if (!outcome.result) {
      ++stats_.errors;
    } else if (outcome.result->cache_hit) {
      ++stats_.cache_hits;
    } else {
      stats_.verifier_calls[std::string(stats_key(kind.type))] +=
          static_cast<std::uint64_t>(outcome.result->verifier_calls);
    }
    if (latencies_.size() < kLatencyWindow) {
      latencies_.push_back(outcome.latency_ms);
    } else {
      latencies_[(stats_.items - 1) % kLatencyWindow] = outcome.latency_ms;
    }
  }
  if (!config_.audit_log) return;
  nlohmann::ordered_json line;
  line["prompt_id"] = request.prompt_id;
  line["response_digest"] = sha256_hex(request.response);
  line["kind"] = kind.name();
  if (outcome.result) {
    line["value"] = outcome.result->value;
    line["degenerate"] = outcome.result->degenerate;
    line["attempts"] = outcome.result->attempts;
    line["cache_hit"] = outcome.result->cache_hit;
  } else {
    line["value"] = nullptr;
    line["degenerate"] = false;
    line["attempts"] = 0;
    line["cache_hit"] = false;
    line["error"] = std::string(error_code_name(*outcome.error));
  }
  line["latency_ms"] = outcome.latency_ms;
  std::lock_guard lock(stats_mutex_);
  append_line(*config_.audit_log, line.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace));
}

StatsSnapshot RewardEngine::stats() const {
  std::lock_guard lock(stats_mutex_);
  StatsSnapshot snapshot = stats_;
  snapshot.latency_p50_ms = percentile(latencies_, 0.50);
  snapshot.latency_p95_ms = percentile(latencies_, 0.95);
  return snapshot;
}

}  // namespace rar::rewards
