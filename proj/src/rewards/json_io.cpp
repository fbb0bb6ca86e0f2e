#include "rar/rewards.hpp"

namespace rar::rewards {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using verification::BinaryLabel;
using verification::ClaimLabel;

[[noreturn]] void corrupt(const std::string& message) { throw Error(ErrorCode::kCorruptRecord, message); }

std::optional<ClaimLabel> claim_label_from(std::string_view s) {
  if (s == "supported") return ClaimLabel::kSupported;
  if (s == "contradicted") return ClaimLabel::kContradicted;
  if (s == "inconclusive") return ClaimLabel::kInconclusive;
  return std::nullopt;
}

verification::VerdictKind verdict_kind_from(const std::string& s) {
  if (s == "no_contradiction") return BinaryLabel::kNoContradiction;
  if (s == "contradiction") return BinaryLabel::kContradiction;
  if (auto label = claim_label_from(s)) return *label;
  constexpr std::string_view kRating = "rating:";
  if (s.rfind(kRating, 0) == 0) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(s.substr(kRating.size()), &used);
      if (used == s.size() - kRating.size() && v >= 0 && v <= 10) return verification::Rating{v};
    } catch (const std::exception&) {
    }
  }
  corrupt("unknown verdict kind '" + s + "'");
}

}  // namespace

ordered_json to_json(const verification::Verdict& verdict) {
  return {{"kind", verification::verdict_kind_name(verdict.kind)},
          {"reasoning", verdict.reasoning},
          {"raw_model_output", verdict.raw_model_output},
          {"attempts", verdict.attempts}};
}

ordered_json to_json(const RewardResult& result, bool include_timing) {
  ordered_json j;
  j["value"] = result.value;
  j["kind"] = result.kind.name();
  j["degenerate"] = result.degenerate;
  j["cache_hit"] = result.cache_hit;
  j["verifier_calls"] = result.verifier_calls;
  j["attempts"] = result.attempts;
  ordered_json evidence = ordered_json::array();
  for (const auto& id : result.evidence_used) evidence.push_back({{"doc_id", id.doc_id}, {"ordinal", id.ordinal}});
  j["evidence_used"] = std::move(evidence);
  ordered_json verdicts = ordered_json::array();
  for (const auto& v : result.verdicts) verdicts.push_back(to_json(v));
  j["verdicts"] = std::move(verdicts);
  if (result.claims) {
    ordered_json claims = ordered_json::array();
    for (const auto& c : *result.claims) {
      claims.push_back({{"text", c.text},
                        {"verdict", c.verdict ? ordered_json(verification::label_name(*c.verdict)) : ordered_json()}});
    }
    j["claims"] = std::move(claims);
  } else {
    j["claims"] = nullptr;
  }
  if (include_timing) j["latency_ms"] = result.latency_ms;
  return j;
}

ordered_json to_json(const ScoreOutcome& outcome, bool include_timing) {
  ordered_json j;
  j["prompt_id"] = outcome.prompt_id;
  if (outcome.result) {
    const ordered_json result = to_json(*outcome.result, false);
    for (const auto& [key, value] : result.items()) j[key] = value;
  } else {
    j["error"] = outcome.error ? std::string(error_code_name(*outcome.error)) : std::string("internal");
    j["message"] = outcome.error_message;
  }
  if (include_timing) j["latency_ms"] = outcome.latency_ms;
  return j;
}

ordered_json to_json(const StatsSnapshot& stats) {
  ordered_json calls = ordered_json::object();
  for (const auto type : {RewardType::kBinaryRar, RewardType::kVeriScore, RewardType::kBinaryVeriScore,
                          RewardType::kConflictOnly, RewardType::kRatingRar}) {
    const std::string key(stats_key(type));
    auto it = stats.verifier_calls.find(key);
    calls[key] = it == stats.verifier_calls.end() ? 0 : it->second;
  }
  return {{"items", stats.items},
          {"errors", stats.errors},
          {"cache_lookups", stats.cache_lookups},
          {"cache_hits", stats.cache_hits},
          {"cache_hit_rate", stats.cache_hit_rate()},
          {"verifier_calls", std::move(calls)},
          {"latency_ms", {{"p50", stats.latency_p50_ms}, {"p95", stats.latency_p95_ms}}}};
}

verification::Verdict verdict_from_json(const json& j) {
  try {
    verification::Verdict v;
    v.kind = verdict_kind_from(j.at("kind").get<std::string>());
    v.reasoning = j.at("reasoning").get<std::string>();
    v.raw_model_output = j.at("raw_model_output").get<std::string>();
    v.attempts = j.at("attempts").get<int>();
    return v;
  } catch (const json::exception& e) {
    corrupt(std::string("malformed verdict: ") + e.what());
  }
}

RewardResult reward_result_from_json(const json& j) {
  if (!j.is_object()) corrupt("reward result must be an object");
  try {
    RewardResult r;
    r.value = j.at("value").get<double>();
    try {
      r.kind = RewardKind::parse(j.at("kind").get<std::string>());
    } catch (const Error& e) {
      corrupt(e.what());
    }
    r.degenerate = j.at("degenerate").get<bool>();
    r.cache_hit = j.value("cache_hit", false);
    r.verifier_calls = j.at("verifier_calls").get<int>();
    r.attempts = j.at("attempts").get<int>();
    for (const auto& id : j.at("evidence_used")) {
      r.evidence_used.push_back({id.at("doc_id").get<std::string>(), id.at("ordinal").get<std::size_t>()});
    }
    for (const auto& v : j.at("verdicts")) r.verdicts.push_back(verdict_from_json(v));
    const json& claims = j.at("claims");
    if (!claims.is_null()) {
      std::vector<Claim> list;
      for (const auto& c : claims) {
        Claim claim{c.at("text").get<std::string>(), std::nullopt};
        const json& verdict = c.at("verdict");
        if (!verdict.is_null()) {
          claim.verdict = claim_label_from(verdict.get<std::string>());
          if (!claim.verdict) corrupt("unknown claim verdict");
        }
        list.push_back(std::move(claim));
      }
      r.claims = std::move(list);
    }
    r.latency_ms = j.value("latency_ms", 0.0);
    return r;
  } catch (const json::exception& e) {
    corrupt(std::string("malformed reward result: ") + e.what());
  }
}

}  // namespace rar::rewards
