#include <charconv>
#include <cmath>

#include "rar/rewards.hpp"

namespace rar::rewards {

RewardKind RewardKind::parse(std::string_view name) {
  if (name == "binary_rar") return {RewardType::kBinaryRar};
  if (name == "veriscore") return {RewardType::kVeriScore};
  if (name == "conflict_only") return {RewardType::kConflictOnly};
  if (name == "rating_rar") return {RewardType::kRatingRar};
  constexpr std::string_view kBinaryVeri = "binary_veriscore";
  if (name.substr(0, kBinaryVeri.size()) == kBinaryVeri) {
    RewardKind kind{RewardType::kBinaryVeriScore};
    std::string_view rest = name.substr(kBinaryVeri.size());
    if (rest.empty()) return kind;
    if (rest.front() == ':') {
      rest.remove_prefix(1);
      double t = 0.0;
      const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), t);
      if (ec == std::errc() && ptr == rest.data() + rest.size() && std::isfinite(t) && t > 0.0 && t <= 1.0) {
        kind.threshold = t;
        return kind;
      }
      throw Error(ErrorCode::kInvalidArgument, "binary_veriscore threshold must lie in (0, 1]: " + std::string(name));
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown reward kind '" + std::string(name) + "'");
}

std::string RewardKind::name() const {
  switch (type) {
    case RewardType::kBinaryRar: return "binary_rar";
    case RewardType::kVeriScore: return "veriscore";
    case RewardType::kConflictOnly: return "conflict_only";
    case RewardType::kRatingRar: return "rating_rar";
    case RewardType::kBinaryVeriScore: {
      if (threshold == 0.5) return "binary_veriscore";
      char buf[32];
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, threshold);
      return "binary_veriscore:" + std::string(buf, ptr);
    }
  }
  return "unknown";
}

bool RewardKind::uses_claims() const {
  return type == RewardType::kVeriScore || type == RewardType::kBinaryVeriScore ||
         type == RewardType::kConflictOnly;
}

std::string_view stats_key(RewardType type) {
  switch (type) {
    case RewardType::kBinaryRar: return "binary";
    case RewardType::kVeriScore: return "veriscore";
    case RewardType::kBinaryVeriScore: return "binary_veriscore";
    case RewardType::kConflictOnly: return "conflict_only";
    case RewardType::kRatingRar: return "rating";
  }
  return "unknown";
}

bool same_outcome(const RewardResult& a, const RewardResult& b) {
  return a.value == b.value && a.kind == b.kind && a.verdicts == b.verdicts && a.evidence_used == b.evidence_used &&
         a.claims == b.claims && a.degenerate == b.degenerate && a.verifier_calls == b.verifier_calls &&
         a.attempts == b.attempts;
}

}  // namespace rar::rewards
