#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rar/error.hpp"
#include "rar/verification.hpp"

namespace rar::evalmetrics {

struct LongFormReport {
  std::size_t total_claims = 0;
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  std::size_t inconclusive = 0;
  double hallucination_rate = 0.0;  // incorrect / total
  double strict_rate = 0.0;         // (total - correct) / total
  bool zero_claims = false;

  bool operator==(const LongFormReport&) const = default;
};

LongFormReport long_form_report(std::span<const verification::ClaimLabel> verdicts);

enum class ShortAnswer { kCorrect, kIncorrect, kAbstain };

std::string_view short_answer_name(ShortAnswer category);

inline const std::vector<std::string> kDefaultAbstainMarkers{"i don't know", "i do not know", "idk"};

// Case-folded, trimmed, punctuation and apostrophes removed, whitespace
// collapsed.
std::string normalize_answer(std::string_view text);

// Throws kInvalidArgument on an empty gold set.
ShortAnswer categorize_short_answer(std::string_view answer, std::span<const std::string> gold,
                                    std::span<const std::string> abstain_markers = kDefaultAbstainMarkers);

struct ShortFormReport {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  std::size_t abstain = 0;
  double hallucination_rate = 0.0;
  std::optional<double> attempted_accuracy;  // absent when nothing was attempted

  bool operator==(const ShortFormReport&) const = default;
};

// Throws kInvalidArgument on an empty list.
ShortFormReport short_form_report(std::span<const ShortAnswer> answers);

}  // namespace rar::evalmetrics
