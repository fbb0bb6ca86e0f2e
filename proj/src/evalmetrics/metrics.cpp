#include "rar/evalmetrics.hpp"

#include <algorithm>
#include <cctype>

namespace rar::evalmetrics {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

LongFormReport long_form_report(std::span<const verification::ClaimLabel> verdicts) {
  LongFormReport r;
  r.total_claims = verdicts.size();
  for (const auto label : verdicts) {
    switch (label) {
      case verification::ClaimLabel::kSupported: ++r.correct; break;
      case verification::ClaimLabel::kContradicted: ++r.incorrect; break;
      case verification::ClaimLabel::kInconclusive: ++r.inconclusive; break;
    }
  }
  if (r.total_claims == 0) {
    r.zero_claims = true;
    return r;
  }
  const auto total = static_cast<double>(r.total_claims);
  r.hallucination_rate = static_cast<double>(r.incorrect) / total;
  r.strict_rate = static_cast<double>(r.total_claims - r.correct) / total;
  return r;
}

std::string_view short_answer_name(ShortAnswer category) {
  switch (category) {
    case ShortAnswer::kCorrect: return "correct";
    case ShortAnswer::kIncorrect: return "incorrect";
    case ShortAnswer::kAbstain: return "abstain";
  }
  return "unknown";
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    // U+2018 / U+2019 quotes
    if (c == 0xE2 && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
        (static_cast<unsigned char>(text[i + 2]) == 0x98 || static_cast<unsigned char>(text[i + 2]) == 0x99)) {
      i += 2;
      continue;
    }
    if (c == '\'') continue;
    if (is_space(c) || (c < 0x80 && std::ispunct(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
  }
  return out;
}

ShortAnswer categorize_short_answer(std::string_view answer, std::span<const std::string> gold,
                                    std::span<const std::string> abstain_markers) {
  if (gold.empty()) throw Error(ErrorCode::kInvalidArgument, "gold answer set is empty");
  const std::string norm = normalize_answer(answer);
  for (const auto& marker : abstain_markers) {
    if (norm == normalize_answer(marker)) return ShortAnswer::kAbstain;
  }
  for (const auto& alias : gold) {
    if (norm == normalize_answer(alias)) return ShortAnswer::kCorrect;
  }
  return ShortAnswer::kIncorrect;
}

ShortFormReport short_form_report(std::span<const ShortAnswer> answers) {
  if (answers.empty()) throw Error(ErrorCode::kInvalidArgument, "no answers to report on");
  ShortFormReport r;
  r.n = answers.size();
  r.correct = static_cast<std::size_t>(std::count(answers.begin(), answers.end(), ShortAnswer::kCorrect));
  r.incorrect = static_cast<std::size_t>(std::count(answers.begin(), answers.end(), ShortAnswer::kIncorrect));
  r.abstain = r.n - r.correct - r.incorrect;
  r.hallucination_rate = static_cast<double>(r.incorrect) / static_cast<double>(r.n);
  if (r.correct + r.incorrect > 0) {
    r.attempted_accuracy = static_cast<double>(r.correct) / static_cast<double>(r.correct + r.incorrect);
  }
  return r;
}

}  // namespace rar::evalmetrics
