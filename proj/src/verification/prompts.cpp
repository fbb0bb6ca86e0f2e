#include <map>

#include "rar/error.hpp"
#include "rar/utf8.hpp"
#include "rar/verification.hpp"
#include "templates.inc"

namespace rar::verification {

namespace {

// Single left-to-right pass, so substituted text is never rescanned.
std::string fill(std::string_view tpl, const std::map<std::string_view, std::string_view>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] == '{') {
      const std::size_t close = tpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = values.find(tpl.substr(i + 1, close - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tpl[i++]);
  }
  return out;
}

std::string_view template_for(Mode mode) {
  switch (mode) {
    case Mode::kWholeResponseBinary: return templates::kBinary;
    case Mode::kWholeResponseRating: return templates::kRating;
    case Mode::kPerClaim: return templates::kClaimVerification;
  }
  return templates::kBinary;
}

std::string render_with_passages(std::string_view tpl, std::map<std::string_view, std::string_view> values,
                                 const retrieval::EvidenceSet& evidence, const PromptBudget& budget) {
  values["passages_text"] = "";
  const std::string fixed = fill(tpl, values);
  const std::string passages = render_passages(evidence, fixed, budget);
  values["passages_text"] = passages;
  return fill(tpl, values);
}

}  // namespace

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::kWholeResponseBinary: return "whole_response_binary";
    case Mode::kWholeResponseRating: return "whole_response_rating";
    case Mode::kPerClaim: return "per_claim";
  }
  return "unknown";
}

std::string_view label_name(BinaryLabel label) {
  return label == BinaryLabel::kNoContradiction ? "no_contradiction" : "contradiction";
}

std::string_view label_name(ClaimLabel label) {
  switch (label) {
    case ClaimLabel::kSupported: return "supported";
    case ClaimLabel::kContradicted: return "contradicted";
    case ClaimLabel::kInconclusive: return "inconclusive";
  }
  return "unknown";
}

std::string verdict_kind_name(const VerdictKind& kind) {
  if (const auto* b = std::get_if<BinaryLabel>(&kind)) return std::string(label_name(*b));
  if (const auto* c = std::get_if<ClaimLabel>(&kind)) return std::string(label_name(*c));
  return "rating:" + std::to_string(std::get<Rating>(kind).value);
}

void VerifierRequest::validate() const {
  if (evidence.empty()) throw Error(ErrorCode::kInvalidArgument, "verifier request has no evidence");
  if ((mode == Mode::kPerClaim) != claim_text.has_value()) {
    throw Error(ErrorCode::kInvalidArgument, "claim_text must be present exactly in per-claim mode");
  }
}

std::string render_passages(const retrieval::EvidenceSet& evidence, std::string_view fixed_text,
                            const PromptBudget& budget) {
  std::size_t used = utf8::code_point_count(fixed_text);
  std::string out;
  std::size_t count = 0;
  for (const auto& scored : evidence.chunks) {
    if (count == budget.max_passages) break;
    const std::string_view body = utf8::truncate(scored.chunk.text, budget.passage_chars);
    std::string block = "[" + std::to_string(count + 1) + "] (" + scored.chunk.id.doc_id + ") ";
    block += body;
    const std::string separator = count == 0 ? "" : "\n\n";
    const std::size_t cost = utf8::code_point_count(separator) + utf8::code_point_count(block);
    if (budget.passage_chars == 0 || used + cost > budget.max_prompt_chars) break;
    out += separator;
    out += block;
    used += cost;
    ++count;
  }
  if (count == 0) {
    throw Error(ErrorCode::kTemplateBudgetExceeded, "no evidence passage fits the prompt budget");
  }
  return out;
}

std::string render_prompt(const VerifierRequest& req, const PromptBudget& budget) {
  req.validate();
  std::map<std::string_view, std::string_view> values{{"prompt_text", req.prompt_text},
                                                      {"response_text", req.response_text}};
  if (req.claim_text) values["claim_text"] = *req.claim_text;
  return render_with_passages(template_for(req.mode), std::move(values), req.evidence, budget);
}

std::string render_claim_extraction_prompt(std::string_view prompt_text, std::string_view response_text) {
  return fill(templates::kClaimExtraction, {{"prompt_text", prompt_text}, {"response_text", response_text}});
}

std::string render_dataset_curation_prompt(const retrieval::EvidenceSet& evidence, std::string_view claim_text,
                                           const PromptBudget& budget) {
  if (evidence.empty()) throw Error(ErrorCode::kInvalidArgument, "dataset curation needs evidence");
  return render_with_passages(templates::kDatasetCuration, {{"claim_text", claim_text}}, evidence, budget);
}

}  // namespace rar::verification
