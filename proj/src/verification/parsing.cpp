#include <cctype>
#include <cmath>

#include "json.hpp"
#include "rar/error.hpp"
#include "rar/verification.hpp"

namespace rar::verification {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) { throw Error(ErrorCode::kParseFailure, message); }

// End (one past the closing bracket) of the balanced region opening at
// `start`, skipping bracket characters inside JSON strings.
std::size_t balanced_end(std::string_view text, std::size_t start, char open, char close) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == open) {
      ++depth;
    } else if (c == close) {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

// Parsed JSON values delimited by `open`/`close`, latest start first.
template <typename Accept>
std::optional<json> last_json(std::string_view text, char open, char close, Accept accept) {
  for (std::size_t pos = text.size(); pos-- > 0;) {
    if (text[pos] != open) continue;
    const std::size_t end = balanced_end(text, pos, open, close);
    if (end == std::string_view::npos) continue;
    json value = json::parse(text.substr(pos, end - pos), nullptr, false);
    if (value.is_discarded()) continue;
    if (accept(value)) return value;
  }
  return std::nullopt;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

const json* find_key_ci(const json& object, std::string_view key) {
  for (auto it = object.begin(); it != object.end(); ++it) {
    if (lower(it.key()) == key) return &it.value();
  }
  return nullptr;
}

std::optional<long long> integral_score(const json& value) {
  double number = 0.0;
  if (value.is_number_integer()) return value.get<long long>();
  if (value.is_number_float()) {
    number = value.get<double>();
  } else if (value.is_string()) {
    std::string s = value.get<std::string>();
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return std::nullopt;
    s = s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
    std::size_t used = 0;
    try {
      number = std::stod(s, &used);
    } catch (const std::exception&) {
      return std::nullopt;
    }
    if (used != s.size()) return std::nullopt;
  } else {
    return std::nullopt;
  }
  if (!std::isfinite(number) || std::floor(number) != number) return std::nullopt;
  return static_cast<long long>(number);
}

struct ScoredObject {
  long long score;
  std::string reasoning;
};

ScoredObject parse_scored_object(std::string_view model_output, long long lo, long long hi) {
  auto object = last_json(model_output, '{', '}', [](const json& v) {
    return v.is_object() && find_key_ci(v, "reasoning") != nullptr && find_key_ci(v, "score") != nullptr;
  });
  if (!object) fail("no JSON object with REASONING and SCORE");
  const auto score = integral_score(*find_key_ci(*object, "score"));
  if (!score || *score < lo || *score > hi) {
    fail("SCORE outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  const json& reasoning = *find_key_ci(*object, "reasoning");
  return {*score, reasoning.is_string() ? reasoning.get<std::string>() : reasoning.dump()};
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

bool contains_word(std::string_view haystack, std::string_view word) {
  for (std::size_t pos = haystack.find(word); pos != std::string_view::npos; pos = haystack.find(word, pos + 1)) {
    const bool left = pos == 0 || !is_word_char(haystack[pos - 1]);
    const std::size_t end = pos + word.size();
    const bool right = end == haystack.size() || !is_word_char(haystack[end]);
    if (left && right) return true;
  }
  return false;
}

}  // namespace

Verdict parse_binary_verdict(std::string_view model_output) {
  const auto parsed = parse_scored_object(model_output, 0, 1);
  return Verdict{parsed.score == 1 ? BinaryLabel::kNoContradiction : BinaryLabel::kContradiction,
                 parsed.reasoning, std::string(model_output), 1};
}

Verdict parse_rating_verdict(std::string_view model_output) {
  const auto parsed = parse_scored_object(model_output, 0, 10);
  return Verdict{Rating{static_cast<int>(parsed.score)}, parsed.reasoning, std::string(model_output), 1};
}

Verdict parse_claim_verdict(std::string_view model_output) {
  std::string_view last;
  std::size_t start = 0;
  while (start <= model_output.size()) {
    std::size_t end = model_output.find('\n', start);
    if (end == std::string_view::npos) end = model_output.size();
    const std::string_view line = model_output.substr(start, end - start);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) last = line;
    start = end + 1;
  }
  if (last.empty()) fail("empty claim verdict");
  const std::string text = lower(last);
  std::optional<ClaimLabel> found;
  int matches = 0;
  for (const ClaimLabel label : {ClaimLabel::kSupported, ClaimLabel::kContradicted, ClaimLabel::kInconclusive}) {
    if (contains_word(text, label_name(label))) {
      found = label;
      ++matches;
    }
  }
  if (matches != 1) fail("expected exactly one claim label, found " + std::to_string(matches));
  return Verdict{*found, "", std::string(model_output), 1};
}

std::vector<std::string> parse_claim_list(std::string_view model_output) {
  auto list = last_json(model_output, '[', ']', [](const json& v) {
    if (!v.is_array()) return false;
    for (const auto& item : v) {
      if (!item.is_string()) return false;
    }
    return true;
  });
  if (!list) fail("no JSON list of strings");
  return list->get<std::vector<std::string>>();
}

}  // namespace rar::verification
