#include <algorithm>
#include <cctype>
#include <set>

#include "json.hpp"
#include "rar/digest.hpp"
#include "rar/error.hpp"
#include "rar/fileio.hpp"
#include "rar/verification.hpp"

namespace rar::verification {

namespace {

using nlohmann::json;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }
bool is_trailing_punct(char c) { return c == '.' || c == '!' || c == '?' || c == ';' || c == ':' || c == ','; }

std::string collapse_spaces(std::string_view text) {
  std::string out;
  bool pending = false;
  for (const char c : text) {
    if (is_space(c)) {
      pending = true;
      continue;
    }
    if (pending && !out.empty()) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Position of the first whole-word occurrence of `word` in `text`.
std::size_t find_word(std::string_view text, std::string_view word) {
  if (word.empty()) return std::string_view::npos;
  for (std::size_t pos = text.find(word); pos != std::string_view::npos; pos = text.find(word, pos + 1)) {
    const bool left = pos == 0 || !is_word_char(text[pos - 1]);
    const std::size_t end = pos + word.size();
    const bool right = end == text.size() || !is_word_char(text[end]);
    if (left && right) return pos;
  }
  return std::string_view::npos;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    std::string s = collapse_spaces(current);
    if (!s.empty()) out.push_back(std::move(s));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      flush();
      continue;
    }
    current.push_back(c);
    const bool at_break = i + 1 == text.size() || is_space(text[i + 1]);
    if ((c == '.' || c == '!' || c == '?') && at_break) flush();
    if (c == ';' && at_break) {
      current.pop_back();
      flush();
    }
  }
  flush();
  return out;
}

std::string strip_edges(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (is_space(s[b]) || s[b] == ',')) ++b;
  while (e > b && (is_space(s[e - 1]) || is_trailing_punct(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string json_verdict(std::string_view reasoning, int score) {
  return json{{"REASONING", reasoning}, {"SCORE", score}}.dump();
}

}  // namespace

std::string normalize_statement(std::string_view text) {
  std::string s = collapse_spaces(ascii_lower(text));
  while (!s.empty() && (is_trailing_punct(s.back()) || s.back() == ' ')) s.pop_back();
  return s;
}

FactTable::FactTable(std::vector<Fact> facts, std::vector<std::string> conjunctions)
    : facts_(std::move(facts)), conjunctions_(std::move(conjunctions)) {
  std::set<std::pair<std::string, std::string>> seen_patterns;
  for (const auto& fact : facts_) {
    const std::string subject = normalize_statement(fact.subject);
    const std::string value = normalize_statement(fact.value);
    if (subject.empty() || fact.relation.empty() || value.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "fact needs subject, relation and value");
    }
    auto& values = values_[{subject, fact.relation}];
    if (std::find(values.begin(), values.end(), value) == values.end()) values.push_back(value);
    subjects_.emplace(subject, collapse_spaces(fact.subject));

    for (const auto& raw : fact.patterns) {
      const std::string pattern = normalize_statement(raw);
      if (!seen_patterns.insert({fact.relation, pattern}).second) continue;
      const std::size_t s = pattern.find("{subject}");
      const std::size_t v = pattern.find("{value}");
      if (s == std::string::npos || v == std::string::npos ||
          pattern.find("{subject}", s + 1) != std::string::npos ||
          pattern.find("{value}", v + 1) != std::string::npos) {
        throw Error(ErrorCode::kInvalidArgument,
                    "pattern must contain {subject} and {value} exactly once: " + raw);
      }
      CompiledPattern compiled;
      compiled.relation = fact.relation;
      compiled.subject_first = s < v;
      const std::size_t first = std::min(s, v);
      const std::size_t first_len = compiled.subject_first ? 9 : 7;
      const std::size_t second = std::max(s, v);
      const std::size_t second_len = compiled.subject_first ? 7 : 9;
      compiled.prefix = pattern.substr(0, first);
      compiled.infix = pattern.substr(first + first_len, second - first - first_len);
      compiled.suffix = pattern.substr(second + second_len);
      if (compiled.infix.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "pattern placeholders must be separated: " + raw);
      }
      patterns_.push_back(std::move(compiled));
    }
  }
  for (auto& c : conjunctions_) c = ascii_lower(c);
  conjunctions_.erase(std::remove(conjunctions_.begin(), conjunctions_.end(), std::string()), conjunctions_.end());
}

FactTable FactTable::parse(std::string_view json_text) {
  const json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kInvalidArgument, "fact table is not valid JSON");
  const json* list = &j;
  std::vector<std::string> conjunctions{" and "};
  if (j.is_object()) {
    auto facts = j.find("facts");
    if (facts == j.end()) throw Error(ErrorCode::kInvalidArgument, "fact table object needs 'facts'");
    list = &*facts;
    if (auto conj = j.find("conjunctions"); conj != j.end()) {
      if (!conj->is_array()) throw Error(ErrorCode::kInvalidArgument, "'conjunctions' must be a list");
      conjunctions.clear();
      for (const auto& c : *conj) {
        if (!c.is_string()) throw Error(ErrorCode::kInvalidArgument, "conjunctions must be strings");
        conjunctions.push_back(c.get<std::string>());
      }
    }
  }
  if (!list->is_array()) throw Error(ErrorCode::kInvalidArgument, "fact table must be a list of facts");
  std::vector<Fact> facts;
  for (const auto& item : *list) {
    if (!item.is_object()) throw Error(ErrorCode::kInvalidArgument, "facts must be objects");
    Fact fact;
    try {
      fact.subject = item.at("subject").get<std::string>();
      fact.relation = item.at("relation").get<std::string>();
      fact.value = item.at("value").get<std::string>();
      if (auto p = item.find("patterns"); p != item.end()) fact.patterns = p->get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument, std::string("malformed fact: ") + e.what());
    }
    facts.push_back(std::move(fact));
  }
  return FactTable(std::move(facts), std::move(conjunctions));
}

FactTable FactTable::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::vector<Assertion> FactTable::assertions_in(std::string_view statement) const {
  const std::string s = normalize_statement(statement);
  std::vector<Assertion> out;
  for (const auto& p : patterns_) {
    if (s.size() < p.prefix.size() + p.infix.size() + p.suffix.size()) continue;
    if (s.compare(0, p.prefix.size(), p.prefix) != 0) continue;
    if (s.compare(s.size() - p.suffix.size(), p.suffix.size(), p.suffix) != 0) continue;
    const std::string_view middle =
        std::string_view(s).substr(p.prefix.size(), s.size() - p.prefix.size() - p.suffix.size());
    for (std::size_t pos = middle.find(p.infix); pos != std::string_view::npos;
         pos = middle.find(p.infix, pos + 1)) {
      const std::string first(middle.substr(0, pos));
      const std::string second(middle.substr(pos + p.infix.size()));
      const std::string& subject = p.subject_first ? first : second;
      const std::string& value = p.subject_first ? second : first;
      if (value.empty() || subjects_.count(subject) == 0) continue;
      Assertion a{subject, p.relation, value};
      if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(std::move(a));
      break;
    }
  }
  return out;
}

std::vector<std::string> FactTable::statements(std::string_view response) const {
  std::vector<std::string> out;
  for (const auto& sentence : split_sentences(response)) {
    const std::string lowered = ascii_lower(sentence);
    std::vector<std::string> clauses;
    std::size_t start = 0;
    while (true) {
      std::size_t cut = std::string::npos;
      std::size_t cut_len = 0;
      for (const auto& c : conjunctions_) {
        const std::size_t pos = lowered.find(c, start);
        if (pos != std::string::npos && pos < cut) {
          cut = pos;
          cut_len = c.size();
        }
      }
      clauses.push_back(sentence.substr(start, cut == std::string::npos ? std::string::npos : cut - start));
      if (cut == std::string::npos) break;
      start = cut + cut_len;
    }

    std::string carried;
    for (const auto& clause : clauses) {
      std::string text = strip_edges(clause);
      if (text.empty()) continue;
      const std::string norm = normalize_statement(text);
      std::size_t best = std::string::npos;
      std::string subject;
      for (const auto& [key, display] : subjects_) {
        const std::size_t pos = find_word(norm, key);
        if (pos < best || (pos == best && pos != std::string::npos && key.size() > subject.size())) {
          best = pos;
          subject = key;
        }
      }
      if (best != std::string::npos) {
        carried = subjects_.at(subject);
      } else if (!carried.empty()) {
        text = carried + " " + text;
      }
      out.push_back(std::move(text));
    }
  }
  return out;
}

bool FactTable::is_contradicted(const Assertion& a) const {
  auto it = values_.find({a.subject, a.relation});
  if (it == values_.end()) return false;
  return std::find(it->second.begin(), it->second.end(), a.value) == it->second.end();
}

bool FactTable::is_supported(const Assertion& a) const {
  auto it = values_.find({a.subject, a.relation});
  if (it == values_.end()) return false;
  return std::find(it->second.begin(), it->second.end(), a.value) != it->second.end();
}

std::string FactTable::digest() const {
  std::vector<std::string> rows;
  for (const auto& f : facts_) {
    json row{f.subject, f.relation, f.value, f.patterns};
    rows.push_back(row.dump());
  }
  std::sort(rows.begin(), rows.end());
  Sha256 hash;
  hash.update_framed("rar.facts.v1");
  for (const auto& r : rows) hash.update_framed(r);
  for (const auto& c : conjunctions_) hash.update_framed(c);
  return hash.hex_digest();
}

OracleBackend::OracleBackend(FactTable table) : table_(std::move(table)), digest_(table_.digest()) {}

std::string OracleBackend::describe() const { return "oracle:" + digest_; }

std::string OracleBackend::complete(const std::string&) {
  throw Error(ErrorCode::kInvalidArgument, "the oracle backend decides without prompts");
}

std::optional<Verdict> OracleBackend::judge(const VerifierRequest& req) {
  if (req.mode == Mode::kPerClaim) {
    const auto assertions = table_.assertions_in(*req.claim_text);
    ClaimLabel label = ClaimLabel::kInconclusive;
    std::string reasoning = "no fact covers the claim";
    if (std::any_of(assertions.begin(), assertions.end(), [&](const auto& a) { return table_.is_contradicted(a); })) {
      label = ClaimLabel::kContradicted;
      reasoning = "the claim contradicts a stored fact";
    } else if (!assertions.empty() &&
               std::all_of(assertions.begin(), assertions.end(), [&](const auto& a) { return table_.is_supported(a); })) {
      label = ClaimLabel::kSupported;
      reasoning = "every asserted fact is stored";
    }
    return Verdict{label, reasoning, std::string(label_name(label)), 1};
  }

  std::vector<Assertion> contradicted;
  for (const auto& statement : table_.statements(req.response_text)) {
    for (auto& a : table_.assertions_in(statement)) {
      if (table_.is_contradicted(a) && std::find(contradicted.begin(), contradicted.end(), a) == contradicted.end()) {
        contradicted.push_back(std::move(a));
      }
    }
  }
  std::string reasoning = "No contradiction found.";
  if (!contradicted.empty()) {
    const auto& a = contradicted.front();
    reasoning = "The response states " + a.subject + " " + a.relation + " " + a.value +
                ", which the evidence contradicts.";
  }
  if (req.mode == Mode::kWholeResponseBinary) {
    const int score = contradicted.empty() ? 1 : 0;
    return Verdict{contradicted.empty() ? BinaryLabel::kNoContradiction : BinaryLabel::kContradiction, reasoning,
                   json_verdict(reasoning, score), 1};
  }
  const int rating = oracle_rating(contradicted.size());
  return Verdict{Rating{rating}, reasoning, json_verdict(reasoning, rating), 1};
}

std::optional<std::vector<std::string>> OracleBackend::extract_claims(std::string_view,
                                                                      std::string_view response_text) {
  std::vector<std::string> claims;
  for (auto& statement : table_.statements(response_text)) {
    const std::string norm = normalize_statement(statement);
    bool mentions_subject = false;
    for (const auto& fact : table_.facts()) {
      if (find_word(norm, normalize_statement(fact.subject)) != std::string_view::npos) {
        mentions_subject = true;
        break;
      }
    }
    if (mentions_subject) claims.push_back(std::move(statement));
  }
  return claims;
}

}  // namespace rar::verification
