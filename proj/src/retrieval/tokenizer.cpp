#include <algorithm>

#include "rar/digest.hpp"
#include "rar/error.hpp"
#include "rar/fileio.hpp"
#include "rar/retrieval.hpp"
#include "rar/utf8.hpp"

namespace rar::retrieval {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::vector<TokenSpan> WhitespaceTokenCounter::tokenize(std::string_view text) const {
  std::vector<TokenSpan> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) break;
    const std::size_t begin = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    spans.push_back({begin, i});
  }
  return spans;
}

VocabularyTokenCounter::VocabularyTokenCounter(std::vector<std::string> vocabulary, std::string label)
    : label_(std::move(label)) {
  std::sort(vocabulary.begin(), vocabulary.end());
  vocabulary.erase(std::unique(vocabulary.begin(), vocabulary.end()), vocabulary.end());
  Sha256 hash;
  for (auto& piece : vocabulary) {
    if (piece.empty()) continue;
    if (std::any_of(piece.begin(), piece.end(), is_space)) {
      throw Error(ErrorCode::kInvalidArgument, "vocabulary entries must not contain whitespace");
    }
    hash.update_framed(piece);
    max_len_ = std::max(max_len_, piece.size());
    vocab_.insert(std::move(piece));
  }
  digest_ = hash.hex_digest().substr(0, 16);
}

VocabularyTokenCounter VocabularyTokenCounter::load(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::vector<std::string> pieces;
  std::size_t start = 0;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    std::string line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) pieces.push_back(std::move(line));
    start = end + 1;
  }
  if (pieces.empty()) throw Error(ErrorCode::kInvalidArgument, "empty vocabulary file " + path.string());
  return VocabularyTokenCounter(std::move(pieces), path.filename().string());
}

std::string VocabularyTokenCounter::name() const { return "vocabulary:" + label_ + ":" + digest_; }

std::vector<TokenSpan> VocabularyTokenCounter::tokenize(std::string_view text) const {
  std::vector<TokenSpan> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    std::size_t run_end = i;
    while (run_end < text.size() && !is_space(text[run_end])) ++run_end;
    std::size_t len = std::min(max_len_, run_end - i);
    for (; len > 0; --len) {
      if (vocab_.count(std::string(text.substr(i, len))) != 0) break;
    }
    if (len == 0) len = std::max<std::size_t>(1, utf8::sequence_length(text, i));
    spans.push_back({i, i + len});
    i += len;
  }
  return spans;
}

std::size_t count_tokens(std::string_view text, const TokenCounter& tokenizer) { return tokenizer.count(text); }

}  // namespace rar::retrieval
