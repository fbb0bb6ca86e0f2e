#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "rar/datastore.hpp"

namespace rar::retrieval {

// Half-open byte range into the counted text.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

class TokenCounter {
 public:
  virtual ~TokenCounter() = default;

  // Token boundaries, in order and non-overlapping. Bytes not covered by any
  // span are separators.
  virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;
  virtual std::string name() const = 0;

  std::size_t count(std::string_view text) const { return tokenize(text).size(); }
};

// Maximal runs of non-whitespace bytes.
class WhitespaceTokenCounter final : public TokenCounter {
 public:
  std::vector<TokenSpan> tokenize(std::string_view text) const override;
  std::string name() const override { return "whitespace"; }
};

// Greedy longest-match over a vocabulary file with one token per line. A code
// point no vocabulary entry covers becomes its own token; whitespace separates.
class VocabularyTokenCounter final : public TokenCounter {
 public:
  static VocabularyTokenCounter load(const std::filesystem::path& path);
  explicit VocabularyTokenCounter(std::vector<std::string> vocabulary, std::string label = "vocabulary");

  std::vector<TokenSpan> tokenize(std::string_view text) const override;
  std::string name() const override;

 private:
  std::unordered_set<std::string> vocab_;
  std::size_t max_len_ = 0;
  std::string label_;
  std::string digest_;
};

std::size_t count_tokens(std::string_view text, const TokenCounter& tokenizer);

struct ChunkId {
  std::string doc_id;
  std::size_t ordinal = 0;

  auto operator<=>(const ChunkId&) const = default;
  bool operator==(const ChunkId&) const = default;
};

std::string to_string(const ChunkId& id);

struct Chunk {
  ChunkId id;
  std::string text;
  std::size_t token_count = 0;

  bool operator==(const Chunk&) const = default;
};

struct RetrievalConfig {
  std::size_t chunk_size_tokens = 512;
  std::size_t top_k = 8;
  double bm25_k1 = 1.2;
  double bm25_b = 0.75;

  // Throws kInvalidArgument.
  void validate() const;

  static RetrievalConfig claim_defaults() { return {256, 4, 1.2, 0.75}; }
};

// Windows of at most chunk_size_tokens tokens. Separator bytes belong to the
// chunk of the token before them (leading separators to the first chunk), so
// the chunk texts concatenate back to doc.text.
std::vector<Chunk> chunk_document(const datastore::Document& doc, const RetrievalConfig& cfg,
                                  const TokenCounter& tokenizer);

// BM25 analysis: ASCII lowercase, split on anything that is not an ASCII
// letter or digit; bytes >= 0x80 are kept as term characters.
std::vector<std::string> analyze(std::string_view text);

struct ScoredChunk {
  Chunk chunk;
  double score = 0.0;
};

struct EvidenceSet {
  std::vector<ScoredChunk> chunks;

  bool empty() const { return chunks.empty(); }
  std::size_t size() const { return chunks.size(); }
};

class Bm25Index {
 public:
  // Chunks every document in entry order. Throws kEmptyCorpus.
  static Bm25Index build(const datastore::PrecacheEntry& entry, const RetrievalConfig& cfg,
                         const TokenCounter& tokenizer);
  static Bm25Index from_chunks(std::vector<Chunk> chunks);

  const std::vector<Chunk>& chunks() const { return chunks_; }
  std::size_t size() const { return chunks_.size(); }
  double average_length() const { return avgdl_; }
  std::size_t chunk_length(std::size_t i) const { return lengths_[i]; }
  std::size_t document_frequency(const std::string& term) const;
  std::size_t term_frequency(std::size_t chunk, const std::string& term) const;
  double idf(const std::string& term) const;

  // Okapi BM25 of one chunk against the analyzed query. Each distinct query
  // term contributes once.
  double score(std::size_t chunk, const std::vector<std::string>& query_terms, double k1, double b) const;

  // Postings, lengths and corpus statistics as a JSON document, for debugging
  // and golden tests.
  std::string snapshot() const;

  bool operator==(const Bm25Index&) const = default;

 private:
  std::vector<Chunk> chunks_;
  std::vector<std::map<std::string, std::size_t>> tf_;
  std::vector<std::size_t> lengths_;
  std::map<std::string, std::size_t> df_;
  double avgdl_ = 0.0;
};

// Top min(top_k, N) chunks by score, ties by chunk id. Throws kEmptyQuery when
// no query term occurs in the corpus.
EvidenceSet retrieve(const Bm25Index& index, std::string_view query, const RetrievalConfig& cfg);

// The first min(top_k, N) chunks in id order with score 0.
EvidenceSet leading_chunks(const Bm25Index& index, const RetrievalConfig& cfg);

}  // namespace rar::retrieval
