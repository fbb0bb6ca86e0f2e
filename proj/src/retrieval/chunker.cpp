#include <algorithm>

#include "rar/error.hpp"
#include "rar/retrieval.hpp"

namespace rar::retrieval {

std::string to_string(const ChunkId& id) { return id.doc_id + "#" + std::to_string(id.ordinal); }

void RetrievalConfig::validate() const {
  if (chunk_size_tokens < 1) throw Error(ErrorCode::kInvalidArgument, "chunk_size_tokens must be >= 1");
  if (top_k < 1) throw Error(ErrorCode::kInvalidArgument, "top_k must be >= 1");
  if (!(bm25_k1 >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "bm25_k1 must be >= 0");
  if (!(bm25_b >= 0.0 && bm25_b <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "bm25_b must lie in [0, 1]");
}

std::vector<Chunk> chunk_document(const datastore::Document& doc, const RetrievalConfig& cfg,
                                  const TokenCounter& tokenizer) {
  cfg.validate();
  const std::string_view text = doc.text;
  const std::vector<TokenSpan> spans = tokenizer.tokenize(text);
  std::vector<Chunk> chunks;
  if (spans.empty()) {
    if (!text.empty()) chunks.push_back({{doc.doc_id, 0}, doc.text, 0});
    return chunks;
  }
  std::size_t cut = 0;
  for (std::size_t first = 0; first < spans.size(); first += cfg.chunk_size_tokens) {
    const std::size_t last = std::min(first + cfg.chunk_size_tokens, spans.size());
    const std::size_t end = last == spans.size() ? text.size() : spans[last].begin;
    chunks.push_back({{doc.doc_id, chunks.size()}, std::string(text.substr(cut, end - cut)), last - first});
    cut = end;
  }
  return chunks;
}

}  // namespace rar::retrieval
