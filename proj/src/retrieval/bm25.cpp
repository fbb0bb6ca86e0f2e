#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "json.hpp"
#include "rar/error.hpp"
#include "rar/retrieval.hpp"

namespace rar::retrieval {

namespace {

bool is_term_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

std::vector<std::string> unique_terms(const std::vector<std::string>& terms) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& t : terms) {
    if (seen.insert(t).second) out.push_back(t);
  }
  return out;
}

}  // namespace

std::vector<std::string> analyze(std::string_view text) {
  std::vector<std::string> terms;
  std::string current;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_term_byte(c)) {
      current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      terms.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) terms.push_back(std::move(current));
  return terms;
}

Bm25Index Bm25Index::build(const datastore::PrecacheEntry& entry, const RetrievalConfig& cfg,
                           const TokenCounter& tokenizer) {
  std::vector<Chunk> chunks;
  for (const auto& doc : entry.documents) {
    for (auto& chunk : chunk_document(doc, cfg, tokenizer)) chunks.push_back(std::move(chunk));
  }
  return from_chunks(std::move(chunks));
}

Bm25Index Bm25Index::from_chunks(std::vector<Chunk> chunks) {
  if (chunks.empty()) throw Error(ErrorCode::kEmptyCorpus, "no chunks to index");
  Bm25Index index;
  index.chunks_ = std::move(chunks);
  index.tf_.resize(index.chunks_.size());
  index.lengths_.resize(index.chunks_.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < index.chunks_.size(); ++i) {
    const auto terms = analyze(index.chunks_[i].text);
    for (const auto& t : terms) ++index.tf_[i][t];
    for (const auto& [term, tf] : index.tf_[i]) ++index.df_[term];
    index.lengths_[i] = terms.size();
    total += terms.size();
  }
  index.avgdl_ = static_cast<double>(total) / static_cast<double>(index.chunks_.size());
  return index;
}

std::size_t Bm25Index::document_frequency(const std::string& term) const {
  auto it = df_.find(term);
  return it == df_.end() ? 0 : it->second;
}

std::size_t Bm25Index::term_frequency(std::size_t chunk, const std::string& term) const {
  const auto& postings = tf_.at(chunk);
  auto it = postings.find(term);
  return it == postings.end() ? 0 : it->second;
}

double Bm25Index::idf(const std::string& term) const {
  const double n = static_cast<double>(document_frequency(term));
  const double total = static_cast<double>(chunks_.size());
  return std::log(1.0 + (total - n + 0.5) / (n + 0.5));
}

double Bm25Index::score(std::size_t chunk, const std::vector<std::string>& query_terms, double k1,
                        double b) const {
  const double relative_length =
      avgdl_ > 0.0 ? static_cast<double>(lengths_.at(chunk)) / avgdl_ : 1.0;
  const double norm = k1 * (1.0 - b + b * relative_length);
  double total = 0.0;
  for (const auto& term : unique_terms(query_terms)) {
    const auto tf = static_cast<double>(term_frequency(chunk, term));
    if (tf == 0.0) continue;
    total += idf(term) * (tf * (k1 + 1.0)) / (tf + norm);
  }
  return total;
}

std::string Bm25Index::snapshot() const {
  nlohmann::ordered_json j;
  j["chunk_count"] = chunks_.size();
  j["average_length"] = avgdl_;
  nlohmann::ordered_json df = nlohmann::ordered_json::object();
  for (const auto& [term, n] : df_) df[term] = n;
  j["document_frequency"] = std::move(df);
  nlohmann::ordered_json postings = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    nlohmann::ordered_json tf = nlohmann::ordered_json::object();
    for (const auto& [term, n] : tf_[i]) tf[term] = n;
    postings.push_back({{"chunk", to_string(chunks_[i].id)},
                        {"length", lengths_[i]},
                        {"term_frequency", std::move(tf)}});
  }
  j["chunks"] = std::move(postings);
  return j.dump(2, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n";
}

EvidenceSet retrieve(const Bm25Index& index, std::string_view query, const RetrievalConfig& cfg) {
  cfg.validate();
  const auto terms = analyze(query);
  const bool scoreable = std::any_of(terms.begin(), terms.end(),
                                     [&](const std::string& t) { return index.document_frequency(t) > 0; });
  if (!scoreable) throw Error(ErrorCode::kEmptyQuery, "no query term occurs in the corpus");

  std::vector<double> scores(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) scores[i] = index.score(i, terms, cfg.bm25_k1, cfg.bm25_b);

  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = std::min(cfg.top_k, index.size());
  const auto& chunks = index.chunks();
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return chunks[a].id < chunks[b].id;
                    });
  EvidenceSet out;
  out.chunks.reserve(k);
  for (std::size_t r = 0; r < k; ++r) out.chunks.push_back({chunks[order[r]], scores[order[r]]});
  return out;
}

EvidenceSet leading_chunks(const Bm25Index& index, const RetrievalConfig& cfg) {
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& chunks = index.chunks();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return chunks[a].id < chunks[b].id; });
  EvidenceSet out;
  const std::size_t k = std::min(cfg.top_k, index.size());
  for (std::size_t r = 0; r < k; ++r) out.chunks.push_back({chunks[order[r]], 0.0});
  return out;
}

}  // namespace rar::retrieval
