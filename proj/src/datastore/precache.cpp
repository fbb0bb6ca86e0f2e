#include <algorithm>
#include <unordered_set>
#include <utility>

#include "rar/datastore.hpp"
#include "rar/digest.hpp"
#include "rar/error.hpp"
#include "rar/utf8.hpp"

namespace rar::datastore {

PromptSet::PromptSet(std::vector<PrecacheEntry> entries) {
  for (auto& entry : entries) add(std::move(entry));
}

const PrecacheEntry* PromptSet::find(std::string_view prompt_id) const {
  for (const auto& entry : entries_) {
    if (entry.prompt_id == prompt_id) return &entry;
  }
  return nullptr;
}

void PromptSet::add(PrecacheEntry entry) {
  if (contains(entry.prompt_id)) {
    throw Error(ErrorCode::kConflict, "duplicate prompt_id '" + entry.prompt_id + "'");
  }
  entries_.push_back(std::move(entry));
}

void PromptSet::upsert(PrecacheEntry entry) {
  for (auto& existing : entries_) {
    if (existing.prompt_id == entry.prompt_id) {
      existing = std::move(entry);
      return;
    }
  }
  entries_.push_back(std::move(entry));
}

std::string document_id_for(std::string_view source_url) {
  return sha256_hex(source_url).substr(0, 32);
}

std::string compute_version_hash(std::span<const Document> documents) {
  std::vector<std::pair<std::string_view, std::string_view>> pairs;
  pairs.reserve(documents.size());
  for (const auto& doc : documents) pairs.emplace_back(doc.doc_id, doc.text);
  std::sort(pairs.begin(), pairs.end());

  Sha256 hash;
  hash.update_framed("rar.precache.v1");
  for (const auto& [id, text] : pairs) {
    hash.update_framed(id);
    hash.update_framed(text);
  }
  return hash.hex_digest();
}

BuildOutcome build_precache(std::string prompt_id, std::string prompt_text,
                            std::optional<std::string> reference_response,
                            std::span<const RawPage> pages, const BuildOptions& options) {
  std::vector<Document> documents;
  std::unordered_set<std::string> seen;
  for (const auto& page : pages) {
    if (documents.size() == kMaxDocuments) break;
    std::string doc_id = document_id_for(page.url);
    if (seen.count(doc_id) != 0) continue;
    std::string text;
    try {
      text = clean_document(page.html);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kEmptyAfterCleaning) continue;
      throw;
    }
    seen.insert(doc_id);
    Document doc;
    doc.doc_id = std::move(doc_id);
    doc.source_url = utf8::repair(page.url);
    if (options.keep_raw_html) doc.raw_html = utf8::repair(page.html);
    doc.text = std::move(text);
    doc.fetched_at = page.fetched_at;
    documents.push_back(std::move(doc));
  }

  if (documents.size() < kMinDocuments) {
    return Discarded{std::move(prompt_id), "min_documents", documents.size()};
  }

  PrecacheEntry entry;
  entry.prompt_id = std::move(prompt_id);
  entry.prompt_text = utf8::repair(prompt_text);
  if (reference_response) entry.reference_response = utf8::repair(*reference_response);
  entry.version_hash = compute_version_hash(documents);
  entry.documents = std::move(documents);
  return entry;
}

}  // namespace rar::datastore
