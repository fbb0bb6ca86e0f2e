#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rar::datastore {

inline constexpr int kSchemaVersion = 1;

// Evidence sets below this size are never persisted.
inline constexpr std::size_t kMinDocuments = 3;
inline constexpr std::size_t kMaxDocuments = 10;

struct Document {
  std::string doc_id;
  std::string source_url;
  std::optional<std::string> raw_html;
  std::string text;
  std::int64_t fetched_at = 0;  // unix seconds

  bool operator==(const Document&) const = default;
};

// Pre-cached evidence for one training prompt.
struct PrecacheEntry {
  std::string prompt_id;
  std::string prompt_text;
  std::optional<std::string> reference_response;
  std::vector<Document> documents;
  std::string version_hash;

  bool operator==(const PrecacheEntry&) const = default;
};

class PromptSet {
 public:
  PromptSet() = default;
  explicit PromptSet(std::vector<PrecacheEntry> entries);

  const std::vector<PrecacheEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const PrecacheEntry* find(std::string_view prompt_id) const;
  bool contains(std::string_view prompt_id) const { return find(prompt_id) != nullptr; }

  // Throws kConflict if the prompt_id is already present.
  void add(PrecacheEntry entry);
  // Replaces an existing entry with the same prompt_id, or appends.
  void upsert(PrecacheEntry entry);

  bool operator==(const PromptSet&) const = default;

 private:
  std::vector<PrecacheEntry> entries_;
};

struct RawPage {
  std::string url;
  std::string html;
  std::int64_t fetched_at = 0;
};

struct Discarded {
  std::string prompt_id;
  std::string reason;  // "min_documents"
  std::size_t surviving_documents = 0;
};

using BuildOutcome = std::variant<PrecacheEntry, Discarded>;

// Visible text of an HTML page: markup, script/style blocks and navigation
// boilerplate removed, entities decoded, runs of whitespace collapsed to one
// space, one paragraph per line. Input without any markup is treated as plain
// text whose lines are paragraphs. Throws kEmptyAfterCleaning.
std::string clean_document(std::string_view raw_html);

std::string document_id_for(std::string_view source_url);

// Digest over the (doc_id, text) pairs in sorted order.
std::string compute_version_hash(std::span<const Document> documents);

struct BuildOptions {
  bool keep_raw_html = false;
};

BuildOutcome build_precache(std::string prompt_id, std::string prompt_text,
                            std::optional<std::string> reference_response,
                            std::span<const RawPage> pages, const BuildOptions& options = {});

// Newline-delimited records, one PrecacheEntry per line.
std::string serialize_entry(const PrecacheEntry& entry);
PrecacheEntry parse_entry(std::string_view line);

void save_promptset(const PromptSet& set, const std::filesystem::path& path);
PromptSet load_promptset(const std::filesystem::path& path);

// Raw-page ingestion: a manifest naming, for each prompt, the page files that
// were fetched for it.
struct ManifestPage {
  std::string file;
  std::string url;
  std::int64_t fetched_at = 0;
};

struct ManifestPrompt {
  std::string prompt_id;
  std::string prompt_text;
  std::optional<std::string> reference_response;
  std::vector<ManifestPage> pages;
};

// Throws kInvalidArgument on malformed manifests or duplicate prompt ids.
std::vector<ManifestPrompt> parse_manifest(std::string_view json_text);

struct IngestReport {
  std::vector<PrecacheEntry> built;
  std::vector<Discarded> discarded;
};

// Page body for a manifest file name, or nullopt when it is missing.
using PageReader = std::function<std::optional<std::string>(const std::string& file)>;

// Builds every manifest prompt from pages supplied by `read_page`. A missing
// page raises kInvalidArgument before any entry is built.
IngestReport ingest_pages(std::span<const ManifestPrompt> manifest, const PageReader& read_page,
                          const BuildOptions& options = {});

// Reads every page referenced by the manifest from `pages_dir` and builds the
// entries. Missing page files raise kInvalidArgument.
IngestReport ingest_directory(std::span<const ManifestPrompt> manifest,
                              const std::filesystem::path& pages_dir,
                              const BuildOptions& options = {});

}  // namespace rar::datastore
