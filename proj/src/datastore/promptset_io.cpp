#include <unordered_set>

#include "json.hpp"
#include "rar/datastore.hpp"
#include "rar/error.hpp"
#include "rar/fileio.hpp"

namespace rar::datastore {

namespace {

using nlohmann::json;

json optional_string(const std::optional<std::string>& value) {
  return value ? json(*value) : json(nullptr);
}

const json& require(const json& object, const char* key) {
  auto it = object.find(key);
  if (it == object.end()) throw Error(ErrorCode::kCorruptRecord, std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& object, const char* key) {
  const json& value = require(object, key);
  if (!value.is_string()) throw Error(ErrorCode::kCorruptRecord, std::string("field '") + key + "' must be a string");
  return value.get<std::string>();
}

std::optional<std::string> optional_string_field(const json& object, const char* key) {
  const json& value = require(object, key);
  if (value.is_null()) return std::nullopt;
  if (!value.is_string()) throw Error(ErrorCode::kCorruptRecord, std::string("field '") + key + "' must be a string or null");
  return value.get<std::string>();
}

Document parse_document(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kCorruptRecord, "document must be an object");
  Document doc;
  doc.doc_id = require_string(j, "doc_id");
  doc.source_url = require_string(j, "source_url");
  doc.raw_html = optional_string_field(j, "raw_html");
  doc.text = require_string(j, "text");
  const json& fetched = require(j, "fetched_at");
  if (!fetched.is_number_integer()) throw Error(ErrorCode::kCorruptRecord, "field 'fetched_at' must be an integer");
  doc.fetched_at = fetched.get<std::int64_t>();
  if (doc.text.empty()) throw Error(ErrorCode::kCorruptRecord, "document " + doc.doc_id + " has empty text");
  return doc;
}

}  // namespace

std::string serialize_entry(const PrecacheEntry& entry) {
  json docs = json::array();
  for (const auto& doc : entry.documents) {
    docs.push_back({{"doc_id", doc.doc_id},
                    {"source_url", doc.source_url},
                    {"raw_html", optional_string(doc.raw_html)},
                    {"text", doc.text},
                    {"fetched_at", doc.fetched_at}});
  }
  json j = {{"schema_version", kSchemaVersion},
            {"prompt_id", entry.prompt_id},
            {"prompt_text", entry.prompt_text},
            {"reference_response", optional_string(entry.reference_response)},
            {"documents", std::move(docs)},
            {"version_hash", entry.version_hash}};
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

PrecacheEntry parse_entry(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kCorruptRecord, "record is not a JSON object");

  const json& version = require(j, "schema_version");
  if (!version.is_number_integer()) throw Error(ErrorCode::kCorruptRecord, "schema_version must be an integer");
  if (version.get<std::int64_t>() != kSchemaVersion) {
    throw Error(ErrorCode::kSchemaVersionMismatch,
                "expected schema_version " + std::to_string(kSchemaVersion) + ", found " + version.dump());
  }

  PrecacheEntry entry;
  entry.prompt_id = require_string(j, "prompt_id");
  entry.prompt_text = require_string(j, "prompt_text");
  entry.reference_response = optional_string_field(j, "reference_response");
  entry.version_hash = require_string(j, "version_hash");
  const json& docs = require(j, "documents");
  if (!docs.is_array()) throw Error(ErrorCode::kCorruptRecord, "field 'documents' must be an array");
  std::unordered_set<std::string> ids;
  for (const auto& d : docs) {
    Document doc = parse_document(d);
    if (!ids.insert(doc.doc_id).second) {
      throw Error(ErrorCode::kCorruptRecord, "duplicate doc_id " + doc.doc_id + " in " + entry.prompt_id);
    }
    entry.documents.push_back(std::move(doc));
  }
  if (entry.documents.size() < kMinDocuments) {
    throw Error(ErrorCode::kCorruptRecord, "entry " + entry.prompt_id + " has fewer than 3 documents");
  }
  if (compute_version_hash(entry.documents) != entry.version_hash) {
    throw Error(ErrorCode::kCorruptRecord, "version_hash mismatch for " + entry.prompt_id);
  }
  return entry;
}

void save_promptset(const PromptSet& set, const std::filesystem::path& path) {
  std::string content;
  for (const auto& entry : set.entries()) {
    content += serialize_entry(entry);
    content.push_back('\n');
  }
  write_file_atomic(path, content);
}

PromptSet load_promptset(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  PromptSet set;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    std::string_view line(content.data() + start, end - start);
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      set.add(parse_entry(line));
    } catch (const Error& e) {
      const ErrorCode code = e.code() == ErrorCode::kConflict ? ErrorCode::kCorruptRecord : e.code();
      throw Error(code, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return set;
}

}  // namespace rar::datastore
