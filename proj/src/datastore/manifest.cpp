#include <unordered_set>

#include "json.hpp"
#include "rar/datastore.hpp"
#include "rar/error.hpp"
#include "rar/fileio.hpp"

namespace rar::datastore {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void invalid(const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, "manifest: " + message);
}

ManifestPage parse_page(const ordered_json& j, const std::string& prompt_id) {
  ManifestPage page;
  if (j.is_string()) {
    page.file = j.get<std::string>();
    page.url = "file://" + page.file;
  } else if (j.is_object()) {
    auto file = j.find("file");
    if (file == j.end() || !file->is_string()) invalid(prompt_id + ": page object needs a string 'file'");
    page.file = file->get<std::string>();
    auto url = j.find("url");
    if (url != j.end() && !url->is_null()) {
      if (!url->is_string()) invalid(prompt_id + ": page 'url' must be a string");
      page.url = url->get<std::string>();
    } else {
      page.url = "file://" + page.file;
    }
    auto fetched = j.find("fetched_at");
    if (fetched != j.end() && !fetched->is_null()) {
      if (!fetched->is_number_integer()) invalid(prompt_id + ": page 'fetched_at' must be an integer");
      page.fetched_at = fetched->get<std::int64_t>();
    }
  } else {
    invalid(prompt_id + ": pages must be filenames or objects");
  }
  if (page.file.empty()) invalid(prompt_id + ": empty page filename");
  const std::filesystem::path p(page.file);
  for (const auto& part : p) {
    if (part == "..") invalid(prompt_id + ": page path escapes the pages directory");
  }
  if (p.is_absolute()) invalid(prompt_id + ": page path must be relative");
  return page;
}

ManifestPrompt parse_prompt(const std::string& prompt_id, const ordered_json& j) {
  if (prompt_id.empty()) invalid("empty prompt_id");
  ManifestPrompt prompt;
  prompt.prompt_id = prompt_id;
  const ordered_json* pages = nullptr;
  if (j.is_array()) {
    pages = &j;
    prompt.prompt_text = prompt_id;
  } else if (j.is_object()) {
    auto text = j.find("prompt_text");
    if (text == j.end() || !text->is_string()) invalid(prompt_id + ": missing string 'prompt_text'");
    prompt.prompt_text = text->get<std::string>();
    auto ref = j.find("reference_response");
    if (ref != j.end() && !ref->is_null()) {
      if (!ref->is_string()) invalid(prompt_id + ": 'reference_response' must be a string");
      prompt.reference_response = ref->get<std::string>();
    }
    auto it = j.find("pages");
    if (it == j.end() || !it->is_array()) invalid(prompt_id + ": missing array 'pages'");
    pages = &*it;
  } else {
    invalid(prompt_id + ": expected an object or a list of page filenames");
  }
  for (const auto& page : *pages) prompt.pages.push_back(parse_page(page, prompt_id));
  return prompt;
}

}  // namespace

std::vector<ManifestPrompt> parse_manifest(std::string_view json_text) {
  ordered_json j = ordered_json::parse(json_text, nullptr, false);
  if (j.is_discarded()) invalid("not valid JSON");

  std::vector<ManifestPrompt> prompts;
  std::unordered_set<std::string> seen;
  auto push = [&](ManifestPrompt prompt) {
    if (!seen.insert(prompt.prompt_id).second) invalid("duplicate prompt_id '" + prompt.prompt_id + "'");
    prompts.push_back(std::move(prompt));
  };

  if (j.is_object()) {
    // Duplicate object keys are collapsed by the parser, so detect them on a
    // second pass over the raw key sequence.
    std::size_t key_count = 0;
    ordered_json::parser_callback_t count_keys = [&](int depth, ordered_json::parse_event_t event,
                                                     ordered_json&) {
      if (depth == 1 && event == ordered_json::parse_event_t::key) ++key_count;
      return true;
    };
    const auto recount = ordered_json::parse(json_text, count_keys, false);
    (void)recount;
    if (key_count != j.size()) invalid("duplicate prompt_id");
    for (const auto& [id, value] : j.items()) push(parse_prompt(id, value));
  } else if (j.is_array()) {
    for (const auto& item : j) {
      if (!item.is_object()) invalid("array entries must be objects");
      auto id = item.find("prompt_id");
      if (id == item.end() || !id->is_string()) invalid("array entries need a string 'prompt_id'");
      push(parse_prompt(id->get<std::string>(), item));
    }
  } else {
    invalid("top level must be an object or an array");
  }
  return prompts;
}

IngestReport ingest_pages(std::span<const ManifestPrompt> manifest, const PageReader& read_page,
                          const BuildOptions& options) {
  // Every page is resolved before anything is built.
  std::vector<std::vector<RawPage>> resolved;
  for (const auto& prompt : manifest) {
    std::vector<RawPage> pages;
    pages.reserve(prompt.pages.size());
    for (const auto& page : prompt.pages) {
      auto body = read_page(page.file);
      if (!body) invalid(prompt.prompt_id + ": page file not found: " + page.file);
      pages.push_back(RawPage{page.url, std::move(*body), page.fetched_at});
    }
    resolved.push_back(std::move(pages));
  }
  IngestReport report;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& prompt = manifest[i];
    auto outcome = build_precache(prompt.prompt_id, prompt.prompt_text, prompt.reference_response, resolved[i], options);
    if (auto* entry = std::get_if<PrecacheEntry>(&outcome)) {
      report.built.push_back(std::move(*entry));
    } else {
      report.discarded.push_back(std::get<Discarded>(std::move(outcome)));
    }
  }
  return report;
}

IngestReport ingest_directory(std::span<const ManifestPrompt> manifest,
                              const std::filesystem::path& pages_dir, const BuildOptions& options) {
  return ingest_pages(
      manifest,
      [&](const std::string& file) -> std::optional<std::string> {
        const auto path = pages_dir / file;
        if (!std::filesystem::is_regular_file(path)) return std::nullopt;
        return read_file(path);
      },
      options);
}

}  // namespace rar::datastore
