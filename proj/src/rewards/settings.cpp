#include <cstdlib>
#include <set>

#include "rar/fileio.hpp"
#include "rar/rewards.hpp"

namespace rar::rewards {

namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, "config: " + message);
}

void check_keys(const json& section, const std::string& name, const std::set<std::string>& allowed) {
  if (!section.is_object()) invalid("'" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    if (allowed.count(key) == 0) invalid("unknown key '" + name + "." + key + "'");
  }
}

template <typename T>
void read(const json& section, const std::string& prefix, const char* key, T& out) {
  auto it = section.find(key);
  if (it == section.end() || it->is_null()) return;
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_integer() || it->get<long long>() < 0) invalid(prefix + key + " must be a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) invalid(prefix + key + " must be an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) invalid(prefix + key + " must be a number");
    }
    out = it->get<T>();
  } catch (const json::exception&) {
    invalid(prefix + key + " has the wrong type");
  }
}

void read_path(const json& section, const std::string& prefix, const char* key,
               std::optional<std::filesystem::path>& out, const std::filesystem::path& base) {
  std::string value;
  read(section, prefix, key, value);
  if (value.empty()) return;
  std::filesystem::path p(value);
  out = p.is_absolute() || base.empty() ? p : base / p;
}

void read_retrieval(const json& root, const char* name, retrieval::RetrievalConfig& cfg) {
  auto it = root.find(name);
  if (it == root.end()) return;
  std::set<std::string> allowed{"chunk_size_tokens", "top_k", "bm25_k1", "bm25_b"};
  if (std::string_view(name) == "retrieval") allowed.insert("vocabulary_path");
  check_keys(*it, name, allowed);
  const std::string prefix = std::string(name) + ".";
  read(*it, prefix, "chunk_size_tokens", cfg.chunk_size_tokens);
  read(*it, prefix, "top_k", cfg.top_k);
  read(*it, prefix, "bm25_k1", cfg.bm25_k1);
  read(*it, prefix, "bm25_b", cfg.bm25_b);
}

}  // namespace

void Settings::validate() const {
  if (max_batch < 1) invalid("service.max_batch must be >= 1");
  if (max_inflight_verifier < 1) invalid("service.max_inflight_verifier must be >= 1");
  if (workers < 1) invalid("service.workers must be >= 1");
  retrieval.validate();
  claim_retrieval.validate();
  if (verifier.backend != "oracle" && verifier.backend != "remote") {
    invalid("verifier.backend must be 'oracle' or 'remote'");
  }
  if (verifier.backend == "oracle" && !verifier.oracle_facts) invalid("verifier.oracle_facts is required");
  if (verifier.backend == "remote" && (verifier.endpoint.empty() || verifier.model.empty())) {
    invalid("verifier.endpoint and verifier.model are required");
  }
  if (verifier.retry_limit < 0) invalid("verifier.retry_limit must be >= 0");
  if (verifier.timeout_ms <= 0) invalid("verifier.timeout_ms must be positive");
  if (verifier.budget.passage_chars < 1 || verifier.budget.max_passages < 1) {
    invalid("verifier.passage_chars and verifier.max_passages must be >= 1");
  }
}

Settings parse_settings(std::string_view json_text, const std::filesystem::path& base_dir) {
  const json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded()) invalid("not valid JSON");
  check_keys(root, "config", {"service", "retrieval", "claim_retrieval", "verifier"});

  Settings s;
  if (auto it = root.find("service"); it != root.end()) {
    check_keys(*it, "service", {"listen", "max_batch", "max_inflight_verifier", "workers", "cache_path",
                                "promptset_path", "audit_log", "bearer_token"});
    read(*it, "service.", "listen", s.listen);
    read(*it, "service.", "max_batch", s.max_batch);
    read(*it, "service.", "max_inflight_verifier", s.max_inflight_verifier);
    read(*it, "service.", "workers", s.workers);
    read_path(*it, "service.", "cache_path", s.cache_path, base_dir);
    read_path(*it, "service.", "promptset_path", s.promptset_path, base_dir);
    read_path(*it, "service.", "audit_log", s.audit_log, base_dir);
    std::string token;
    read(*it, "service.", "bearer_token", token);
    if (!token.empty()) s.bearer_token = token;
  }
  read_retrieval(root, "retrieval", s.retrieval);
  read_retrieval(root, "claim_retrieval", s.claim_retrieval);
  if (auto it = root.find("retrieval"); it != root.end()) {
    read_path(*it, "retrieval.", "vocabulary_path", s.vocabulary_path, base_dir);
  }
  if (auto it = root.find("verifier"); it != root.end()) {
    check_keys(*it, "verifier", {"backend", "endpoint", "model", "timeout_ms", "max_tokens", "retry_limit",
                                 "oracle_facts", "passage_chars", "max_passages", "max_prompt_chars"});
    auto& v = s.verifier;
    read(*it, "verifier.", "backend", v.backend);
    read(*it, "verifier.", "endpoint", v.endpoint);
    read(*it, "verifier.", "model", v.model);
    read(*it, "verifier.", "timeout_ms", v.timeout_ms);
    read(*it, "verifier.", "max_tokens", v.max_tokens);
    read(*it, "verifier.", "retry_limit", v.retry_limit);
    read_path(*it, "verifier.", "oracle_facts", v.oracle_facts, base_dir);
    read(*it, "verifier.", "passage_chars", v.budget.passage_chars);
    read(*it, "verifier.", "max_passages", v.budget.max_passages);
    read(*it, "verifier.", "max_prompt_chars", v.budget.max_prompt_chars);
  }
  return s;
}

Settings load_settings(const std::filesystem::path& path) {
  return parse_settings(read_file(path), path.parent_path());
}

void apply_environment(Settings& settings) {
  if (const char* listen = std::getenv("RAR_LISTEN"); listen != nullptr && *listen != '\0') settings.listen = listen;
  if (const char* key = std::getenv("RAR_VERIFIER_API_KEY"); key != nullptr) settings.verifier.api_key = key;
}

std::shared_ptr<const retrieval::TokenCounter> make_tokenizer(const Settings& settings) {
  if (settings.vocabulary_path) {
    return std::make_shared<const retrieval::VocabularyTokenCounter>(
        retrieval::VocabularyTokenCounter::load(*settings.vocabulary_path));
  }
  return std::make_shared<const retrieval::WhitespaceTokenCounter>();
}

std::shared_ptr<verification::BoundedBackend> make_backend(const Settings& settings) {
  std::shared_ptr<verification::VerifierBackend> inner;
  if (settings.verifier.backend == "oracle") {
    if (!settings.verifier.oracle_facts) invalid("verifier.oracle_facts is required");
    inner = std::make_shared<verification::OracleBackend>(verification::FactTable::load(*settings.verifier.oracle_facts));
  } else {
    verification::RemoteConfig remote;
    remote.endpoint = settings.verifier.endpoint;
    remote.model = settings.verifier.model;
    remote.api_key = settings.verifier.api_key;
    remote.timeout_ms = settings.verifier.timeout_ms;
    remote.max_tokens = settings.verifier.max_tokens;
    inner = std::make_shared<verification::RemoteLmBackend>(std::move(remote));
  }
  return std::make_shared<verification::BoundedBackend>(std::move(inner), settings.max_inflight_verifier);
}

ScoringConfig make_scoring_config(const Settings& settings) {
  ScoringConfig cfg;
  cfg.retrieval = settings.retrieval;
  cfg.claim_retrieval = settings.claim_retrieval;
  cfg.verify.retry_limit = settings.verifier.retry_limit;
  cfg.verify.budget = settings.verifier.budget;
  return cfg;
}

}  // namespace rar::rewards
