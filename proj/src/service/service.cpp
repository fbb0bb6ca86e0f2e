#include "rar/service.hpp"

#include <charconv>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace rar::service {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void send_json(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDiskFull: return 507;
    case ErrorCode::kConflict: return 409;
    case ErrorCode::kVerifierUnavailable: return 503;
    case ErrorCode::kIoError:
    case ErrorCode::kInternal: return 500;
    default: return 400;
  }
}

}  // namespace

Runtime build_runtime(const rewards::Settings& settings) {
  settings.validate();
  Runtime rt;
  rt.backend = rewards::make_backend(settings);
  auto scorer = std::make_shared<rewards::Scorer>(rt.backend, rewards::make_tokenizer(settings),
                                                  rewards::make_scoring_config(settings));
  auto prompts = std::make_shared<const datastore::PromptSet>();
  if (settings.promptset_path && std::filesystem::exists(*settings.promptset_path)) {
    prompts = std::make_shared<const datastore::PromptSet>(datastore::load_promptset(*settings.promptset_path));
  }
  rewards::EngineConfig cfg;
  cfg.workers = settings.workers;
  cfg.cache_path = settings.cache_path;
  cfg.audit_log = settings.audit_log;
  rt.engine = std::make_shared<rewards::RewardEngine>(std::move(prompts), std::move(scorer), cfg);
  return rt;
}

std::pair<std::string, int> parse_listen(std::string_view listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(ErrorCode::kInvalidArgument, "listen address must be host:port, got '" + std::string(listen) + "'");
  }
  int port = -1;
  const auto digits = listen.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || port < 0 || port > 65535) {
    throw Error(ErrorCode::kInvalidArgument, "invalid port in '" + std::string(listen) + "'");
  }
  std::string host(listen.substr(0, colon));
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  return {host, port};
}

struct ScoringService::Impl {
  std::shared_ptr<rewards::RewardEngine> engine;
  std::shared_ptr<verification::VerifierBackend> backend;
  ServiceOptions options;
  httplib::Server server;
  std::thread thread;
  std::atomic<std::uint64_t> requests{0};
  std::mutex precache_mutex;

  void routes();
  void score(const httplib::Request& req, httplib::Response& res);
  void precache(const httplib::Request& req, httplib::Response& res);
  void health(httplib::Response& res);
  void stats(httplib::Response& res);
};

void ScoringService::Impl::routes() {
  // SO_REUSEADDR without SO_REUSEPORT.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
  });
  server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    requests.fetch_add(1, std::memory_order_relaxed);
    if (options.bearer_token && req.path != "/v1/health" &&
        req.get_header_value("Authorization") != "Bearer " + *options.bearer_token) {
      send_error(res, 401, "unauthorized", "missing or wrong bearer token");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });
  server.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) { score(req, res); });
  server.Post("/v1/precache", [this](const httplib::Request& req, httplib::Response& res) { precache(req, res); });
  server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) { health(res); });
  server.Get("/v1/stats", [this](const httplib::Request&, httplib::Response& res) { stats(res); });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, status_for(e.code()), error_code_name(e.code()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });
}

void ScoringService::Impl::score(const httplib::Request& req, httplib::Response& res) {
  const json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    send_error(res, 400, "invalid_argument", "body must be a JSON object");
    return;
  }
  auto kind_it = body.find("kind");
  auto items_it = body.find("items");
  if (kind_it == body.end() || !kind_it->is_string() || items_it == body.end() || !items_it->is_array()) {
    send_error(res, 400, "invalid_argument", "body needs a string 'kind' and an array 'items'");
    return;
  }
  rewards::RewardKind kind;
  try {
    kind = rewards::RewardKind::parse(kind_it->get<std::string>());
  } catch (const Error& e) {
    send_error(res, 400, "invalid_argument", e.what());
    return;
  }
  if (items_it->size() > options.max_batch) {
    send_error(res, 413, "batch_too_large",
               std::to_string(items_it->size()) + " items exceed max_batch " + std::to_string(options.max_batch));
    return;
  }
  std::vector<rewards::ScoreRequest> requests_in;
  requests_in.reserve(items_it->size());
  for (const auto& item : *items_it) {
    if (!item.is_object() || !item.contains("prompt_id") || !item["prompt_id"].is_string() ||
        !item.contains("response") || !item["response"].is_string()) {
      send_error(res, 400, "invalid_argument", "each item needs string 'prompt_id' and 'response'");
      return;
    }
    requests_in.push_back({item["prompt_id"].get<std::string>(), item["response"].get<std::string>()});
  }
  if (!requests_in.empty() && !backend->ready()) {
    send_error(res, 503, "verifier_unavailable", "the verifier backend is not reachable");
    return;
  }
  const auto outcomes = engine->score_batch(requests_in, kind);
  ordered_json results = ordered_json::array();
  for (const auto& outcome : outcomes) results.push_back(rewards::to_json(outcome, true));
  send_json(res, 200, {{"results", std::move(results)}});
}

void ScoringService::Impl::precache(const httplib::Request& req, httplib::Response& res) {
  if (!req.is_multipart_form_data()) {
    send_error(res, 400, "invalid_argument", "expected multipart/form-data");
    return;
  }
  auto manifest_it = req.files.find("manifest");
  if (manifest_it == req.files.end()) {
    send_error(res, 400, "invalid_argument", "missing 'manifest' part");
    return;
  }
  const bool overwrite = req.get_param_value("overwrite") == "true";

  std::vector<datastore::ManifestPrompt> manifest;
  datastore::IngestReport report;
  try {
    manifest = datastore::parse_manifest(manifest_it->second.content);
    report = datastore::ingest_pages(manifest, [&](const std::string& file) -> std::optional<std::string> {
      for (const auto& [name, part] : req.files) {
        if (name == "manifest") continue;
        if (part.filename == file || name == file) return part.content;
      }
      return std::nullopt;
    });
  } catch (const Error& e) {
    send_error(res, 400, error_code_name(e.code()), e.what());
    return;
  }

  std::lock_guard lock(precache_mutex);
  const auto current = engine->promptset();
  if (!overwrite) {
    for (const auto& prompt : manifest) {
      if (current->contains(prompt.prompt_id)) {
        send_error(res, 409, "conflict", "prompt_id '" + prompt.prompt_id + "' already exists; use overwrite=true");
        return;
      }
    }
  }
  auto next = std::make_shared<datastore::PromptSet>(*current);
  for (const auto& entry : report.built) next->upsert(entry);
  if (options.promptset_path) datastore::save_promptset(*next, *options.promptset_path);
  engine->set_promptset(std::move(next));

  ordered_json built = ordered_json::array();
  for (const auto& entry : report.built) {
    built.push_back({{"prompt_id", entry.prompt_id},
                     {"documents", entry.documents.size()},
                     {"version_hash", entry.version_hash}});
  }
  ordered_json discarded = ordered_json::array();
  for (const auto& d : report.discarded) {
    discarded.push_back(
        {{"prompt_id", d.prompt_id}, {"reason", d.reason}, {"surviving_documents", d.surviving_documents}});
  }
  send_json(res, 200, {{"built", std::move(built)}, {"discarded", std::move(discarded)}});
}

void ScoringService::Impl::health(httplib::Response& res) {
  const auto prompts = engine->promptset();
  const bool ready = backend->ready();
  send_json(res, 200,
            {{"status", ready ? "ok" : "degraded"},
             {"promptset", {{"loaded", !prompts->empty()}, {"prompts", prompts->size()}}},
             {"backend", {{"ready", ready}, {"describe", backend->describe()}}}});
}

void ScoringService::Impl::stats(httplib::Response& res) {
  ordered_json body{{"requests", requests.load(std::memory_order_relaxed)}};
  const auto stats = rewards::to_json(engine->stats());
  for (const auto& [key, value] : stats.items()) body[key] = value;
  send_json(res, 200, body);
}

ScoringService::ScoringService(std::shared_ptr<rewards::RewardEngine> engine,
                               std::shared_ptr<verification::VerifierBackend> backend, ServiceOptions options)
    : impl_(std::make_unique<Impl>()) {
  if (!engine || !backend) throw Error(ErrorCode::kInvalidArgument, "service needs an engine and a backend");
  if (options.max_batch < 1) throw Error(ErrorCode::kInvalidArgument, "max_batch must be >= 1");
  impl_->engine = std::move(engine);
  impl_->backend = std::move(backend);
  impl_->options = std::move(options);
  impl_->routes();
}

ScoringService::~ScoringService() { stop(); }

int ScoringService::start(const std::string& host, int port) {
  if (impl_->thread.joinable()) throw Error(ErrorCode::kInvalidArgument, "service already started");
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kIoError, "cannot bind " + host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kIoError, "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ScoringService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void ScoringService::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::uint64_t ScoringService::requests() const { return impl_->requests.load(std::memory_order_relaxed); }

}  // namespace rar::service
