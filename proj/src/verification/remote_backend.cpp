#include <atomic>
#include <chrono>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "rar/error.hpp"
#include "rar/verification.hpp"

namespace rar::verification {

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "verifier endpoint needs a scheme: " + url);
  const std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

struct RemoteLmBackend::Impl {
  RemoteConfig config;
  Endpoint endpoint;
  mutable std::atomic<bool> available{true};

  std::unique_ptr<httplib::Client> client() const {
    auto c = std::make_unique<httplib::Client>(endpoint.base);
    const auto timeout = std::chrono::milliseconds(config.timeout_ms);
    c->set_connection_timeout(timeout);
    c->set_read_timeout(timeout);
    c->set_write_timeout(timeout);
    return c;
  }
};

RemoteLmBackend::RemoteLmBackend(RemoteConfig config) : impl_(std::make_unique<Impl>()) {
  if (config.endpoint.empty()) throw Error(ErrorCode::kInvalidArgument, "verifier.endpoint is required");
  if (config.model.empty()) throw Error(ErrorCode::kInvalidArgument, "verifier.model is required");
  if (config.timeout_ms <= 0) throw Error(ErrorCode::kInvalidArgument, "verifier.timeout_ms must be positive");
  impl_->endpoint = split_endpoint(config.endpoint);
  impl_->config = std::move(config);
}

RemoteLmBackend::~RemoteLmBackend() = default;

std::string RemoteLmBackend::describe() const {
  return "remote:" + impl_->config.endpoint + ":" + impl_->config.model + ":t0:max" +
         std::to_string(impl_->config.max_tokens);
}

bool RemoteLmBackend::ready() const {
  if (impl_->available) return true;
  auto c = impl_->client();
  if (c->Get("/")) impl_->available = true;
  return impl_->available;
}

std::string RemoteLmBackend::complete(const std::string& prompt) {
  const auto& cfg = impl_->config;
  const nlohmann::json body = {{"model", cfg.model},
                               {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
                               {"temperature", 0},
                               {"max_tokens", cfg.max_tokens}};
  const std::string payload = body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);

  std::string last_error;
  for (int attempt = 0; attempt <= std::max(0, cfg.transport_retries); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 << (attempt - 1)));
    auto res = impl_->client()->Post(impl_->endpoint.path, headers, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      impl_->available = true;
      throw Error(ErrorCode::kVerifierUnavailable, "verifier rejected the request with HTTP " +
                                                       std::to_string(res->status));
    }
    impl_->available = true;
    // A reply without the expected shape is handed to the verdict parser as
    // text, where it counts as a parse failure and is retried.
    const auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) return res->body;
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      return res->body;
    }
  }
  impl_->available = false;
  throw Error(ErrorCode::kVerifierUnavailable, "verifier unreachable: " + last_error);
}

}  // namespace rar::verification
