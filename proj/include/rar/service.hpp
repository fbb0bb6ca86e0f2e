#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "rar/rewards.hpp"

namespace rar::service {

// Backend and engine wired from a settings file. A configured promptset path
// that does not exist yet starts the engine with an empty set.
struct Runtime {
  std::shared_ptr<verification::BoundedBackend> backend;
  std::shared_ptr<rewards::RewardEngine> engine;
};

Runtime build_runtime(const rewards::Settings& settings);

// "host:port"; throws kInvalidArgument.
std::pair<std::string, int> parse_listen(std::string_view listen);

struct ServiceOptions {
  std::size_t max_batch = 256;
  std::optional<std::string> bearer_token;
  std::optional<std::filesystem::path> promptset_path;
};

// HTTP front end:
//   POST /v1/score     {kind, items: [{prompt_id, response}]} -> {results: [...]}
//   POST /v1/precache  multipart manifest + page files [?overwrite=true]
//   GET  /v1/health
//   GET  /v1/stats
class ScoringService {
 public:
  ScoringService(std::shared_ptr<rewards::RewardEngine> engine,
                 std::shared_ptr<verification::VerifierBackend> backend, ServiceOptions options);
  ~ScoringService();

  ScoringService(const ScoringService&) = delete;
  ScoringService& operator=(const ScoringService&) = delete;

  // Binds and serves on a background thread. Port 0 picks a free port; the
  // bound port is returned. Throws kIoError when binding fails.
  int start(const std::string& host, int port);
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

  std::uint64_t requests() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rar::service
