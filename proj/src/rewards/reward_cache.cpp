#include "rar/digest.hpp"
#include "rar/fileio.hpp"
#include "rar/rewards.hpp"

namespace rar::rewards {

RewardCache::RewardCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(*path_)) return;
  const std::string content = read_file(*path_);
  std::size_t start = 0;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    const auto line = std::string_view(content).substr(start, end - start);
    start = end + 1;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    // A torn final line from an interrupted append is skipped.
    if (j.is_discarded() || !j.is_object() || !j.contains("key") || !j.contains("result")) continue;
    try {
      RewardResult r = reward_result_from_json(j["result"]);
      r.cache_hit = false;
      entries_.emplace(j["key"].get<std::string>(), std::move(r));
    } catch (const Error&) {
      continue;
    }
  }
}

std::string RewardCache::key(const RewardKind& kind, std::string_view prompt_id, std::string_view response,
                             std::string_view version_hash, std::string_view config_digest) {
  Sha256 hash;
  hash.update_framed("rar.reward.v1");
  hash.update_framed(kind.name());
  hash.update_framed(prompt_id);
  hash.update_framed(response);
  hash.update_framed(version_hash);
  hash.update_framed(config_digest);
  return hash.hex_digest();
}

std::optional<RewardResult> RewardCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void RewardCache::put(const std::string& key, const RewardResult& result) {
  RewardResult stored = result;
  stored.cache_hit = false;
  stored.latency_ms = 0.0;
  {
    std::unique_lock lock(mutex_);
    if (!entries_.emplace(key, stored).second) return;
  }
  if (path_) {
    nlohmann::ordered_json line{{"key", key}, {"result", to_json(stored, false)}};
    std::lock_guard lock(file_mutex_);
    append_line(*path_, line.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace));
  }
}

std::size_t RewardCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

}  // namespace rar::rewards
