#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "rar/datastore.hpp"
#include "rar/error.hpp"
#include "rar/verification.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(RAR_FIXTURES) / name; }

// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("rar-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename Fn>
rar::ErrorCode error_of(Fn&& fn) {
  try {
    fn();
  } catch (const rar::Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected a rar::Error");
}

// Language-model backend replaying canned completions in order and recording
// the prompts it saw.
class ScriptedBackend final : public rar::verification::VerifierBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}

  std::string describe() const override { return "scripted"; }
  std::string complete(const std::string& prompt) override {
    std::lock_guard lock(mutex_);
    prompts.push_back(prompt);
    if (next_ >= replies_.size()) throw rar::Error(rar::ErrorCode::kVerifierUnavailable, "script exhausted");
    return replies_[next_++];
  }

  std::vector<std::string> prompts;

 private:
  std::mutex mutex_;
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
};

// Direct-verdict backend with a fixed latency per call. With claims_per_response
// 0 a response yields 3 + size % 8 claims.
class SlowBackend final : public rar::verification::VerifierBackend {
 public:
  SlowBackend(std::chrono::milliseconds latency, std::size_t claims_per_response)
      : latency_(latency), claims_(claims_per_response) {}

  std::string describe() const override { return "slow"; }
  std::string complete(const std::string&) override {
    throw rar::Error(rar::ErrorCode::kVerifierUnavailable, "not a language model");
  }
  std::optional<rar::verification::Verdict> judge(const rar::verification::VerifierRequest& req) override {
    std::this_thread::sleep_for(latency_);
    ++calls;
    using namespace rar::verification;
    switch (req.mode) {
      case Mode::kWholeResponseBinary: return Verdict{BinaryLabel::kNoContradiction, "", "", 1};
      case Mode::kWholeResponseRating: return Verdict{Rating{10}, "", "", 1};
      case Mode::kPerClaim: return Verdict{ClaimLabel::kSupported, "", "", 1};
    }
    return std::nullopt;
  }
  std::optional<std::vector<std::string>> extract_claims(std::string_view, std::string_view response) override {
    std::this_thread::sleep_for(latency_);
    ++calls;
    std::vector<std::string> out;
    const std::size_t n = claims_ ? claims_ : 3 + response.size() % 8;
    for (std::size_t i = 0; i < n; ++i) out.push_back("claim " + std::to_string(i) + " of " + std::string(response));
    return out;
  }

  std::atomic<int> calls{0};

 private:
  std::chrono::milliseconds latency_;
  std::size_t claims_;
};

inline rar::datastore::PrecacheEntry make_entry(const std::string& prompt_id, const std::vector<std::string>& texts,
                                                const std::string& prompt_text = "prompt") {
  rar::datastore::PrecacheEntry entry;
  entry.prompt_id = prompt_id;
  entry.prompt_text = prompt_text;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    rar::datastore::Document doc;
    doc.source_url = "https://example.org/" + prompt_id + "/" + std::to_string(i);
    doc.doc_id = rar::datastore::document_id_for(doc.source_url);
    doc.text = texts[i];
    entry.documents.push_back(doc);
  }
  entry.version_hash = rar::datastore::compute_version_hash(entry.documents);
  return entry;
}

}  // namespace testing
