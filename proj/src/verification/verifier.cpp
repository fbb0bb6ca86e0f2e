#include <algorithm>
#include <unordered_set>

#include "rar/error.hpp"
#include "rar/verification.hpp"

namespace rar::verification {

class BoundedBackend::Slot {
 public:
  explicit Slot(BoundedBackend& owner) : owner_(owner) {
    std::unique_lock lock(owner_.mutex_);
    owner_.cv_.wait(lock, [this] { return owner_.inflight_ < owner_.max_inflight_; });
    ++owner_.inflight_;
    owner_.peak_ = std::max(owner_.peak_, owner_.inflight_);
  }
  ~Slot() {
    {
      std::lock_guard lock(owner_.mutex_);
      --owner_.inflight_;
    }
    owner_.cv_.notify_one();
  }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  BoundedBackend& owner_;
};

BoundedBackend::BoundedBackend(std::shared_ptr<VerifierBackend> inner, std::size_t max_inflight)
    : inner_(std::move(inner)), max_inflight_(max_inflight) {
  if (!inner_) throw Error(ErrorCode::kInvalidArgument, "bounded backend needs a backend");
  if (max_inflight_ < 1) throw Error(ErrorCode::kInvalidArgument, "max_inflight must be >= 1");
}

std::string BoundedBackend::complete(const std::string& prompt) {
  Slot slot(*this);
  return inner_->complete(prompt);
}

std::optional<Verdict> BoundedBackend::judge(const VerifierRequest& req) {
  Slot slot(*this);
  return inner_->judge(req);
}

std::optional<std::vector<std::string>> BoundedBackend::extract_claims(std::string_view prompt_text,
                                                                       std::string_view response_text) {
  Slot slot(*this);
  return inner_->extract_claims(prompt_text, response_text);
}

std::size_t BoundedBackend::peak_inflight() const {
  std::lock_guard lock(mutex_);
  return peak_;
}

namespace {

Verdict parse_for_mode(Mode mode, std::string_view output) {
  switch (mode) {
    case Mode::kWholeResponseBinary: return parse_binary_verdict(output);
    case Mode::kWholeResponseRating: return parse_rating_verdict(output);
    case Mode::kPerClaim: return parse_claim_verdict(output);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown mode");
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> tidy_claims(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& claim : raw) {
    std::string t = trim(claim);
    if (t.empty() || !seen.insert(t).second) continue;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

Verdict verify(const VerifierRequest& req, VerifierBackend& backend, const VerifyOptions& options) {
  req.validate();
  if (auto verdict = backend.judge(req)) {
    verdict->attempts = 1;
    return *verdict;
  }
  const std::string prompt = render_prompt(req, options.budget);
  const int attempts = std::max(0, options.retry_limit) + 1;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    const std::string output = backend.complete(prompt);
    try {
      Verdict verdict = parse_for_mode(req.mode, output);
      verdict.attempts = attempt;
      return verdict;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kParseFailure) throw;
      last_error = e.what();
    }
  }
  throw Error(ErrorCode::kVerdictUndecidable,
              "no parseable verdict after " + std::to_string(attempts) + " attempts (" + last_error + ")");
}

std::vector<std::string> extract_claims(std::string_view prompt_text, std::string_view response_text,
                                        VerifierBackend& backend, const VerifyOptions& options) {
  if (auto claims = backend.extract_claims(prompt_text, response_text)) return tidy_claims(*claims);
  const std::string prompt = render_claim_extraction_prompt(prompt_text, response_text);
  const int attempts = std::max(0, options.retry_limit) + 1;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    const std::string output = backend.complete(prompt);
    try {
      return tidy_claims(parse_claim_list(output));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kParseFailure) throw;
      last_error = e.what();
    }
  }
  throw Error(ErrorCode::kClaimExtractionFailed,
              "no parseable claim list after " + std::to_string(attempts) + " attempts (" + last_error + ")");
}

}  // namespace rar::verification
