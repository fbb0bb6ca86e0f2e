#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "rar/error.hpp"

namespace rar::grpo {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kLogRatioClamp = 20.0;

struct GrpoConfig {
  std::size_t group_size = 8;
  double clip_epsilon = 0.2;
  double kl_coefficient = 1e-3;
  double learning_rate = 1e-6;
  std::size_t batch_prompts = 16;

  // Throws kInvalidArgument.
  void validate() const {
    if (group_size < 2) throw Error(ErrorCode::kInvalidArgument, "group_size must be >= 2");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw Error(ErrorCode::kInvalidArgument, "clip_epsilon must lie in (0, 1)");
    if (!(kl_coefficient >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "kl_coefficient must be >= 0");
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning_rate must be positive");
    if (batch_prompts < 1) throw Error(ErrorCode::kInvalidArgument, "batch_prompts must be >= 1");
  }
};

template <typename Scalar>
struct AdvantageVector {
  Vector<Scalar> values;
  bool degenerate = false;
};

// (r - mean) / std with the population std. A group whose rewards are all
// equal gets zero advantages and is flagged degenerate.
template <typename Derived>
AdvantageVector<typename Derived::Scalar> compute_advantages(const Eigen::MatrixBase<Derived>& rewards) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = rewards.size();
  if (n < 2) throw Error(ErrorCode::kGroupTooSmall, "a group needs at least 2 rewards, got " + std::to_string(n));
  if (!rewards.allFinite()) throw Error(ErrorCode::kNonFinite, "rewards must be finite");
  AdvantageVector<Scalar> out;
  if (rewards.maxCoeff() == rewards.minCoeff()) {
    out.values = Vector<Scalar>::Zero(n);
    out.degenerate = true;
    return out;
  }
  const Vector<Scalar> centered = rewards.derived().array() - rewards.mean();
  const Scalar stddev = std::sqrt(centered.squaredNorm() / static_cast<Scalar>(n));
  out.values = centered / stddev;
  return out;
}

template <typename Scalar>
Scalar clamp_log_ratio(Scalar x) {
  return std::clamp(x, Scalar(-kLogRatioClamp), Scalar(kLogRatioClamp));
}

// u - ln u - 1 with u = pi_ref / pi_policy, from log-probabilities.
template <typename Scalar>
  requires std::is_floating_point_v<Scalar>
Scalar kl_estimator(Scalar logp_ref, Scalar logp_policy) {
  if (!std::isfinite(logp_ref) || !std::isfinite(logp_policy)) {
    throw Error(ErrorCode::kNonFinite, "log-probabilities must be finite");
  }
  const Scalar d = clamp_log_ratio(logp_ref - logp_policy);
  return std::expm1(d) - d;
}

// Element-wise estimator over token arrays.
template <typename DerivedRef, typename DerivedPolicy>
auto kl_estimator(const Eigen::ArrayBase<DerivedRef>& logp_ref, const Eigen::ArrayBase<DerivedPolicy>& logp_policy) {
  using Scalar = typename DerivedRef::Scalar;
  if (!logp_ref.allFinite() || !logp_policy.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "log-probabilities must be finite");
  }
  const Eigen::Array<Scalar, Eigen::Dynamic, 1> d =
      (logp_ref - logp_policy).cwiseMax(Scalar(-kLogRatioClamp)).cwiseMin(Scalar(kLogRatioClamp));
  return Eigen::Array<Scalar, Eigen::Dynamic, 1>(d.expm1() - d);
}

// n responses for one prompt. Log-probabilities are natural logs, one per
// response token.
template <typename Scalar>
struct RolloutGroup {
  std::string prompt_id;
  std::vector<std::vector<int>> responses;
  Vector<Scalar> rewards;
  std::vector<Vector<Scalar>> logprob_policy;
  std::vector<Vector<Scalar>> logprob_old;
  std::vector<Vector<Scalar>> logprob_ref;

  std::size_t size() const { return responses.size(); }

  // Throws kLengthMismatch.
  void validate() const {
    const std::size_t n = responses.size();
    if (static_cast<std::size_t>(rewards.size()) != n || logprob_policy.size() != n || logprob_old.size() != n ||
        logprob_ref.size() != n) {
      throw Error(ErrorCode::kLengthMismatch, "group arrays disagree on the number of responses");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto len = static_cast<Eigen::Index>(responses[i].size());
      if (len == 0) throw Error(ErrorCode::kLengthMismatch, "response " + std::to_string(i) + " is empty");
      if (logprob_policy[i].size() != len || logprob_old[i].size() != len || logprob_ref[i].size() != len) {
        throw Error(ErrorCode::kLengthMismatch,
                    "log-probability arrays of response " + std::to_string(i) + " do not match its length");
      }
    }
  }
};

template <typename Scalar>
struct SurrogateValue {
  Scalar objective = 0;
  Scalar clip_fraction = 0;
  Scalar kl_value = 0;
};

template <typename Scalar>
struct SurrogateGradient {
  SurrogateValue<Scalar> value;
  AdvantageVector<Scalar> advantages;
  // d objective / d logprob_policy, shaped like the group's arrays.
  std::vector<Vector<Scalar>> d_logprob_policy;
};

// Clipped, KL-penalized objective: per token min(rho A, clip(rho) A) - beta
// KL, averaged over each response's tokens and then over responses.
template <typename Scalar>
SurrogateGradient<Scalar> surrogate_with_gradient(const RolloutGroup<Scalar>& group,
                                                  const AdvantageVector<Scalar>& advantages, Scalar clip_epsilon,
                                                  Scalar kl_coefficient) {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  group.validate();
  const std::size_t n = group.size();
  if (static_cast<std::size_t>(advantages.values.size()) != n) {
    throw Error(ErrorCode::kLengthMismatch, "one advantage per response is required");
  }
  if (!(clip_epsilon > 0)) throw Error(ErrorCode::kInvalidArgument, "clip_epsilon must be positive");
  if (!(kl_coefficient >= 0)) throw Error(ErrorCode::kInvalidArgument, "kl_coefficient must be >= 0");

  SurrogateGradient<Scalar> out;
  out.advantages = advantages;
  out.d_logprob_policy.resize(n);
  Scalar surrogate_sum = 0;
  Scalar kl_sum = 0;
  std::size_t clipped = 0;
  std::size_t tokens = 0;
  const Scalar lo = Scalar(1) - clip_epsilon;
  const Scalar hi = Scalar(1) + clip_epsilon;
  const Scalar clamp = Scalar(kLogRatioClamp);

  for (std::size_t i = 0; i < n; ++i) {
    const Array policy = group.logprob_policy[i].array();
    const Array old = group.logprob_old[i].array();
    const Array ref = group.logprob_ref[i].array();
    if (!policy.allFinite() || !old.allFinite() || !ref.allFinite()) {
      throw Error(ErrorCode::kNonFinite, "log-probabilities must be finite");
    }
    const Scalar a = advantages.values[static_cast<Eigen::Index>(i)];
    const auto len = static_cast<Scalar>(policy.size());
    const Scalar w = Scalar(1) / (static_cast<Scalar>(n) * len);

    const Array log_ratio = policy - old;
    const Array rho = log_ratio.cwiseMax(-clamp).cwiseMin(clamp).exp();
    const Array unclipped = rho * a;
    const Array clipped_term = rho.cwiseMax(lo).cwiseMin(hi) * a;
    const Array term = unclipped.cwiseMin(clipped_term);
    const auto active = (clipped_term < unclipped);
    const Array inside = (log_ratio.abs() < clamp).template cast<Scalar>();

    const Array kl_log = ref - policy;
    const Array kl_d = kl_log.cwiseMax(-clamp).cwiseMin(clamp);
    const Array u = kl_d.exp();
    const Array kl = kl_d.expm1() - kl_d;
    const Array kl_inside = (kl_log.abs() < clamp).template cast<Scalar>();

    surrogate_sum += term.sum() / len;
    kl_sum += kl.sum() / len;
    clipped += static_cast<std::size_t>(active.count());
    tokens += static_cast<std::size_t>(policy.size());

    const Array d_surrogate = active.select(Array::Zero(policy.size()), unclipped * inside);
    const Array d_kl = (Scalar(1) - u) * kl_inside;
    out.d_logprob_policy[i] = ((d_surrogate - kl_coefficient * d_kl) * w).matrix();
  }

  const auto count = static_cast<Scalar>(n);
  out.value.kl_value = kl_sum / count;
  out.value.objective = surrogate_sum / count - kl_coefficient * out.value.kl_value;
  out.value.clip_fraction = static_cast<Scalar>(clipped) / static_cast<Scalar>(tokens);
  return out;
}

template <typename Scalar>
SurrogateGradient<Scalar> surrogate_with_gradient(const RolloutGroup<Scalar>& group, const GrpoConfig& cfg) {
  return surrogate_with_gradient(group, compute_advantages(group.rewards), static_cast<Scalar>(cfg.clip_epsilon),
                                 static_cast<Scalar>(cfg.kl_coefficient));
}

template <typename Scalar>
SurrogateValue<Scalar> surrogate(const RolloutGroup<Scalar>& group, const AdvantageVector<Scalar>& advantages,
                                 Scalar clip_epsilon, Scalar kl_coefficient) {
  return surrogate_with_gradient(group, advantages, clip_epsilon, kl_coefficient).value;
}

template <typename Scalar>
SurrogateValue<Scalar> surrogate(const RolloutGroup<Scalar>& group, const GrpoConfig& cfg) {
  return surrogate_with_gradient(group, cfg).value;
}

// ---------------------------------------------------------------------------
// Desk-scale policy: an independent logits row per (prompt, position).

inline constexpr std::size_t kMaxToyVocabulary = 32;
inline constexpr std::size_t kMaxToyLength = 8;

class ToySoftmaxPolicy {
 public:
  // `eos` ends a response when sampled; without it every response has
  // max_length tokens.
  ToySoftmaxPolicy(std::size_t prompts, std::size_t max_length, std::size_t vocabulary, std::optional<int> eos);

  std::size_t prompts() const { return logits_.size(); }
  std::size_t max_length() const { return max_length_; }
  std::size_t vocabulary() const { return vocabulary_; }
  std::optional<int> eos() const { return eos_; }

  Eigen::MatrixXd& logits(std::size_t prompt) { return logits_.at(prompt); }
  const Eigen::MatrixXd& logits(std::size_t prompt) const { return logits_.at(prompt); }

  Eigen::VectorXd probabilities(std::size_t prompt, std::size_t position) const;
  Eigen::VectorXd log_probabilities(std::size_t prompt, std::size_t position) const;

  std::vector<int> sample(std::size_t prompt, std::mt19937_64& rng) const;
  Vector<double> token_logprobs(std::size_t prompt, const std::vector<int>& response) const;

  // Sequence-level KL(this || reference) for one prompt, summing per-position
  // divergences weighted by the chance of reaching each position.
  double exact_kl(const ToySoftmaxPolicy& reference, std::size_t prompt) const;
  // Probability of sampling exactly `response`.
  double sequence_probability(std::size_t prompt, const std::vector<int>& response) const;

  bool operator==(const ToySoftmaxPolicy& other) const;

 private:
  std::size_t max_length_;
  std::size_t vocabulary_;
  std::optional<int> eos_;
  std::vector<Eigen::MatrixXd> logits_;  // one (max_length x vocabulary) table per prompt
};

// Uniform draw in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct ToyBatchItem {
  std::size_t prompt = 0;
  RolloutGroup<double> group;
};

struct StepSummary {
  SurrogateValue<double> value;  // averaged over groups
  std::size_t degenerate_groups = 0;
};

// One ascent step on the batch-mean objective with exact gradients. The
// groups' logprob_policy must come from `policy`.
StepSummary toy_policy_step(ToySoftmaxPolicy& policy, const std::vector<ToyBatchItem>& batch, const GrpoConfig& cfg);

}  // namespace rar::grpo
