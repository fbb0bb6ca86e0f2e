#include <cmath>

#include "rar/grpo.hpp"

namespace rar::grpo {

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& row) {
  const Eigen::VectorXd shifted = (row.array() - row.maxCoeff()).exp().matrix();
  return shifted / shifted.sum();
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& row) {
  const double m = row.maxCoeff();
  const double lse = m + std::log((row.array() - m).exp().sum());
  return (row.array() - lse).matrix();
}

}  // namespace

ToySoftmaxPolicy::ToySoftmaxPolicy(std::size_t prompts, std::size_t max_length, std::size_t vocabulary,
                                   std::optional<int> eos)
    : max_length_(max_length), vocabulary_(vocabulary), eos_(eos) {
  if (prompts == 0) throw Error(ErrorCode::kInvalidArgument, "a toy policy needs at least one prompt");
  if (max_length == 0 || max_length > kMaxToyLength) {
    throw Error(ErrorCode::kInvalidArgument, "toy max_length must lie in [1, " + std::to_string(kMaxToyLength) + "]");
  }
  if (vocabulary < 2 || vocabulary > kMaxToyVocabulary) {
    throw Error(ErrorCode::kInvalidArgument,
                "toy vocabulary must lie in [2, " + std::to_string(kMaxToyVocabulary) + "]");
  }
  if (eos && (*eos < 0 || static_cast<std::size_t>(*eos) >= vocabulary)) {
    throw Error(ErrorCode::kInvalidArgument, "eos token is outside the vocabulary");
  }
  logits_.assign(prompts, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(max_length),
                                                static_cast<Eigen::Index>(vocabulary)));
}

Eigen::VectorXd ToySoftmaxPolicy::probabilities(std::size_t prompt, std::size_t position) const {
  if (position >= max_length_) throw Error(ErrorCode::kInvalidArgument, "position beyond max_length");
  return softmax(logits(prompt).row(static_cast<Eigen::Index>(position)).transpose());
}

Eigen::VectorXd ToySoftmaxPolicy::log_probabilities(std::size_t prompt, std::size_t position) const {
  if (position >= max_length_) throw Error(ErrorCode::kInvalidArgument, "position beyond max_length");
  return log_softmax(logits(prompt).row(static_cast<Eigen::Index>(position)).transpose());
}

std::vector<int> ToySoftmaxPolicy::sample(std::size_t prompt, std::mt19937_64& rng) const {
  std::vector<int> out;
  for (std::size_t t = 0; t < max_length_; ++t) {
    const Eigen::VectorXd p = probabilities(prompt, t);
    const double u = uniform01(rng);
    double cumulative = 0.0;
    int token = static_cast<int>(vocabulary_) - 1;
    for (Eigen::Index v = 0; v < p.size(); ++v) {
      cumulative += p[v];
      if (u < cumulative) {
        token = static_cast<int>(v);
        break;
      }
    }
    out.push_back(token);
    if (eos_ && token == *eos_) break;
  }
  return out;
}

Vector<double> ToySoftmaxPolicy::token_logprobs(std::size_t prompt, const std::vector<int>& response) const {
  if (response.empty() || response.size() > max_length_) {
    throw Error(ErrorCode::kLengthMismatch, "response length must lie in [1, max_length]");
  }
  Vector<double> out(static_cast<Eigen::Index>(response.size()));
  for (std::size_t t = 0; t < response.size(); ++t) {
    const int token = response[t];
    if (token < 0 || static_cast<std::size_t>(token) >= vocabulary_) {
      throw Error(ErrorCode::kInvalidArgument, "token outside the vocabulary");
    }
    if (eos_ && token == *eos_ && t + 1 != response.size()) {
      throw Error(ErrorCode::kInvalidArgument, "tokens follow eos");
    }
    out[static_cast<Eigen::Index>(t)] = log_probabilities(prompt, t)[token];
  }
  return out;
}

double ToySoftmaxPolicy::exact_kl(const ToySoftmaxPolicy& reference, std::size_t prompt) const {
  if (reference.max_length_ != max_length_ || reference.vocabulary_ != vocabulary_ || reference.eos_ != eos_) {
    throw Error(ErrorCode::kInvalidArgument, "policies have different shapes");
  }
  double reach = 1.0;
  double total = 0.0;
  for (std::size_t t = 0; t < max_length_; ++t) {
    const Eigen::VectorXd p = probabilities(prompt, t);
    const Eigen::VectorXd diff = log_probabilities(prompt, t) - reference.log_probabilities(prompt, t);
    total += reach * p.dot(diff);
    if (eos_) reach *= 1.0 - p[*eos_];
  }
  return total;
}

double ToySoftmaxPolicy::sequence_probability(std::size_t prompt, const std::vector<int>& response) const {
  if (response.empty() || response.size() > max_length_) return 0.0;
  double prob = 1.0;
  for (std::size_t t = 0; t < response.size(); ++t) {
    const int token = response[t];
    if (token < 0 || static_cast<std::size_t>(token) >= vocabulary_) return 0.0;
    const bool last = t + 1 == response.size();
    if (eos_ && token == *eos_ && !last) return 0.0;
    if (eos_ && last && token != *eos_ && response.size() != max_length_) return 0.0;
    prob *= probabilities(prompt, t)[token];
  }
  return prob;
}

bool ToySoftmaxPolicy::operator==(const ToySoftmaxPolicy& other) const {
  if (max_length_ != other.max_length_ || vocabulary_ != other.vocabulary_ || eos_ != other.eos_ ||
      logits_.size() != other.logits_.size()) {
    return false;
  }
  for (std::size_t p = 0; p < logits_.size(); ++p) {
    if (logits_[p] != other.logits_[p]) return false;
  }
  return true;
}

StepSummary toy_policy_step(ToySoftmaxPolicy& policy, const std::vector<ToyBatchItem>& batch, const GrpoConfig& cfg) {
  cfg.validate();
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  const auto groups = static_cast<double>(batch.size());
  std::vector<Eigen::MatrixXd> grads(policy.prompts());
  StepSummary summary;

  for (const auto& item : batch) {
    if (item.prompt >= policy.prompts()) throw Error(ErrorCode::kInvalidArgument, "batch prompt out of range");
    const auto result = surrogate_with_gradient(item.group, cfg);
    summary.value.objective += result.value.objective / groups;
    summary.value.kl_value += result.value.kl_value / groups;
    summary.value.clip_fraction += result.value.clip_fraction / groups;
    if (result.advantages.degenerate) ++summary.degenerate_groups;

    Eigen::MatrixXd& grad = grads[item.prompt];
    if (grad.size() == 0) grad = Eigen::MatrixXd::Zero(policy.logits(item.prompt).rows(), policy.logits(item.prompt).cols());
    for (std::size_t i = 0; i < item.group.size(); ++i) {
      const auto& response = item.group.responses[i];
      const auto& g = result.d_logprob_policy[i];
      for (std::size_t t = 0; t < response.size(); ++t) {
        // d log p(y_t) / d logits_t = onehot(y_t) - p_t
        Eigen::VectorXd d = -policy.probabilities(item.prompt, t);
        d[response[t]] += 1.0;
        grad.row(static_cast<Eigen::Index>(t)) += g[static_cast<Eigen::Index>(t)] * d.transpose();
      }
    }
  }

  for (std::size_t p = 0; p < grads.size(); ++p) {
    if (grads[p].size() != 0) policy.logits(p) += cfg.learning_rate / groups * grads[p];
  }
  return summary;
}

}  // namespace rar::grpo
