#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "rar/grpo.hpp"
#include "rar/rewards.hpp"

namespace rar::grpo {

enum class TaskFormat { kShortForm, kLongForm };

struct ToyPrompt {
  std::string prompt_id;
  std::string subject;
  std::string answer;
  bool answerable = true;
};

// Short form: one answer token per response, drawn from the vocabulary plus
// an ABSTAIN symbol, scored by the reward engine against an oracle fact table.
// Unanswerable prompts have gold answers outside the vocabulary.
//
// Long form: up to max_length claim tokens ended by EOS; each claim is judged
// contradicted with probability claim_noise, independently per evaluation.
struct SyntheticKnowledgeTask {
  TaskFormat format = TaskFormat::kShortForm;
  std::vector<std::string> vocabulary;
  std::vector<ToyPrompt> prompts;
  std::string relation = "answer";
  std::string statement = "{subject} is {value}";
  std::size_t max_length = 1;
  double answer_bias = 2.0;
  double abstain_logit = -0.87;
  double eos_logit = -2.5;
  double claim_noise = 0.0;
  double learning_rate = 1e-2;
  double kl_coefficient = 3e-3;
  std::size_t group_size = 8;
  std::size_t batch_prompts = 16;
  std::size_t steps = 200;

  // Throws kInvalidArgument.
  static SyntheticKnowledgeTask parse(std::string_view json_text);
  static SyntheticKnowledgeTask load(const std::filesystem::path& path);
  void validate() const;

  // Token ids: vocabulary entries first, then ABSTAIN (short form) or EOS
  // (long form).
  std::size_t token_count() const { return vocabulary.size() + 1; }
  int special_token() const { return static_cast<int>(vocabulary.size()); }
  GrpoConfig grpo_config() const;
};

inline constexpr std::string_view kAbstainText = "I don't know.";

// Response text for a short-form token.
std::string render_answer(const SyntheticKnowledgeTask& task, const ToyPrompt& prompt, int token);

ToySoftmaxPolicy initial_policy(const SyntheticKnowledgeTask& task);

// Fact table and precache entries backing short-form rewards.
verification::FactTable task_fact_table(const SyntheticKnowledgeTask& task);
datastore::PromptSet task_promptset(const SyntheticKnowledgeTask& task);

struct StepRecord {
  std::size_t step = 0;
  double reward_mean = 0.0;
  double hallucination_rate = 0.0;  // share of rollouts with reward 0
  double abstention_rate = 0.0;  // ABSTAIN answers, or empty long-form responses
  double kl = 0.0;
  double clip_fraction = 0.0;
  double mean_length = 0.0;  // tokens before EOS
  std::optional<double> abstention_rate_unanswerable;
  std::optional<double> attempted_accuracy_answerable;
};

struct TrainingReport {
  std::vector<StepRecord> steps;

  std::string to_jsonl() const;
};

struct ToyTrainingOptions {
  GrpoConfig config;
  rewards::RewardKind kind;
  std::uint64_t seed = 0;
  std::size_t steps = 200;
};

// Task defaults for every option the caller does not override.
ToyTrainingOptions default_options(const SyntheticKnowledgeTask& task);

TrainingReport run_toy_training(const SyntheticKnowledgeTask& task, const ToyTrainingOptions& options,
                                ToySoftmaxPolicy* final_policy = nullptr);

using ToyReward = std::function<double(std::size_t prompt, const std::vector<int>& response)>;

// n rollouts per prompt from `policy`, with old and reference log-probs.
std::vector<ToyBatchItem> sample_batch(const ToySoftmaxPolicy& policy, const ToySoftmaxPolicy& reference,
                                       const std::vector<std::size_t>& prompts, std::size_t group_size,
                                       const ToyReward& reward, std::mt19937_64& rng);

}  // namespace rar::grpo
