#include "json.hpp"
#include "rar/toy.hpp"

namespace rar::grpo {

namespace {

using rewards::RewardKind;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic uniform in [0, 1) keyed by the coordinates of one claim.
double claim_draw(std::uint64_t seed, std::size_t step, std::size_t prompt, std::size_t rollout, std::size_t claim) {
  std::uint64_t h = splitmix64(seed);
  for (const std::uint64_t part : {std::uint64_t(step), std::uint64_t(prompt), std::uint64_t(rollout),
                                   std::uint64_t(claim)}) {
    h = splitmix64(h ^ part);
  }
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::vector<std::size_t> choose_prompts(std::size_t total, std::size_t batch, std::mt19937_64& rng) {
  std::vector<std::size_t> all(total);
  for (std::size_t i = 0; i < total; ++i) all[i] = i;
  if (total <= batch) return all;
  for (std::size_t i = 0; i < batch; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(total - i));
    std::swap(all[i], all[std::min(j, total - 1)]);
  }
  all.resize(batch);
  return all;
}

std::vector<std::vector<std::vector<int>>> sample_responses(const ToySoftmaxPolicy& policy,
                                                            const std::vector<std::size_t>& prompts,
                                                            std::size_t group_size, std::mt19937_64& rng) {
  std::vector<std::vector<std::vector<int>>> out(prompts.size());
  for (std::size_t g = 0; g < prompts.size(); ++g) {
    for (std::size_t i = 0; i < group_size; ++i) out[g].push_back(policy.sample(prompts[g], rng));
  }
  return out;
}

ToyBatchItem make_item(const ToySoftmaxPolicy& policy, const ToySoftmaxPolicy& reference, std::size_t prompt,
                       std::vector<std::vector<int>> responses, const std::vector<double>& rewards) {
  ToyBatchItem item;
  item.prompt = prompt;
  item.group.prompt_id = std::to_string(prompt);
  item.group.rewards = Eigen::Map<const Eigen::VectorXd>(rewards.data(), static_cast<Eigen::Index>(rewards.size()));
  for (const auto& r : responses) {
    Vector<double> lp = policy.token_logprobs(prompt, r);
    item.group.logprob_old.push_back(lp);
    item.group.logprob_policy.push_back(std::move(lp));
    item.group.logprob_ref.push_back(reference.token_logprobs(prompt, r));
  }
  item.group.responses = std::move(responses);
  return item;
}

std::size_t claim_count(const std::vector<int>& response, int eos) {
  return static_cast<std::size_t>(std::count_if(response.begin(), response.end(), [&](int t) { return t != eos; }));
}

double mean(double sum, std::size_t count) { return count == 0 ? 0.0 : sum / static_cast<double>(count); }

}  // namespace

std::vector<ToyBatchItem> sample_batch(const ToySoftmaxPolicy& policy, const ToySoftmaxPolicy& reference,
                                       const std::vector<std::size_t>& prompts, std::size_t group_size,
                                       const ToyReward& reward, std::mt19937_64& rng) {
  auto responses = sample_responses(policy, prompts, group_size, rng);
  std::vector<ToyBatchItem> batch;
  for (std::size_t g = 0; g < prompts.size(); ++g) {
    std::vector<double> rewards;
    for (const auto& r : responses[g]) rewards.push_back(reward(prompts[g], r));
    batch.push_back(make_item(policy, reference, prompts[g], std::move(responses[g]), rewards));
  }
  return batch;
}

TrainingReport run_toy_training(const SyntheticKnowledgeTask& task, const ToyTrainingOptions& options,
                                ToySoftmaxPolicy* final_policy) {
  task.validate();
  options.config.validate();
  const bool short_form = task.format == TaskFormat::kShortForm;
  const int special = task.special_token();
  const std::size_t n = options.config.group_size;

  ToySoftmaxPolicy policy = initial_policy(task);
  const ToySoftmaxPolicy reference = policy;
  std::mt19937_64 rng(options.seed);

  std::unique_ptr<rewards::RewardEngine> engine;
  std::vector<int> gold(task.prompts.size(), -1);
  if (short_form) {
    auto backend = std::make_shared<verification::OracleBackend>(task_fact_table(task));
    auto scorer = std::make_shared<rewards::Scorer>(backend, std::make_shared<retrieval::WhitespaceTokenCounter>(),
                                                    rewards::ScoringConfig{});
    rewards::EngineConfig cfg;
    cfg.workers = 1;
    engine = std::make_unique<rewards::RewardEngine>(
        std::make_shared<const datastore::PromptSet>(task_promptset(task)), std::move(scorer), cfg);
    for (std::size_t p = 0; p < task.prompts.size(); ++p) {
      const auto it = std::find(task.vocabulary.begin(), task.vocabulary.end(), task.prompts[p].answer);
      if (it != task.vocabulary.end()) gold[p] = static_cast<int>(it - task.vocabulary.begin());
    }
  }

  TrainingReport report;
  for (std::size_t step = 0; step < options.steps; ++step) {
    const auto prompts = choose_prompts(task.prompts.size(), options.config.batch_prompts, rng);
    auto responses = sample_responses(policy, prompts, n, rng);
    std::vector<std::vector<double>> rewards(prompts.size(), std::vector<double>(n, 0.0));

    StepRecord rec;
    rec.step = step;
    std::size_t rollouts = 0, hallucinated = 0, abstained = 0, tokens = 0;
    std::size_t unanswerable = 0, unanswerable_abstained = 0, attempted = 0, attempted_correct = 0;
    double reward_sum = 0.0;

    if (short_form) {
      std::vector<rewards::ScoreRequest> requests;
      for (std::size_t g = 0; g < prompts.size(); ++g) {
        const auto& prompt = task.prompts[prompts[g]];
        for (const auto& r : responses[g]) requests.push_back({prompt.prompt_id, render_answer(task, prompt, r[0])});
      }
      const auto outcomes = engine->score_batch(requests, options.kind);
      for (std::size_t g = 0; g < prompts.size(); ++g) {
        const bool answerable = task.prompts[prompts[g]].answerable;
        for (std::size_t i = 0; i < n; ++i) {
          const auto& outcome = outcomes[g * n + i];
          if (!outcome.result) throw Error(outcome.error.value_or(ErrorCode::kInternal), outcome.error_message);
          rewards[g][i] = outcome.result->value;
          const int token = responses[g][i][0];
          const bool abstain = token == special;
          const bool correct = token == gold[prompts[g]];
          abstained += abstain;
          tokens += abstain ? 0 : 1;
          if (answerable && !abstain) {
            ++attempted;
            attempted_correct += correct;
          }
          if (!answerable) {
            ++unanswerable;
            unanswerable_abstained += abstain;
          }
        }
      }
    } else {
      for (std::size_t g = 0; g < prompts.size(); ++g) {
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t claims = claim_count(responses[g][i], special);
          rewards::ClaimCounts counts{claims, 0, 0};
          for (std::size_t c = 0; c < claims; ++c) {
            if (claim_draw(options.seed, step, prompts[g], i, c) < task.claim_noise) ++counts.contradicted;
          }
          counts.supported = claims - counts.contradicted;
          rewards[g][i] = rewards::claim_reward(options.kind, counts).value;
          abstained += claims == 0;
          tokens += claims;
        }
      }
    }

    std::vector<ToyBatchItem> batch;
    for (std::size_t g = 0; g < prompts.size(); ++g) {
      for (double r : rewards[g]) {
        reward_sum += r;
        hallucinated += r == 0.0;
      }
      rollouts += n;
      batch.push_back(make_item(policy, reference, prompts[g], std::move(responses[g]), rewards[g]));
    }
    const StepSummary summary = toy_policy_step(policy, batch, options.config);

    rec.reward_mean = mean(reward_sum, rollouts);
    rec.hallucination_rate = mean(static_cast<double>(hallucinated), rollouts);
    rec.abstention_rate = mean(static_cast<double>(abstained), rollouts);
    rec.kl = summary.value.kl_value;
    rec.clip_fraction = summary.value.clip_fraction;
    rec.mean_length = mean(static_cast<double>(tokens), rollouts);
    if (short_form && unanswerable > 0) {
      rec.abstention_rate_unanswerable = mean(static_cast<double>(unanswerable_abstained), unanswerable);
    }
    if (short_form && attempted > 0) {
      rec.attempted_accuracy_answerable = mean(static_cast<double>(attempted_correct), attempted);
    }
    report.steps.push_back(rec);
  }
  if (final_policy != nullptr) *final_policy = std::move(policy);
  return report;
}

std::string TrainingReport::to_jsonl() const {
  std::string out;
  for (const auto& s : steps) {
    nlohmann::ordered_json j{{"step", s.step},
                             {"reward_mean", s.reward_mean},
                             {"hallucination_rate", s.hallucination_rate},
                             {"abstention_rate", s.abstention_rate},
                             {"kl", s.kl},
                             {"clip_fraction", s.clip_fraction},
                             {"mean_length", s.mean_length}};
    if (s.abstention_rate_unanswerable) j["abstention_rate_unanswerable"] = *s.abstention_rate_unanswerable;
    if (s.attempted_accuracy_answerable) j["attempted_accuracy_answerable"] = *s.attempted_accuracy_answerable;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace rar::grpo
