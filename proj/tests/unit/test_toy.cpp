#include <cmath>
#include <string>

#include "rar/toy.hpp"
#include "doctest.h"
#include "json.hpp"
#include "rar/error.hpp"
#include "rar/fileio.hpp"
#include "support.hpp"

using namespace rar;
using namespace rar::grpo;

namespace {

SyntheticKnowledgeTask short_task() { return SyntheticKnowledgeTask::load(testing::fixture("toy_short_form.json")); }

nlohmann::json short_json() { return nlohmann::json::parse(read_file(testing::fixture("toy_short_form.json"))); }

}  // namespace

TEST_CASE("task fixtures load") {
  const auto task = short_task();
  CHECK(task.format == TaskFormat::kShortForm);
  CHECK(task.prompts.size() == 16);
  CHECK(task.token_count() == 8);
  CHECK(task.special_token() == 7);
  CHECK(task.grpo_config().learning_rate == task.learning_rate);
  const auto long_task = SyntheticKnowledgeTask::load(testing::fixture("toy_long_form.json"));
  CHECK(long_task.format == TaskFormat::kLongForm);
  CHECK(long_task.max_length == 8);
  CHECK(long_task.kl_coefficient == 3e-3);
}

TEST_CASE("malformed tasks are rejected") {
  auto expect_invalid = [](const nlohmann::json& j) {
    CHECK(testing::error_of([&] { SyntheticKnowledgeTask::parse(j.dump()); }) == ErrorCode::kInvalidArgument);
  };
  auto j = short_json();
  j["surprise"] = 1;
  expect_invalid(j);
  j = short_json();
  j["format"] = "medium_form";
  expect_invalid(j);
  j = short_json();
  j["prompts"][0]["answer"] = "atlantis";
  expect_invalid(j);
  j = short_json();
  j["prompts"][15]["answer"] = "paris";
  expect_invalid(j);
  j = short_json();
  j["prompts"][1]["prompt_id"] = "q00";
  expect_invalid(j);
  j = short_json();
  j["vocabulary"].push_back("rome");
  expect_invalid(j);
  j = short_json();
  j["statement"] = "{subject} only";
  expect_invalid(j);
  j = short_json();
  j["group_size"] = 1;
  expect_invalid(j);
  j = short_json();
  j["max_length"] = 2;
  expect_invalid(j);
  CHECK(testing::error_of([] { SyntheticKnowledgeTask::parse("[]"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("answers render as statements") {
  const auto task = short_task();
  CHECK(render_answer(task, task.prompts[0], 0) == "person00 was born in paris.");
  CHECK(render_answer(task, task.prompts[0], task.special_token()) == "I don't know.");
  CHECK(testing::error_of([&] { render_answer(task, task.prompts[0], 99); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("initial policy favors gold answers") {
  const auto task = short_task();
  const auto policy = initial_policy(task);
  const auto probs = policy.probabilities(0, 0);
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  CHECK(best == 0);
  // Unanswerable prompts have no gold token in the vocabulary.
  const auto flat = policy.probabilities(15, 0);
  CHECK(flat[0] == doctest::Approx(flat[1]));
}

TEST_CASE("fact table and evidence back the rewards") {
  const auto task = short_task();
  const auto table = task_fact_table(task);
  CHECK(table.is_supported({"person00", "birthplace", "paris"}));
  CHECK(table.is_contradicted({"person00", "birthplace", "rome"}));
  CHECK(table.is_contradicted({"person15", "birthplace", "paris"}));
  const auto set = task_promptset(task);
  CHECK(set.size() == 16);
  CHECK(set.find("q03")->documents.size() >= 3);
}

TEST_CASE("training is deterministic under a seed") {
  const auto task = short_task();
  auto options = default_options(task);
  options.steps = 15;
  options.seed = 42;
  const auto a = run_toy_training(task, options).to_jsonl();
  const auto b = run_toy_training(task, options).to_jsonl();
  CHECK(a == b);
  options.seed = 43;
  CHECK(run_toy_training(task, options).to_jsonl() != a);
}

TEST_CASE("report lines carry the step metrics") {
  const auto task = short_task();
  auto options = default_options(task);
  options.steps = 2;
  const auto report = run_toy_training(task, options);
  REQUIRE(report.steps.size() == 2);
  const std::string jsonl = report.to_jsonl();
  const auto first = nlohmann::json::parse(jsonl.substr(0, jsonl.find('\n')));
  for (const char* key : {"step", "reward_mean", "hallucination_rate", "abstention_rate", "kl", "clip_fraction",
                          "mean_length", "abstention_rate_unanswerable", "attempted_accuracy_answerable"}) {
    CHECK(first.contains(key));
  }
  CHECK(first["kl"] == 0.0);
  const auto& s = report.steps[0];
  CHECK(s.hallucination_rate == doctest::Approx(1.0 - s.reward_mean));
}

TEST_CASE("fully answerable tasks rarely abstain") {
  auto j = short_json();
  const std::vector<std::string> cities = j["vocabulary"];
  for (std::size_t i = 0; i < j["prompts"].size(); ++i) {
    j["prompts"][i]["answerable"] = true;
    j["prompts"][i]["answer"] = cities[i % cities.size()];
  }
  const auto task = SyntheticKnowledgeTask::parse(j.dump());
  auto options = default_options(task);
  ToySoftmaxPolicy final_policy = initial_policy(task);
  const auto report = run_toy_training(task, options, &final_policy);
  double late = 0.0;
  for (std::size_t i = report.steps.size() - 20; i < report.steps.size(); ++i) late += report.steps[i].abstention_rate;
  late /= 20.0;
  CHECK(late < 0.05);
  CHECK_FALSE(report.steps.back().abstention_rate_unanswerable.has_value());
  double overall = 0.0;
  for (const auto& s : report.steps) overall += s.abstention_rate;
  CHECK(overall / static_cast<double>(report.steps.size()) < 0.05);
  for (std::size_t p = 0; p < task.prompts.size(); ++p) {
    CHECK(final_policy.probabilities(p, 0)[task.special_token()] < 0.05);
  }
}

TEST_CASE("long-form responses shrink without a penalty") {
  const auto task = SyntheticKnowledgeTask::load(testing::fixture("toy_long_form.json"));
  auto options = default_options(task);
  options.steps = 5;
  const auto report = run_toy_training(task, options);
  CHECK(report.steps[0].mean_length > 1.0);
  CHECK(report.steps[0].mean_length <= 8.0);
  CHECK_FALSE(report.steps[0].attempted_accuracy_answerable.has_value());
}
