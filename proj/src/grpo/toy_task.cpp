#include <set>

#include "json.hpp"
#include "rar/fileio.hpp"
#include "rar/toy.hpp"

namespace rar::grpo {

namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, "toy task: " + message);
}

template <typename T>
void read(const json& root, const char* key, T& out) {
  auto it = root.find(key);
  if (it == root.end() || it->is_null()) return;
  if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) invalid(std::string(key) + " must be a string");
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!it->is_number_unsigned()) invalid(std::string(key) + " must be a non-negative integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!it->is_number()) invalid(std::string(key) + " must be a number");
  }
  out = it->get<T>();
}

std::string fill_statement(std::string_view pattern, std::string_view subject, std::string_view value) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size();) {
    if (pattern.substr(i, 9) == "{subject}") {
      out += subject;
      i += 9;
    } else if (pattern.substr(i, 7) == "{value}") {
      out += value;
      i += 7;
    } else {
      out += pattern[i++];
    }
  }
  return out;
}

std::string sentence(std::string text) {
  if (!text.empty() && text.back() != '.' && text.back() != '!' && text.back() != '?') text += '.';
  return text;
}

}  // namespace

SyntheticKnowledgeTask SyntheticKnowledgeTask::parse(std::string_view json_text) {
  const json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded()) invalid("not valid JSON");
  if (!root.is_object()) invalid("expected an object");
  static const std::set<std::string> kKeys{"format", "vocabulary", "prompts", "relation", "statement",
                                           "max_length", "answer_bias", "abstain_logit", "eos_logit",
                                           "claim_noise", "learning_rate", "kl_coefficient", "group_size",
                                           "batch_prompts", "steps"};
  for (const auto& [key, value] : root.items()) {
    if (kKeys.count(key) == 0) invalid("unknown key '" + key + "'");
  }

  SyntheticKnowledgeTask task;
  std::string format = "short_form";
  read(root, "format", format);
  if (format == "short_form") {
    task.format = TaskFormat::kShortForm;
  } else if (format == "long_form") {
    task.format = TaskFormat::kLongForm;
    task.max_length = kMaxToyLength;
  } else {
    invalid("format must be 'short_form' or 'long_form'");
  }

  auto vocab = root.find("vocabulary");
  if (vocab == root.end() || !vocab->is_array()) invalid("vocabulary must be an array of strings");
  for (const auto& token : *vocab) {
    if (!token.is_string()) invalid("vocabulary must be an array of strings");
    task.vocabulary.push_back(token.get<std::string>());
  }

  auto prompts = root.find("prompts");
  if (prompts == root.end() || !prompts->is_array()) invalid("prompts must be an array");
  for (const auto& p : *prompts) {
    if (!p.is_object()) invalid("each prompt must be an object");
    ToyPrompt prompt;
    read(p, "prompt_id", prompt.prompt_id);
    read(p, "subject", prompt.subject);
    read(p, "answer", prompt.answer);
    if (auto it = p.find("answerable"); it != p.end()) {
      if (!it->is_boolean()) invalid("answerable must be a boolean");
      prompt.answerable = it->get<bool>();
    }
    task.prompts.push_back(std::move(prompt));
  }

  read(root, "relation", task.relation);
  read(root, "statement", task.statement);
  read(root, "max_length", task.max_length);
  read(root, "answer_bias", task.answer_bias);
  read(root, "abstain_logit", task.abstain_logit);
  read(root, "eos_logit", task.eos_logit);
  read(root, "claim_noise", task.claim_noise);
  read(root, "learning_rate", task.learning_rate);
  read(root, "kl_coefficient", task.kl_coefficient);
  read(root, "group_size", task.group_size);
  read(root, "batch_prompts", task.batch_prompts);
  read(root, "steps", task.steps);
  task.validate();
  return task;
}

SyntheticKnowledgeTask SyntheticKnowledgeTask::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

void SyntheticKnowledgeTask::validate() const {
  if (vocabulary.empty()) invalid("vocabulary is empty");
  if (token_count() > kMaxToyVocabulary) {
    invalid("at most " + std::to_string(kMaxToyVocabulary - 1) + " vocabulary entries are supported");
  }
  std::set<std::string> seen;
  for (const auto& token : vocabulary) {
    if (token.empty()) invalid("vocabulary entries must be non-empty");
    if (!seen.insert(token).second) invalid("duplicate vocabulary entry '" + token + "'");
  }
  if (prompts.empty()) invalid("no prompts");
  std::set<std::string> ids;
  for (const auto& p : prompts) {
    if (p.prompt_id.empty() || p.subject.empty()) invalid("prompts need a prompt_id and a subject");
    if (!ids.insert(p.prompt_id).second) invalid("duplicate prompt_id '" + p.prompt_id + "'");
    if (format == TaskFormat::kShortForm) {
      if (p.answer.empty()) invalid("prompt '" + p.prompt_id + "' has no answer");
      const bool in_vocabulary = seen.count(p.answer) != 0;
      if (p.answerable && !in_vocabulary) invalid("answer of '" + p.prompt_id + "' is not in the vocabulary");
      if (!p.answerable && in_vocabulary) {
        invalid("unanswerable prompt '" + p.prompt_id + "' has its answer in the vocabulary");
      }
    }
  }
  if (statement.find("{subject}") == std::string::npos || statement.find("{value}") == std::string::npos) {
    invalid("statement must contain {subject} and {value}");
  }
  if (format == TaskFormat::kShortForm && max_length != 1) invalid("short_form tasks have max_length 1");
  if (max_length < 1 || max_length > kMaxToyLength) {
    invalid("max_length must lie in [1, " + std::to_string(kMaxToyLength) + "]");
  }
  if (!(claim_noise >= 0.0 && claim_noise <= 1.0)) invalid("claim_noise must lie in [0, 1]");
  if (!std::isfinite(answer_bias) || !std::isfinite(abstain_logit) || !std::isfinite(eos_logit)) {
    invalid("initial logits must be finite");
  }
  grpo_config().validate();
  if (steps < 1) invalid("steps must be >= 1");
}

GrpoConfig SyntheticKnowledgeTask::grpo_config() const {
  GrpoConfig cfg;
  cfg.group_size = group_size;
  cfg.kl_coefficient = kl_coefficient;
  cfg.learning_rate = learning_rate;
  cfg.batch_prompts = batch_prompts;
  return cfg;
}

std::string render_answer(const SyntheticKnowledgeTask& task, const ToyPrompt& prompt, int token) {
  if (token == task.special_token()) return std::string(kAbstainText);
  if (token < 0 || static_cast<std::size_t>(token) >= task.vocabulary.size()) {
    throw Error(ErrorCode::kInvalidArgument, "token outside the task vocabulary");
  }
  return sentence(fill_statement(task.statement, prompt.subject, task.vocabulary[static_cast<std::size_t>(token)]));
}

ToySoftmaxPolicy initial_policy(const SyntheticKnowledgeTask& task) {
  const int special = task.special_token();
  ToySoftmaxPolicy policy(task.prompts.size(), task.max_length, task.token_count(),
                          task.format == TaskFormat::kLongForm ? std::optional<int>(special) : std::nullopt);
  for (std::size_t p = 0; p < task.prompts.size(); ++p) {
    Eigen::MatrixXd& logits = policy.logits(p);
    if (task.format == TaskFormat::kShortForm) {
      logits(0, special) = task.abstain_logit;
      const auto& prompt = task.prompts[p];
      if (prompt.answerable) {
        const auto it = std::find(task.vocabulary.begin(), task.vocabulary.end(), prompt.answer);
        logits(0, it - task.vocabulary.begin()) = task.answer_bias;
      }
    } else {
      logits.col(special).setConstant(task.eos_logit);
    }
  }
  return policy;
}

verification::FactTable task_fact_table(const SyntheticKnowledgeTask& task) {
  std::vector<verification::Fact> facts;
  for (const auto& p : task.prompts) {
    if (task.format == TaskFormat::kShortForm) facts.push_back({p.subject, task.relation, p.answer, {task.statement}});
  }
  return verification::FactTable(std::move(facts));
}

datastore::PromptSet task_promptset(const SyntheticKnowledgeTask& task) {
  std::vector<datastore::PrecacheEntry> entries;
  for (const auto& p : task.prompts) {
    const std::string base = "toy://" + p.prompt_id + "/";
    const std::vector<datastore::RawPage> pages{
        {base + "0", sentence(fill_statement(task.statement, p.subject, p.answer)), 0},
        {base + "1", p.subject + " is covered in the reference notes.", 0},
        {base + "2", "Notes on " + p.subject + " and related topics.", 0},
    };
    auto outcome = datastore::build_precache(p.prompt_id, "What is the " + task.relation + " of " + p.subject + "?",
                                             std::nullopt, pages);
    auto* entry = std::get_if<datastore::PrecacheEntry>(&outcome);
    if (entry == nullptr) throw Error(ErrorCode::kInternal, "toy evidence for '" + p.prompt_id + "' was discarded");
    entries.push_back(std::move(*entry));
  }
  return datastore::PromptSet(std::move(entries));
}

ToyTrainingOptions default_options(const SyntheticKnowledgeTask& task) {
  ToyTrainingOptions options;
  options.config = task.grpo_config();
  options.kind = {rewards::RewardType::kBinaryRar};
  options.steps = task.steps;
  return options;
}

}  // namespace rar::grpo
