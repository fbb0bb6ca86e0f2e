#include <csignal>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "rar/evalmetrics.hpp"
#include "rar/fileio.hpp"
#include "rar/service.hpp"
#include "rar/toy.hpp"

// After Eigen: resolv.h defines _res, which Eigen uses as an identifier.
#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitPartial = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    rar::write_file_atomic(path, content);
  }
}

std::vector<json> read_jsonl(const std::string& path) {
  std::vector<json> records;
  std::istringstream in(rar::read_file(path));
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw UsageError(path + ":" + std::to_string(number) + ": not a JSON object");
    }
    records.push_back(std::move(j));
  }
  return records;
}

std::string fixed(double x, int digits = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << x;
  return out.str();
}

void print_table(const std::vector<std::pair<std::string, std::string>>& rows) {
  std::size_t width = 0;
  for (const auto& [k, v] : rows) width = std::max(width, k.size());
  for (const auto& [k, v] : rows) std::cout << std::left << std::setw(static_cast<int>(width) + 2) << k << v << "\n";
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string pages;
  std::string manifest;
  std::string out;
  bool overwrite = false;
  bool keep_raw_html = false;
};

int run_ingest(const IngestArgs& a) {
  const auto manifest = rar::datastore::parse_manifest(rar::read_file(a.manifest));
  rar::datastore::PromptSet set;
  if (std::filesystem::exists(a.out)) set = rar::datastore::load_promptset(a.out);
  if (!a.overwrite) {
    for (const auto& p : manifest) {
      if (set.contains(p.prompt_id)) {
        throw UsageError("conflict: prompt_id '" + p.prompt_id + "' already in " + a.out + " (use --overwrite)");
      }
    }
  }
  rar::datastore::BuildOptions options;
  options.keep_raw_html = a.keep_raw_html;
  const auto report = rar::datastore::ingest_directory(manifest, a.pages, options);
  for (const auto& entry : report.built) set.upsert(entry);
  rar::datastore::save_promptset(set, a.out);
  std::cout << "built " << report.built.size() << ", discarded " << report.discarded.size() << "\n";
  for (const auto& d : report.discarded) {
    std::cout << "discarded " << d.prompt_id << ": " << d.reason << " (" << d.surviving_documents
              << " documents)\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string config;
  std::string promptset;
  std::string responses;
  std::string kind;
  std::string oracle;
  std::string out;
  std::size_t workers = 0;
  bool strict = false;
};

int run_score(const ScoreArgs& a) {
  rar::rewards::Settings settings;
  if (!a.config.empty()) settings = rar::rewards::load_settings(a.config);
  rar::rewards::apply_environment(settings);
  if (!a.oracle.empty()) {
    settings.verifier.backend = "oracle";
    settings.verifier.oracle_facts = std::filesystem::path(a.oracle);
  }
  if (!a.promptset.empty()) settings.promptset_path = std::filesystem::path(a.promptset);
  if (!settings.promptset_path) throw UsageError("--promptset is required");
  if (!std::filesystem::exists(*settings.promptset_path)) {
    throw UsageError("promptset not found: " + settings.promptset_path->string());
  }
  if (a.workers > 0) settings.workers = a.workers;
  const auto kind = rar::rewards::RewardKind::parse(a.kind);

  std::vector<rar::rewards::ScoreRequest> requests;
  for (const auto& record : read_jsonl(a.responses)) {
    if (!record.contains("prompt_id") || !record["prompt_id"].is_string() || !record.contains("response") ||
        !record["response"].is_string()) {
      throw UsageError(a.responses + ": each record needs string 'prompt_id' and 'response'");
    }
    requests.push_back({record["prompt_id"].get<std::string>(), record["response"].get<std::string>()});
  }

  auto runtime = rar::service::build_runtime(settings);
  const auto outcomes = runtime.engine->score_batch(requests, kind);

  std::string body;
  double reward_sum = 0.0;
  std::size_t scored = 0, degenerate = 0, errors = 0, unresolved = 0;
  long long verifier_calls = 0;
  for (const auto& outcome : outcomes) {
    body += rar::rewards::to_json(outcome, false).dump(-1, ' ', false, json::error_handler_t::replace);
    body += '\n';
    if (outcome.result) {
      ++scored;
      reward_sum += outcome.result->value;
      degenerate += outcome.result->degenerate;
      verifier_calls += outcome.result->verifier_calls;
    } else {
      ++errors;
      unresolved += outcome.error == rar::ErrorCode::kUnknownPrompt;
    }
  }
  ordered_json summary{{"items", outcomes.size()},
                       {"scored", scored},
                       {"errors", errors},
                       {"mean_reward", scored == 0 ? 0.0 : reward_sum / static_cast<double>(scored)},
                       {"degenerate", degenerate},
                       {"verifier_calls", verifier_calls}};
  body += ordered_json{{"summary", summary}}.dump() + "\n";
  write_output(a.out, body);
  std::cerr << "scored " << scored << "/" << outcomes.size() << " kind=" << kind.name()
            << " mean_reward=" << fixed(summary["mean_reward"].get<double>()) << " degenerate=" << degenerate
            << " verifier_calls=" << verifier_calls << " errors=" << errors << "\n";
  if (a.strict && unresolved > 0) {
    std::cerr << unresolved << " prompt_id(s) did not resolve\n";
    return kExitPartial;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string config;
  std::string listen;
};

int run_serve(const ServeArgs& a) {
  auto settings = rar::rewards::load_settings(a.config);
  rar::rewards::apply_environment(settings);
  if (!a.listen.empty()) settings.listen = a.listen;
  const auto [host, port] = rar::service::parse_listen(settings.listen);
  auto runtime = rar::service::build_runtime(settings);
  rar::service::ServiceOptions options;
  options.max_batch = settings.max_batch;
  options.bearer_token = settings.bearer_token;
  options.promptset_path = settings.promptset_path;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  rar::service::ScoringService service(runtime.engine, runtime.backend, options);
  const int bound = service.start(host, port);
  std::cout << "listening on " << host << ":" << bound << std::endl;
  int received = 0;
  sigwait(&signals, &received);
  service.stop();
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string task;
  std::string out;
  std::optional<std::size_t> steps;
  std::optional<double> beta;
  std::optional<double> learning_rate;
  std::string kind = "binary_rar";
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  const auto task = rar::grpo::SyntheticKnowledgeTask::load(a.task);
  auto options = rar::grpo::default_options(task);
  options.kind = rar::rewards::RewardKind::parse(a.kind);
  options.seed = a.seed;
  if (a.steps) options.steps = *a.steps;
  if (a.beta) options.config.kl_coefficient = *a.beta;
  if (a.learning_rate) options.config.learning_rate = *a.learning_rate;
  if (options.steps < 1) throw UsageError("--steps must be >= 1");
  options.config.validate();
  const auto report = rar::grpo::run_toy_training(task, options);
  write_output(a.out, report.to_jsonl());
  if (!a.out.empty() && a.out != "-") {
    const auto& last = report.steps.back();
    std::cerr << "steps=" << report.steps.size() << " reward_mean=" << fixed(last.reward_mean)
              << " hallucination_rate=" << fixed(last.hallucination_rate) << " mean_length=" << fixed(last.mean_length)
              << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string results;
  bool short_form = false;
  bool long_form = false;
  std::vector<std::string> abstain_markers;
};

std::optional<rar::verification::ClaimLabel> claim_label(const json& verdict) {
  if (verdict.is_null()) return rar::verification::ClaimLabel::kInconclusive;
  if (!verdict.is_string()) return std::nullopt;
  const auto s = verdict.get<std::string>();
  if (s == "supported") return rar::verification::ClaimLabel::kSupported;
  if (s == "contradicted") return rar::verification::ClaimLabel::kContradicted;
  if (s == "inconclusive") return rar::verification::ClaimLabel::kInconclusive;
  return std::nullopt;
}

int run_report(const ReportArgs& a) {
  if (a.short_form && a.long_form) throw UsageError("--short-form and --long-form are exclusive");
  const auto records = read_jsonl(a.results);
  if (a.short_form) {
    const auto markers = a.abstain_markers.empty() ? rar::evalmetrics::kDefaultAbstainMarkers : a.abstain_markers;
    std::vector<rar::evalmetrics::ShortAnswer> answers;
    for (const auto& r : records) {
      if (r.contains("summary")) continue;
      const json* answer = r.contains("answer") ? &r["answer"] : r.contains("response") ? &r["response"] : nullptr;
      if (answer == nullptr || !answer->is_string() || !r.contains("gold")) {
        throw UsageError(a.results + ": short-form records need 'answer' (or 'response') and 'gold'");
      }
      std::vector<std::string> gold;
      if (r["gold"].is_string()) {
        gold.push_back(r["gold"].get<std::string>());
      } else if (r["gold"].is_array()) {
        for (const auto& g : r["gold"]) {
          if (!g.is_string()) throw UsageError(a.results + ": gold aliases must be strings");
          gold.push_back(g.get<std::string>());
        }
      }
      if (gold.empty()) throw UsageError(a.results + ": gold must be a string or a non-empty list");
      answers.push_back(rar::evalmetrics::categorize_short_answer(answer->get<std::string>(), gold, markers));
    }
    if (answers.empty()) throw UsageError(a.results + ": no answers");
    const auto rep = rar::evalmetrics::short_form_report(answers);
    print_table({{"answers", std::to_string(rep.n)},
                 {"correct", std::to_string(rep.correct)},
                 {"incorrect", std::to_string(rep.incorrect)},
                 {"abstain", std::to_string(rep.abstain)},
                 {"hallucination_rate", fixed(rep.hallucination_rate)},
                 {"attempted_accuracy", rep.attempted_accuracy ? fixed(*rep.attempted_accuracy) : "n/a"}});
    return kExitOk;
  }

  std::vector<rar::verification::ClaimLabel> labels;
  for (const auto& r : records) {
    if (r.contains("summary") || r.contains("error")) continue;
    if (!r.contains("claims")) throw UsageError(a.results + ": long-form records need 'claims'");
    const json& claims = r["claims"];
    if (claims.is_null()) continue;
    if (!claims.is_array()) throw UsageError(a.results + ": 'claims' must be a list");
    for (const auto& c : claims) {
      if (!c.is_object() || !c.contains("verdict")) throw UsageError(a.results + ": claims need a 'verdict'");
      auto label = claim_label(c["verdict"]);
      if (!label) throw UsageError(a.results + ": unknown claim verdict");
      labels.push_back(*label);
    }
  }
  const auto rep = rar::evalmetrics::long_form_report(labels);
  print_table({{"claims", std::to_string(rep.total_claims)},
               {"correct", std::to_string(rep.correct)},
               {"incorrect", std::to_string(rep.incorrect)},
               {"inconclusive", std::to_string(rep.inconclusive)},
               {"hallucination_rate", fixed(rep.hallucination_rate)},
               {"strict_rate", fixed(rep.strict_rate)},
               {"zero_claims", rep.zero_claims ? "yes" : "no"}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct StatsArgs {
  std::string report;
  std::size_t window = 10;
  std::string url;
  std::string token;
};

int run_stats(const StatsArgs& a) {
  if (a.report.empty() == a.url.empty()) throw UsageError("exactly one of --report and --url is required");
  if (!a.url.empty()) {
    httplib::Client client(a.url);
    client.set_connection_timeout(5);
    httplib::Headers headers;
    if (!a.token.empty()) headers.emplace("Authorization", "Bearer " + a.token);
    auto res = client.Get("/v1/stats", headers);
    if (!res) throw rar::Error(rar::ErrorCode::kIoError, "cannot reach " + a.url);
    if (res->status != 200) throw rar::Error(rar::ErrorCode::kIoError, "stats returned HTTP " + std::to_string(res->status));
    std::cout << json::parse(res->body).dump(2) << "\n";
    return kExitOk;
  }
  const auto records = read_jsonl(a.report);
  if (records.empty()) throw UsageError(a.report + ": empty training report");
  if (a.window < 1) throw UsageError("--window must be >= 1");
  const std::size_t w = std::min(a.window, records.size());
  const std::vector<std::string> fields{"reward_mean",   "hallucination_rate", "abstention_rate",
                                        "kl",            "clip_fraction",      "mean_length",
                                        "abstention_rate_unanswerable", "attempted_accuracy_answerable"};
  auto window_mean = [&](std::size_t begin, const std::string& field) -> std::optional<double> {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = begin; i < begin + w; ++i) {
      auto it = records[i].find(field);
      if (it == records[i].end()) continue;
      if (!it->is_number()) throw UsageError(a.report + ": '" + field + "' must be a number");
      sum += it->get<double>();
      ++count;
    }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  };
  std::cout << std::left << std::setw(32) << "metric" << std::setw(12) << "first" << "last\n";
  for (const auto& f : fields) {
    const auto first = window_mean(0, f);
    const auto last = window_mean(records.size() - w, f);
    if (!first && !last) continue;
    std::cout << std::left << std::setw(32) << f << std::setw(12) << (first ? fixed(*first) : "n/a")
              << (last ? fixed(*last) : "n/a") << "\n";
  }
  std::cout << "steps " << records.size() << ", window " << w << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented reward engine"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Build a promptset from fetched pages");
  ingest_cmd->add_option("--pages", ingest.pages, "Directory holding the page files")->required();
  ingest_cmd->add_option("--manifest", ingest.manifest, "Manifest JSON")->required();
  ingest_cmd->add_option("--out", ingest.out, "Promptset file")->required();
  ingest_cmd->add_flag("--overwrite", ingest.overwrite, "Replace prompts already in --out");
  ingest_cmd->add_flag("--keep-raw-html", ingest.keep_raw_html, "Store the raw pages too");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score a file of responses");
  score_cmd->add_option("--config", score.config, "Settings file");
  score_cmd->add_option("--promptset", score.promptset, "Promptset file");
  score_cmd->add_option("--responses", score.responses, "JSONL of {prompt_id, response}")->required();
  score_cmd->add_option("--kind", score.kind, "Reward kind")->required();
  score_cmd->add_option("--oracle", score.oracle, "Fact table for the oracle verifier");
  score_cmd->add_option("--out", score.out, "Results file (default stdout)");
  score_cmd->add_option("--workers", score.workers, "Scoring threads");
  score_cmd->add_flag("--strict", score.strict, "Exit 3 when a prompt_id does not resolve");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP scoring service");
  serve_cmd->add_option("--config", serve.config, "Settings file")->required();
  serve_cmd->add_option("--listen", serve.listen, "host:port");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train-toy", "Run GRPO on a synthetic knowledge task");
  train_cmd->add_option("--task", train.task, "Task file")->required();
  train_cmd->add_option("--steps", train.steps, "Training steps");
  train_cmd->add_option("--beta", train.beta, "KL coefficient");
  train_cmd->add_option("--lr", train.learning_rate, "Learning rate");
  train_cmd->add_option("--kind", train.kind, "Reward kind");
  train_cmd->add_option("--seed", train.seed, "Random seed");
  train_cmd->add_option("--out", train.out, "Training report (default stdout)");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Hallucination metrics from a results file");
  report_cmd->add_option("--results", report.results, "Results JSONL")->required();
  report_cmd->add_flag("--short-form", report.short_form, "Records carry answer and gold");
  report_cmd->add_flag("--long-form", report.long_form, "Records carry judged claims (default)");
  report_cmd->add_option("--abstain-marker", report.abstain_markers, "Replaces the default abstain phrases");

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Summarize a training report or a running service");
  stats_cmd->add_option("--report", stats.report, "Training report JSONL");
  stats_cmd->add_option("--window", stats.window, "Steps averaged at each end");
  stats_cmd->add_option("--url", stats.url, "Service base URL");
  stats_cmd->add_option("--token", stats.token, "Bearer token");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*ingest_cmd) return run_ingest(ingest);
    if (*score_cmd) return run_score(score);
    if (*serve_cmd) return run_serve(serve);
    if (*train_cmd) return run_train(train);
    if (*report_cmd) return run_report(report);
    if (*stats_cmd) return run_stats(stats);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const rar::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == rar::ErrorCode::kDiskFull || e.code() == rar::ErrorCode::kInternal ? 1 : kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitInput;
}
