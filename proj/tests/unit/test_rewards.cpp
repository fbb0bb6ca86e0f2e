#include <cstdlib>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "rar/error.hpp"
#include "rar/fileio.hpp"
#include "rar/rewards.hpp"
#include "support.hpp"

using namespace rar;
using namespace rar::rewards;
using verification::ClaimLabel;

namespace {

const std::vector<std::string> kCurieDocs{
    "Marie Curie was born in Warsaw in 1867.", "Marie Curie married Pierre Curie in 1895.",
    "Marie Curie died in Passy in 1934."};

std::shared_ptr<verification::OracleBackend> oracle() {
  return std::make_shared<verification::OracleBackend>(verification::FactTable::load(testing::fixture("facts.json")));
}

std::shared_ptr<Scorer> make_scorer(std::shared_ptr<verification::VerifierBackend> backend) {
  return std::make_shared<Scorer>(std::move(backend), std::make_shared<retrieval::WhitespaceTokenCounter>());
}

std::shared_ptr<const datastore::PromptSet> curie_set() {
  return std::make_shared<const datastore::PromptSet>(
      std::vector<datastore::PrecacheEntry>{testing::make_entry("curie", kCurieDocs, "Biography of Marie Curie.")});
}

}  // namespace

TEST_CASE("reward kind names roundtrip") {
  for (const char* name : {"binary_rar", "veriscore", "binary_veriscore", "binary_veriscore:0.75", "conflict_only",
                           "rating_rar"}) {
    CHECK(RewardKind::parse(name).name() == name);
  }
  CHECK(RewardKind::parse("binary_veriscore:1").threshold == 1.0);
  for (const char* bad : {"", "binary", "binary_veriscore:0", "binary_veriscore:1.5", "binary_veriscore:x",
                          "binary_veriscorex", "BINARY_RAR"}) {
    CAPTURE(bad);
    CHECK(testing::error_of([&] { RewardKind::parse(bad); }) == ErrorCode::kInvalidArgument);
  }
  CHECK(RewardKind::parse("veriscore").uses_claims());
  CHECK_FALSE(RewardKind::parse("rating_rar").uses_claims());
}

TEST_CASE("claim rewards by kind") {
  const ClaimCounts c{4, 2, 1};
  CHECK(claim_reward({RewardType::kVeriScore}, c).value == 0.5);
  CHECK(claim_reward({RewardType::kBinaryVeriScore, 0.5}, c).value == 1.0);
  CHECK(claim_reward({RewardType::kBinaryVeriScore, 0.6}, c).value == 0.0);
  CHECK(claim_reward({RewardType::kConflictOnly}, c).value == 0.75);
  CHECK(claim_reward({RewardType::kBinaryRar}, c).value == 0.0);
  CHECK(claim_reward({RewardType::kBinaryRar}, {4, 2, 0}).value == 1.0);
  CHECK(claim_reward({RewardType::kRatingRar}, c).value == 0.4);

  const ClaimCounts none{};
  CHECK(claim_reward({RewardType::kVeriScore}, none).value == 0.0);
  CHECK(claim_reward({RewardType::kVeriScore}, none).degenerate);
  CHECK(claim_reward({RewardType::kConflictOnly}, none).value == 1.0);
  CHECK(claim_reward({RewardType::kConflictOnly}, none).degenerate);
  CHECK_FALSE(claim_reward({RewardType::kBinaryRar}, none).degenerate);
  CHECK(testing::error_of([] { claim_reward({RewardType::kVeriScore}, {1, 1, 1}); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("claim rewards stay in the unit interval") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const std::size_t total = rng() % 12;
    const std::size_t supported = total ? rng() % (total + 1) : 0;
    const std::size_t contradicted = total - supported ? rng() % (total - supported + 1) : 0;
    for (auto type : {RewardType::kVeriScore, RewardType::kBinaryVeriScore, RewardType::kConflictOnly,
                      RewardType::kBinaryRar, RewardType::kRatingRar}) {
      const double v = claim_reward({type}, {total, supported, contradicted}).value;
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    // Supported claims never lower VeriScore; contradictions never raise conflict_only.
    if (total > 0 && supported < total) {
      CHECK(claim_reward({RewardType::kVeriScore}, {total, supported + 1, 0}).value >=
            claim_reward({RewardType::kVeriScore}, {total, supported, 0}).value);
    }
  }
}

TEST_CASE("scorer kinds against the oracle") {
  auto scorer = make_scorer(oracle());
  const auto entry = testing::make_entry("curie", kCurieDocs);
  const std::string good = "Marie Curie was born in Warsaw and died in Passy.";
  const std::string bad = "Marie Curie was born in Paris and died in Passy.";

  auto r = scorer->score(RewardKind::parse("binary_rar"), good, entry);
  CHECK(r.value == 1.0);
  CHECK(r.verifier_calls == 1);
  CHECK(r.verdicts.size() == 1);
  CHECK_FALSE(r.claims.has_value());
  CHECK_FALSE(r.evidence_used.empty());
  CHECK(scorer->score(RewardKind::parse("binary_rar"), bad, entry).value == 0.0);

  r = scorer->score(RewardKind::parse("veriscore"), bad, entry);
  CHECK(r.value == 0.5);
  CHECK(r.verifier_calls == 3);
  REQUIRE(r.claims.has_value());
  CHECK((*r.claims)[0].verdict == ClaimLabel::kContradicted);
  CHECK((*r.claims)[1].verdict == ClaimLabel::kSupported);

  CHECK(scorer->score(RewardKind::parse("conflict_only"), bad, entry).value == 0.5);
  CHECK(scorer->score(RewardKind::parse("binary_veriscore"), bad, entry).value == 1.0);
  CHECK(scorer->score(RewardKind::parse("binary_veriscore:0.6"), bad, entry).value == 0.0);
  CHECK(scorer->score(RewardKind::parse("rating_rar"), bad, entry).value == 0.4);
  CHECK(scorer->score(RewardKind::parse("rating_rar"), good, entry).value == 1.0);
}

TEST_CASE("responses without claims are degenerate for claim kinds") {
  auto scorer = make_scorer(oracle());
  const auto entry = testing::make_entry("curie", kCurieDocs);
  auto r = scorer->score(RewardKind::parse("veriscore"), "", entry);
  CHECK(r.degenerate);
  CHECK(r.value == 0.0);
  CHECK(r.verifier_calls == 1);
  CHECK(scorer->score(RewardKind::parse("conflict_only"), "", entry).value == 1.0);
  r = scorer->score(RewardKind::parse("binary_rar"), "zzz qqq", entry);
  CHECK(r.value == 1.0);
  CHECK_FALSE(r.degenerate);
}

TEST_CASE("undecidable verdicts fall back to fixed values") {
  const auto entry = testing::make_entry("curie", kCurieDocs);
  auto binary = make_scorer(std::make_shared<testing::ScriptedBackend>(std::vector<std::string>(3, "??")));
  auto r = binary->score(RewardKind::parse("binary_rar"), "x", entry);
  CHECK(r.value == 1.0);
  CHECK(r.degenerate);
  CHECK(r.attempts == 3);

  auto rating = make_scorer(std::make_shared<testing::ScriptedBackend>(std::vector<std::string>(3, "??")));
  r = rating->score(RewardKind::parse("rating_rar"), "x", entry);
  CHECK(r.value == 0.5);
  CHECK(r.degenerate);

  auto claims = make_scorer(std::make_shared<testing::ScriptedBackend>(
      std::vector<std::string>{R"(["Marie Curie was born in Warsaw"])", "??", "??", "??"}));
  r = claims->score(RewardKind::parse("veriscore"), "x", entry);
  CHECK(r.degenerate);
  CHECK(r.value == 0.0);
  CHECK((*r.claims)[0].verdict == ClaimLabel::kInconclusive);

  auto failing = make_scorer(std::make_shared<testing::ScriptedBackend>(std::vector<std::string>(3, "??")));
  CHECK(testing::error_of([&] { failing->score(RewardKind::parse("veriscore"), "x", entry); }) ==
        ErrorCode::kClaimExtractionFailed);
}

TEST_CASE("language-model scorer wires evidence into the prompt") {
  auto backend = std::make_shared<testing::ScriptedBackend>(
      std::vector<std::string>{R"({"REASONING": "Warsaw is wrong", "SCORE": 0})"});
  auto scorer = make_scorer(backend);
  const auto entry = testing::make_entry("curie", kCurieDocs, "Biography of Marie Curie.");
  const auto r = scorer->score(RewardKind::parse("binary_rar"), "Marie Curie was born in Warsaw.", entry);
  CHECK(r.value == 0.0);
  CHECK(r.verdicts[0].reasoning == "Warsaw is wrong");
  REQUIRE(backend->prompts.size() == 1);
  CHECK(backend->prompts[0].find("Biography of Marie Curie.") != std::string::npos);
  CHECK(backend->prompts[0].find("born in Warsaw in 1867") != std::string::npos);
}

TEST_CASE("config digest tracks everything that changes rewards") {
  auto a = make_scorer(oracle());
  auto b = make_scorer(oracle());
  CHECK(a->config_digest() == b->config_digest());
  ScoringConfig cfg;
  cfg.retrieval.top_k = 3;
  Scorer c(oracle(), std::make_shared<retrieval::WhitespaceTokenCounter>(), cfg);
  CHECK(c.config_digest() != a->config_digest());
  auto d = make_scorer(std::make_shared<testing::ScriptedBackend>(std::vector<std::string>{}));
  CHECK(d->config_digest() != a->config_digest());
}

TEST_CASE("cache keys separate every input") {
  const auto base = RewardCache::key(RewardKind::parse("binary_rar"), "p", "r", "v", "c");
  CHECK(base == RewardCache::key(RewardKind::parse("binary_rar"), "p", "r", "v", "c"));
  CHECK(base != RewardCache::key(RewardKind::parse("veriscore"), "p", "r", "v", "c"));
  CHECK(base != RewardCache::key(RewardKind::parse("binary_rar"), "q", "r", "v", "c"));
  CHECK(base != RewardCache::key(RewardKind::parse("binary_rar"), "p", "s", "v", "c"));
  CHECK(base != RewardCache::key(RewardKind::parse("binary_rar"), "p", "r", "w", "c"));
  CHECK(base != RewardCache::key(RewardKind::parse("binary_rar"), "p", "r", "v", "d"));
  CHECK(RewardCache::key(RewardKind::parse("binary_veriscore:0.7"), "p", "r", "v", "c") !=
        RewardCache::key(RewardKind::parse("binary_veriscore:0.8"), "p", "r", "v", "c"));
}

TEST_CASE("persistent cache survives a reload") {
  testing::TempDir dir;
  auto scorer = make_scorer(oracle());
  const auto entry = testing::make_entry("curie", kCurieDocs);
  const auto result = scorer->score(RewardKind::parse("veriscore"), "Marie Curie died in Passy.", entry);
  {
    RewardCache cache(dir / "cache.jsonl");
    cache.put("k", result);
  }
  RewardCache reloaded(dir / "cache.jsonl");
  REQUIRE(reloaded.size() == 1);
  CHECK(same_outcome(*reloaded.get("k"), result));
  CHECK_FALSE(reloaded.get("other"));
}

TEST_CASE("engine keeps input order and reports per-item errors") {
  RewardEngine engine(curie_set(), make_scorer(oracle()), {.workers = 4});
  std::vector<ScoreRequest> requests;
  for (int i = 0; i < 20; ++i) {
    requests.push_back({i % 5 == 4 ? "missing" : "curie",
                        i % 2 ? "Marie Curie was born in Rome." : "Marie Curie died in Passy. Note " + std::to_string(i)});
  }
  const auto outcomes = engine.score_batch(requests, RewardKind::parse("binary_rar"));
  REQUIRE(outcomes.size() == requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    CHECK(outcomes[i].prompt_id == requests[i].prompt_id);
    if (requests[i].prompt_id == "missing") {
      CHECK(outcomes[i].error == ErrorCode::kUnknownPrompt);
    } else {
      REQUIRE(outcomes[i].ok());
      CHECK(outcomes[i].result->value == (i % 2 ? 0.0 : 1.0));
    }
  }
  const auto stats = engine.stats();
  CHECK(stats.items == 20);
  CHECK(stats.errors == 4);
}

TEST_CASE("engine caches repeated requests") {
  testing::TempDir dir;
  RewardEngine engine(curie_set(), make_scorer(oracle()), {.workers = 1, .audit_log = dir / "audit.jsonl"});
  const ScoreRequest req{"curie", "Marie Curie was born in Warsaw and died in Passy."};
  const auto first = engine.score_one(req, RewardKind::parse("veriscore"));
  const auto second = engine.score_one(req, RewardKind::parse("veriscore"));
  CHECK_FALSE(first.result->cache_hit);
  CHECK(second.result->cache_hit);
  CHECK(same_outcome(*first.result, *second.result));
  const auto stats = engine.stats();
  CHECK(stats.cache_lookups == 2);
  CHECK(stats.cache_hits == 1);
  CHECK(stats.cache_hit_rate() == 0.5);
  CHECK(stats.verifier_calls.at("veriscore") == 3);

  const std::string audit = read_file(dir / "audit.jsonl");
  CHECK(std::count(audit.begin(), audit.end(), '\n') == 2);
  CHECK(audit.find(req.response) == std::string::npos);
}

TEST_CASE("verifier call accounting per kind") {
  RewardEngine engine(curie_set(), make_scorer(oracle()), {.workers = 2, .use_cache = false});
  const std::vector<ScoreRequest> reqs{{"curie", "Marie Curie was born in Warsaw and died in Passy."},
                                       {"curie", "Marie Curie married Pierre Curie."}};
  engine.score_batch(reqs, RewardKind::parse("binary_rar"));
  engine.score_batch(reqs, RewardKind::parse("veriscore"));
  const auto stats = engine.stats();
  CHECK(stats.verifier_calls.at("binary") == 2);
  CHECK(stats.verifier_calls.at("veriscore") == (1 + 2) + (1 + 1));
  CHECK(stats.cache_lookups == 0);
}

TEST_CASE("swapping the prompt set") {
  RewardEngine engine(nullptr, make_scorer(oracle()));
  CHECK(engine.score_one({"curie", "x"}, RewardKind::parse("binary_rar")).error == ErrorCode::kUnknownPrompt);
  engine.set_promptset(curie_set());
  CHECK(engine.score_one({"curie", "x"}, RewardKind::parse("binary_rar")).ok());
}

TEST_CASE("wire format roundtrip") {
  auto scorer = make_scorer(oracle());
  const auto entry = testing::make_entry("curie", kCurieDocs);
  for (const char* kind : {"binary_rar", "veriscore", "rating_rar", "conflict_only"}) {
    const auto r = scorer->score(RewardKind::parse(kind), "Marie Curie was born in Paris and died in Passy.", entry);
    const auto parsed = reward_result_from_json(nlohmann::json::parse(to_json(r).dump()));
    CHECK(same_outcome(parsed, r));
  }
  CHECK(testing::error_of([] { reward_result_from_json(nlohmann::json::object()); }) == ErrorCode::kCorruptRecord);

  ScoreOutcome failed{"p", std::nullopt, ErrorCode::kUnknownPrompt, "no such prompt", 1.0};
  const auto j = to_json(failed, false);
  CHECK(j["error"] == "unknown_prompt");
  CHECK_FALSE(j.contains("latency_ms"));
}

TEST_CASE("verdict json roundtrip") {
  for (const auto& kind : {verification::VerdictKind{verification::BinaryLabel::kContradiction},
                           verification::VerdictKind{ClaimLabel::kInconclusive},
                           verification::VerdictKind{verification::Rating{7}}}) {
    const verification::Verdict v{kind, "why", "raw", 2};
    CHECK(verdict_from_json(nlohmann::json::parse(to_json(v).dump())) == v);
  }
}

TEST_CASE("settings parsing") {
  const auto s = load_settings(testing::fixture("config.json"));
  CHECK(s.listen == "127.0.0.1:0");
  CHECK(s.max_batch == 8);
  CHECK(s.workers == 4);
  CHECK(s.verifier.backend == "oracle");
  CHECK(*s.verifier.oracle_facts == testing::fixture("facts.json"));
  CHECK(s.retrieval.chunk_size_tokens == 512);
  CHECK(s.claim_retrieval.top_k == 4);

  for (const char* bad : {R"({"extra": 1})", R"({"service": {"workers": 0}, "verifier": {"oracle_facts": "f"}})",
                          R"({"verifier": {"backend": "oracle"}})", R"({"verifier": {"backend": "remote"}})",
                          R"({"verifier": {"backend": "magic", "oracle_facts": "f"}})", R"({"retrieval": {"top_k": "8"}})",
                          "not json"}) {
    CAPTURE(bad);
    CHECK(testing::error_of([&] { parse_settings(bad, "/tmp").validate(); }) == ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("environment overrides") {
  Settings s;
  ::setenv("RAR_LISTEN", "0.0.0.0:9000", 1);
  ::setenv("RAR_VERIFIER_API_KEY", "k", 1);
  apply_environment(s);
  ::unsetenv("RAR_LISTEN");
  ::unsetenv("RAR_VERIFIER_API_KEY");
  CHECK(s.listen == "0.0.0.0:9000");
  CHECK(s.verifier.api_key == "k");
}

TEST_CASE("backend construction from settings") {
  auto s = load_settings(testing::fixture("config.json"));
  auto backend = make_backend(s);
  CHECK(backend->max_inflight() == 4);
  CHECK(backend->describe().rfind("oracle:", 0) == 0);
  CHECK(make_tokenizer(s)->name() == "whitespace");
}
