#include <atomic>
#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include "rar/verification.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "rar/error.hpp"
#include "rar/utf8.hpp"
#include "support.hpp"

using namespace rar;
using namespace rar::verification;

namespace {

retrieval::EvidenceSet evidence(std::vector<std::string> texts) {
  retrieval::EvidenceSet set;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    set.chunks.push_back({{{"doc" + std::to_string(i), 0}, texts[i], 1}, 1.0});
  }
  return set;
}

VerifierRequest binary_request(std::string response = "resp") {
  return {"prompt", std::move(response), evidence({"passage"}), Mode::kWholeResponseBinary, std::nullopt};
}

FactTable curie_table() { return FactTable::load(testing::fixture("facts.json")); }

}  // namespace

TEST_CASE("binary prompt carries passages, prompt and response") {
  const auto req = VerifierRequest{"Who?", "She was born in Warsaw.", evidence({"alpha text", "beta text"}),
                                   Mode::kWholeResponseBinary, std::nullopt};
  const std::string p = render_prompt(req);
  CHECK(p.find("[1] (doc0) alpha text\n\n[2] (doc1) beta text") != std::string::npos);
  CHECK(p.find("Who?") != std::string::npos);
  CHECK(p.find("She was born in Warsaw.") != std::string::npos);
  CHECK(p.find("{passages_text}") == std::string::npos);
  CHECK(p.find("\"SCORE\"") != std::string::npos);
}

TEST_CASE("rating and claim prompts differ from the binary one") {
  auto req = binary_request();
  const std::string binary = render_prompt(req);
  req.mode = Mode::kWholeResponseRating;
  const std::string rating = render_prompt(req);
  CHECK(rating != binary);
  CHECK(rating.find("0-10") != std::string::npos);
  req.mode = Mode::kPerClaim;
  req.claim_text = "The sky is green.";
  CHECK(render_prompt(req).find("Claim: The sky is green.") != std::string::npos);
  CHECK(render_claim_extraction_prompt("Q", "R").find("R") != std::string::npos);
  CHECK(render_dataset_curation_prompt(evidence({"e"}), "c").find("c") != std::string::npos);
}

TEST_CASE("template placeholders in user text are not expanded") {
  const auto req = VerifierRequest{"{response_text}", "{passages_text}", evidence({"x"}), Mode::kWholeResponseBinary,
                                   std::nullopt};
  const std::string p = render_prompt(req);
  CHECK(p.find("[1] (doc0) x") != std::string::npos);
  CHECK(p.find("{response_text}") != std::string::npos);
}

TEST_CASE("requests are validated") {
  auto req = binary_request();
  req.evidence.chunks.clear();
  CHECK(testing::error_of([&] { req.validate(); }) == ErrorCode::kInvalidArgument);
  req = binary_request();
  req.mode = Mode::kPerClaim;
  CHECK(testing::error_of([&] { req.validate(); }) == ErrorCode::kInvalidArgument);
  req = binary_request();
  req.claim_text = "x";
  CHECK(testing::error_of([&] { req.validate(); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("passage budget truncates and drops passages") {
  const auto ev = evidence({std::string(50, 'a'), std::string(50, 'b'), std::string(50, 'c')});
  CHECK(render_passages(ev, "", {10, 8, 1000}) == "[1] (doc0) aaaaaaaaaa\n\n[2] (doc1) bbbbbbbbbb\n\n[3] (doc2) cccccccccc");
  CHECK(render_passages(ev, "", {10, 2, 1000}).find("doc2") == std::string::npos);
  // The first block costs 21 code points, each later one 23.
  CHECK(render_passages(ev, "", {10, 8, 43}).find("doc1") == std::string::npos);
  CHECK(render_passages(ev, "", {10, 8, 44}).find("doc1") != std::string::npos);
  CHECK(testing::error_of([&] { render_passages(ev, std::string(30, 'x'), {10, 8, 40}); }) ==
        ErrorCode::kTemplateBudgetExceeded);
}

TEST_CASE("passage truncation never splits a code point") {
  const auto ev = evidence({"\xc3\xa9\xc3\xa9\xc3\xa9"});
  const std::string out = render_passages(ev, "", {2, 8, 1000});
  CHECK(out == "[1] (doc0) \xc3\xa9\xc3\xa9");
  CHECK(utf8::repair(out) == out);
}

TEST_CASE("binary verdict parsing") {
  const auto v = parse_binary_verdict(R"(Thinking... {"REASONING": "No contradiction found.", "SCORE": 1})");
  CHECK(std::get<BinaryLabel>(v.kind) == BinaryLabel::kNoContradiction);
  CHECK(v.reasoning == "No contradiction found.");
  CHECK(std::get<BinaryLabel>(parse_binary_verdict(R"({"reasoning": "x", "score": "0"})").kind) ==
        BinaryLabel::kContradiction);
  // The last object wins.
  CHECK(std::get<BinaryLabel>(
            parse_binary_verdict(R"({"REASONING": "a", "SCORE": 1} then {"REASONING": "b {x}", "SCORE": 0})").kind) ==
        BinaryLabel::kContradiction);
  CHECK(std::get<BinaryLabel>(parse_binary_verdict("```json\n{\"REASONING\": \"a\", \"SCORE\": 1.0}\n```").kind) ==
        BinaryLabel::kNoContradiction);
  for (const char* bad : {"", "SCORE: 1", R"({"REASONING": "a"})", R"({"REASONING": "a", "SCORE": 2})",
                          R"({"REASONING": "a", "SCORE": 0.5})", R"({"REASONING": "a", "SCORE": "yes"})"}) {
    CAPTURE(bad);
    CHECK(testing::error_of([&] { parse_binary_verdict(bad); }) == ErrorCode::kParseFailure);
  }
}

TEST_CASE("rating verdict parsing") {
  CHECK(std::get<Rating>(parse_rating_verdict(R"({"REASONING": "ok", "SCORE": 7})").kind).value == 7);
  CHECK(std::get<Rating>(parse_rating_verdict(R"({"REASONING": "ok", "SCORE": "10"})").kind).value == 10);
  CHECK(testing::error_of([] { parse_rating_verdict(R"({"REASONING": "x", "SCORE": 11})"); }) ==
        ErrorCode::kParseFailure);
  CHECK(testing::error_of([] { parse_rating_verdict(R"({"REASONING": "x", "SCORE": -1})"); }) ==
        ErrorCode::kParseFailure);
}

TEST_CASE("claim verdict parsing uses the last non-empty line") {
  CHECK(std::get<ClaimLabel>(parse_claim_verdict("The passage agrees.\nSupported\n\n").kind) ==
        ClaimLabel::kSupported);
  CHECK(std::get<ClaimLabel>(parse_claim_verdict("supported? no.\nVerdict: contradicted").kind) ==
        ClaimLabel::kContradicted);
  CHECK(std::get<ClaimLabel>(parse_claim_verdict("INCONCLUSIVE.").kind) == ClaimLabel::kInconclusive);
  CHECK(testing::error_of([] { parse_claim_verdict("supported or contradicted"); }) == ErrorCode::kParseFailure);
  CHECK(testing::error_of([] { parse_claim_verdict("unsupportedness"); }) == ErrorCode::kParseFailure);
  CHECK(testing::error_of([] { parse_claim_verdict("  \n "); }) == ErrorCode::kParseFailure);
}

TEST_CASE("claim list parsing") {
  CHECK(parse_claim_list(R"(Claims: ["a", "b [c]"])") == std::vector<std::string>{"a", "b [c]"});
  CHECK(parse_claim_list("[]").empty());
  CHECK(testing::error_of([] { parse_claim_list("[1, 2]"); }) == ErrorCode::kParseFailure);
  CHECK(testing::error_of([] { parse_claim_list("none"); }) == ErrorCode::kParseFailure);
}

TEST_CASE("verify retries parse failures") {
  testing::ScriptedBackend backend({"garbage", R"({"REASONING": "r", "SCORE": 0})"});
  const auto v = verify(binary_request(), backend, {.retry_limit = 2});
  CHECK(v.attempts == 2);
  CHECK(std::get<BinaryLabel>(v.kind) == BinaryLabel::kContradiction);
  REQUIRE(backend.prompts.size() == 2);
  CHECK(backend.prompts[0] == backend.prompts[1]);
}

TEST_CASE("verify gives up after the retry limit") {
  testing::ScriptedBackend backend({"a", "b", "c", R"({"REASONING": "r", "SCORE": 0})"});
  CHECK(testing::error_of([&] { verify(binary_request(), backend, {.retry_limit = 2}); }) ==
        ErrorCode::kVerdictUndecidable);
  CHECK(backend.prompts.size() == 3);
}

TEST_CASE("transport failures propagate") {
  testing::ScriptedBackend backend({});
  CHECK(testing::error_of([&] { verify(binary_request(), backend); }) == ErrorCode::kVerifierUnavailable);
}

TEST_CASE("claim extraction tidies the list") {
  testing::ScriptedBackend backend({"oops", R"([" a ", "", "b", "a"])"});
  CHECK(extract_claims("p", "r", backend) == std::vector<std::string>{"a", "b"});
  testing::ScriptedBackend failing({"x", "y", "z"});
  CHECK(testing::error_of([&] { extract_claims("p", "r", failing); }) == ErrorCode::kClaimExtractionFailed);
}

TEST_CASE("bounded backend caps concurrent calls") {
  auto slow = std::make_shared<testing::SlowBackend>(std::chrono::milliseconds(20), 1);
  BoundedBackend bounded(slow, 3);
  std::vector<std::thread> threads;
  for (int i = 0; i < 12; ++i) threads.emplace_back([&] { bounded.judge(binary_request()); });
  for (auto& t : threads) t.join();
  CHECK(slow->calls == 12);
  CHECK(bounded.peak_inflight() == 3);
  CHECK(testing::error_of([&] { BoundedBackend(slow, 0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("fact table patterns and statements") {
  const auto table = curie_table();
  const auto a = table.assertions_in("Marie Curie was born in Paris.");
  REQUIRE(a.size() == 1);
  CHECK(a[0] == Assertion{"marie curie", "born_in", "paris"});
  CHECK(table.is_contradicted(a[0]));
  CHECK(table.is_supported({"marie curie", "born_in", "warsaw"}));
  CHECK_FALSE(table.is_contradicted({"marie curie", "unknown_relation", "x"}));
  CHECK(table.assertions_in("Someone else was born in Paris.").empty());

  const auto s = table.statements("Marie Curie was born in Warsaw and died in Passy. Ada Lovelace is great.");
  REQUIRE(s.size() == 3);
  CHECK(s[1] == "Marie Curie died in Passy");
  CHECK(table.assertions_in(s[1]) == std::vector<Assertion>{{"marie curie", "died_in", "passy"}});
}

TEST_CASE("fact table parsing") {
  CHECK(FactTable::parse(R"([{"subject": "A", "relation": "r", "value": "v"}])").facts().size() == 1);
  CHECK(testing::error_of([] { FactTable::parse(R"([{"subject": "A", "relation": "r"}])"); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(testing::error_of([] {
          FactTable::parse(R"([{"subject": "A", "relation": "r", "value": "v", "patterns": ["{subject} only"]}])");
        }) == ErrorCode::kInvalidArgument);
  CHECK(curie_table().digest() == curie_table().digest());
  CHECK(FactTable::parse("[]").digest() != curie_table().digest());
}

TEST_CASE("oracle verdicts") {
  OracleBackend oracle(curie_table());
  auto req = binary_request("Marie Curie was born in Warsaw and died in Passy.");
  CHECK(std::get<BinaryLabel>(oracle.judge(req)->kind) == BinaryLabel::kNoContradiction);
  req.response_text = "Marie Curie was born in Paris and died in Passy.";
  CHECK(std::get<BinaryLabel>(oracle.judge(req)->kind) == BinaryLabel::kContradiction);

  req.mode = Mode::kWholeResponseRating;
  CHECK(std::get<Rating>(oracle.judge(req)->kind).value == 4);
  req.response_text = "Marie Curie was born in Paris and died in Rome.";
  CHECK(std::get<Rating>(oracle.judge(req)->kind).value == 1);
  req.response_text = "Nothing to see.";
  CHECK(std::get<Rating>(oracle.judge(req)->kind).value == 10);

  req.mode = Mode::kPerClaim;
  req.claim_text = "Marie Curie died in Passy.";
  CHECK(std::get<ClaimLabel>(oracle.judge(req)->kind) == ClaimLabel::kSupported);
  req.claim_text = "Marie Curie died in Rome.";
  CHECK(std::get<ClaimLabel>(oracle.judge(req)->kind) == ClaimLabel::kContradicted);
  req.claim_text = "Marie Curie liked tea.";
  CHECK(std::get<ClaimLabel>(oracle.judge(req)->kind) == ClaimLabel::kInconclusive);

  CHECK(oracle.describe().rfind("oracle:", 0) == 0);
  CHECK(testing::error_of([&] { oracle.complete("x"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("oracle rating scale") {
  CHECK(oracle_rating(0) == 10);
  CHECK(oracle_rating(1) == 4);
  CHECK(oracle_rating(2) == 1);
  CHECK(oracle_rating(9) == 1);
}

TEST_CASE("oracle claim extraction") {
  OracleBackend oracle(curie_table());
  const auto claims = *oracle.extract_claims("p", "Marie Curie was born in Warsaw and died in Passy. The end.");
  CHECK(claims == std::vector<std::string>{"Marie Curie was born in Warsaw", "Marie Curie died in Passy"});
}

TEST_CASE("remote backend speaks chat completions") {
  httplib::Server server;
  std::atomic<int> calls{0};
  std::string seen_auth;
  nlohmann::json seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 503;
      return;
    }
    seen_auth = req.get_header_value("Authorization");
    seen_body = nlohmann::json::parse(req.body);
    nlohmann::json reply = {{"choices", {{{"message", {{"content", R"({"REASONING": "fine", "SCORE": 1})"}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  server.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteLmBackend backend({"http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", "judge-model",
                           "secret", 5000, 64, 2});
  CHECK(backend.ready());
  const auto v = verify(binary_request(), backend);
  CHECK(std::get<BinaryLabel>(v.kind) == BinaryLabel::kNoContradiction);
  CHECK(calls == 2);
  CHECK(seen_auth == "Bearer secret");
  CHECK(seen_body["model"] == "judge-model");
  CHECK(seen_body["temperature"] == 0);
  CHECK(seen_body["max_tokens"] == 64);
  CHECK(backend.describe().find("judge-model") != std::string::npos);
  CHECK(backend.describe().find("secret") == std::string::npos);

  server.stop();
  thread.join();
}

TEST_CASE("unreachable remote backend") {
  RemoteLmBackend backend({"http://127.0.0.1:1/v1/chat/completions", "m", "", 200, 16, 0});
  CHECK(testing::error_of([&] { backend.complete("x"); }) == ErrorCode::kVerifierUnavailable);
  CHECK_FALSE(backend.ready());
}
