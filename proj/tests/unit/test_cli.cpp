#include <csignal>
#include <cstdio>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "rar/fileio.hpp"
#include "support.hpp"

using nlohmann::json;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

// Runs the CLI with stderr folded into the captured output.
Run rar_cli(const std::vector<std::string>& args) {
  std::string cmd = quote(RAR_CLI);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " 2>&1";
  Run run;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) run.out.append(buf, n);
  const int raw = ::pclose(pipe);
  run.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return run;
}

std::vector<json> jsonl(const std::string& text) {
  std::vector<json> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    const std::string line = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!line.empty()) out.push_back(json::parse(line));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

std::string ingest_fixture(const testing::TempDir& dir) {
  const auto out = (dir / "prompts.jsonl").string();
  const auto r = rar_cli({"ingest", "--pages", testing::fixture("pages").string(), "--manifest",
                          testing::fixture("manifest.json").string(), "--out", out});
  REQUIRE(r.status == 0);
  return out;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(rar_cli({}).status == 2);
  CHECK(rar_cli({"bogus"}).status == 2);
  CHECK(rar_cli({"score", "--kind", "binary_rar"}).status == 2);
  CHECK(rar_cli({"--help"}).status == 0);
}

TEST_CASE("ingest builds and reports discards") {
  testing::TempDir dir;
  const auto args = std::vector<std::string>{"ingest", "--pages", testing::fixture("pages").string(), "--manifest",
                                             testing::fixture("manifest.json").string(), "--out",
                                             (dir / "p.jsonl").string()};
  auto r = rar_cli(args);
  CHECK(r.status == 0);
  CHECK(r.out.find("built 1, discarded 1") != std::string::npos);
  CHECK(r.out.find("discarded lovelace: min_documents (2 documents)") != std::string::npos);
  CHECK(rar::datastore::load_promptset(dir / "p.jsonl").size() == 1);
  CHECK(rar_cli(args).status == 2);
  auto again = args;
  again.push_back("--overwrite");
  CHECK(rar_cli(again).status == 0);

  rar::write_file_atomic(dir / "bad.json", R"({"x": ["missing.html"]})");
  CHECK(rar_cli({"ingest", "--pages", testing::fixture("pages").string(), "--manifest", (dir / "bad.json").string(),
                 "--out", (dir / "q.jsonl").string()})
            .status == 2);
}

TEST_CASE("score writes results and a summary") {
  testing::TempDir dir;
  const auto prompts = ingest_fixture(dir);
  const auto out = (dir / "results.jsonl").string();
  auto r = rar_cli({"score", "--config", testing::fixture("config.json").string(), "--promptset", prompts,
                    "--responses", testing::fixture("responses.jsonl").string(), "--kind", "veriscore", "--out", out});
  CHECK(r.status == 0);
  const auto lines = jsonl(rar::read_file(out));
  REQUIRE(lines.size() == 6);
  CHECK(lines[0]["value"] == 1.0);
  CHECK(lines[1]["value"] == 0.0);
  CHECK(lines[4]["error"] == "unknown_prompt");
  CHECK_FALSE(lines[0].contains("latency_ms"));
  const auto& summary = lines[5]["summary"];
  CHECK(summary["items"] == 5);
  CHECK(summary["errors"] == 1);
  CHECK(summary["verifier_calls"] == 9);

  r = rar_cli({"score", "--config", testing::fixture("config.json").string(), "--promptset", prompts, "--responses",
               testing::fixture("responses.jsonl").string(), "--kind", "binary_rar", "--strict", "--out", out});
  CHECK(r.status == 3);
  CHECK(rar_cli({"score", "--config", testing::fixture("config.json").string(), "--promptset", prompts, "--responses",
                 testing::fixture("responses.jsonl").string(), "--kind", "nonsense"})
            .status == 2);
}

TEST_CASE("score accepts an oracle table without a config") {
  testing::TempDir dir;
  const auto prompts = ingest_fixture(dir);
  auto r = rar_cli({"score", "--oracle", testing::fixture("facts.json").string(), "--promptset", prompts,
                    "--responses", testing::fixture("responses.jsonl").string(), "--kind", "rating_rar"});
  CHECK(r.status == 0);
  CHECK(r.out.find("\"summary\"") != std::string::npos);
}

TEST_CASE("report tables") {
  testing::TempDir dir;
  const auto prompts = ingest_fixture(dir);
  const auto out = (dir / "results.jsonl").string();
  rar_cli({"score", "--config", testing::fixture("config.json").string(), "--promptset", prompts, "--responses",
           testing::fixture("responses.jsonl").string(), "--kind", "veriscore", "--out", out});
  auto r = rar_cli({"report", "--results", out});
  CHECK(r.status == 0);
  CHECK(r.out.find("claims") != std::string::npos);
  CHECK(r.out.find("incorrect") != std::string::npos);

  rar::write_file_atomic(dir / "short.jsonl", R"({"answer": "Paris.", "gold": "paris"}
{"answer": "I don't know", "gold": ["Rome"]}
{"answer": "Lyon", "gold": "Paris"}
{"answer": "Vienna", "gold": "Vienna"}
)");
  r = rar_cli({"report", "--short-form", "--results", (dir / "short.jsonl").string()});
  CHECK(r.status == 0);
  CHECK(r.out.find("0.2500") != std::string::npos);
  CHECK(r.out.find("0.6667") != std::string::npos);
  CHECK(rar_cli({"report", "--short-form", "--results", out}).status == 2);
}

TEST_CASE("train-toy is reproducible and summarized by stats") {
  testing::TempDir dir;
  const auto task = testing::fixture("toy_short_form.json").string();
  const auto a = (dir / "a.jsonl").string();
  const auto b = (dir / "b.jsonl").string();
  CHECK(rar_cli({"train-toy", "--task", task, "--steps", "30", "--seed", "5", "--out", a}).status == 0);
  CHECK(rar_cli({"train-toy", "--task", task, "--steps", "30", "--seed", "5", "--out", b}).status == 0);
  CHECK(rar::read_file(a) == rar::read_file(b));
  CHECK(jsonl(rar::read_file(a)).size() == 30);
  auto r = rar_cli({"stats", "--report", a, "--window", "5"});
  CHECK(r.status == 0);
  CHECK(r.out.find("hallucination_rate") != std::string::npos);
  CHECK(rar_cli({"train-toy", "--task", task, "--lr", "-1"}).status == 2);
  CHECK(rar_cli({"train-toy", "--task", (dir / "missing.json").string()}).status == 2);
}

TEST_CASE("serve answers like the score command") {
  testing::TempDir dir;
  const auto prompts = ingest_fixture(dir);
  rar::write_file_atomic(dir / "config.json", json{{"service", {{"promptset_path", prompts}, {"workers", 2}}},
                                                   {"verifier",
                                                    {{"backend", "oracle"},
                                                     {"oracle_facts", testing::fixture("facts.json").string()}}}}
                                                  .dump());
  int fds[2];
  REQUIRE(::pipe(fds) == 0);
  const pid_t pid = ::fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    ::dup2(fds[1], STDOUT_FILENO);
    ::close(fds[0]);
    const std::string config = (dir / "config.json").string();
    ::execl(RAR_CLI, RAR_CLI, "serve", "--config", config.c_str(), "--listen", "127.0.0.1:0", nullptr);
    ::_exit(127);
  }
  ::close(fds[1]);
  std::string banner;
  char c = 0;
  while (::read(fds[0], &c, 1) == 1 && c != '\n') banner += c;
  REQUIRE(banner.rfind("listening on 127.0.0.1:", 0) == 0);
  const int port = std::stoi(banner.substr(banner.rfind(':') + 1));

  httplib::Client client("127.0.0.1", port);
  json body{{"kind", "veriscore"}, {"items", json::array()}};
  for (const auto& line : jsonl(rar::read_file(testing::fixture("responses.jsonl")))) body["items"].push_back(line);
  auto res = client.Post("/v1/score", body.dump(), "application/json");
  REQUIRE(res);
  auto http = json::parse(res->body)["results"];

  const auto out = (dir / "cli.jsonl").string();
  rar_cli({"score", "--config", (dir / "config.json").string(), "--responses",
           testing::fixture("responses.jsonl").string(), "--kind", "veriscore", "--out", out});
  const auto cli = jsonl(rar::read_file(out));
  REQUIRE(cli.size() == http.size() + 1);
  for (std::size_t i = 0; i < http.size(); ++i) {
    http[i].erase("latency_ms");
    CHECK(http[i].dump() == cli[i].dump());
  }

  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  ::close(fds[0]);
}
