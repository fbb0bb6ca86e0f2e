#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "rar/error.hpp"
#include "rar/evalmetrics.hpp"
#include "support.hpp"

using namespace rar;
using namespace rar::evalmetrics;
using verification::ClaimLabel;

namespace {

std::vector<ClaimLabel> labels(std::size_t s, std::size_t c, std::size_t i) {
  std::vector<ClaimLabel> out(s, ClaimLabel::kSupported);
  out.insert(out.end(), c, ClaimLabel::kContradicted);
  out.insert(out.end(), i, ClaimLabel::kInconclusive);
  return out;
}

std::vector<ShortAnswer> answers(std::size_t c, std::size_t i, std::size_t a) {
  std::vector<ShortAnswer> out(c, ShortAnswer::kCorrect);
  out.insert(out.end(), i, ShortAnswer::kIncorrect);
  out.insert(out.end(), a, ShortAnswer::kAbstain);
  return out;
}

}  // namespace

TEST_CASE("long-form counts and rates") {
  const auto r = long_form_report(labels(4, 5, 1));
  CHECK(r.total_claims == 10);
  CHECK(r.correct == 4);
  CHECK(r.incorrect == 5);
  CHECK(r.inconclusive == 1);
  CHECK(r.hallucination_rate == 0.5);
  CHECK(r.strict_rate == 0.6);
  CHECK_FALSE(r.zero_claims);
  CHECK(long_form_report(labels(3, 0, 0)).hallucination_rate == 0.0);
  const auto empty = long_form_report({});
  CHECK(empty.zero_claims);
  CHECK(empty.hallucination_rate == 0.0);
  CHECK(empty.strict_rate == 0.0);
}

TEST_CASE("long-form reports ignore claim order") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    auto v = labels(rng() % 6, rng() % 6, rng() % 6);
    const auto base = long_form_report(v);
    std::shuffle(v.begin(), v.end(), rng);
    CHECK(long_form_report(v) == base);
    CHECK(base.correct + base.incorrect + base.inconclusive == base.total_claims);
  }
}

TEST_CASE("answer normalization") {
  CHECK(normalize_answer("  Paris. ") == "paris");
  CHECK(normalize_answer("I don\xe2\x80\x99t  KNOW!") == "i dont know");
  CHECK(normalize_answer("New-York") == "new york");
  CHECK(normalize_answer("...") == "");
}

TEST_CASE("short answers are categorized") {
  const std::vector<std::string> gold{"Paris", "City of Light"};
  CHECK(categorize_short_answer("I don't know", gold) == ShortAnswer::kAbstain);
  CHECK(categorize_short_answer("i do not know.", gold) == ShortAnswer::kAbstain);
  CHECK(categorize_short_answer("IDK", gold) == ShortAnswer::kAbstain);
  CHECK(categorize_short_answer("paris.", gold) == ShortAnswer::kCorrect);
  CHECK(categorize_short_answer("city of light", gold) == ShortAnswer::kCorrect);
  CHECK(categorize_short_answer("Lyon", gold) == ShortAnswer::kIncorrect);
  CHECK(categorize_short_answer("", gold) == ShortAnswer::kIncorrect);
  const std::vector<std::string> markers{"no idea"};
  CHECK(categorize_short_answer("No idea!", gold, markers) == ShortAnswer::kAbstain);
  CHECK(categorize_short_answer("I don't know", gold, markers) == ShortAnswer::kIncorrect);
  CHECK(testing::error_of([] { categorize_short_answer("x", {}); }) == ErrorCode::kInvalidArgument);
  CHECK(short_answer_name(ShortAnswer::kAbstain) == "abstain");
}

TEST_CASE("short-form aggregates") {
  auto r = short_form_report(answers(4, 3, 3));
  CHECK(r.n == 10);
  CHECK(r.hallucination_rate == 0.3);
  CHECK(*r.attempted_accuracy == 4.0 / 7.0);
  r = short_form_report(answers(0, 0, 5));
  CHECK(r.hallucination_rate == 0.0);
  CHECK_FALSE(r.attempted_accuracy.has_value());
  r = short_form_report(answers(6, 0, 0));
  CHECK(r.hallucination_rate == 0.0);
  CHECK(*r.attempted_accuracy == 1.0);
  CHECK(testing::error_of([] { short_form_report({}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("abstaining instead of answering wrongly never hurts") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    auto v = answers(rng() % 6, 1 + rng() % 6, rng() % 6);
    std::shuffle(v.begin(), v.end(), rng);
    const auto before = short_form_report(v);
    *std::find(v.begin(), v.end(), ShortAnswer::kIncorrect) = ShortAnswer::kAbstain;
    const auto after = short_form_report(v);
    CHECK(after.hallucination_rate < before.hallucination_rate);
    CHECK(after.correct == before.correct);
    if (after.attempted_accuracy) CHECK(*after.attempted_accuracy >= *before.attempted_accuracy);
    CHECK(after.correct + after.incorrect + after.abstain == after.n);
  }
}
