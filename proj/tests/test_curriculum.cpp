#include <doctest.h>

#include <stdexcept>

#include <random>

#include "mgbs/curriculum.hpp"

using namespace mgbs;

namespace {

const char* kDocument = R"({
  "groups": [
    {"name": "seasons", "phrases": ["spring", "winter"]},
    {"name": "days", "phrases": ["Monday", "on Monday"]}
  ]
})";

Vocabulary full_vocab() {
  return Vocabulary::from_words({"spring", "winter", "monday", "on", "see", "you", "i", "love",
                                 "mondays", "are", "hard"});
}

}  // namespace

TEST_CASE("parse_curriculum maps groups and tokenizes phrases") {
  auto vocab = full_vocab();
  auto parsed = parse_curriculum(kDocument, vocab, OovPolicy::kReject);
  const auto& cur = parsed.curriculum;
  REQUIRE(cur.groups.size() == 2);
  CHECK(cur.groups[0].name == "seasons");
  CHECK(cur.groups[0].phrases.size() == 2);
  CHECK(cur.groups[1].phrases.size() == 2);
  CHECK(parsed.skipped.empty());

  const auto& on_monday = cur.groups[1].phrases[1];
  CHECK(on_monday.surface == "on monday");
  REQUIRE(on_monday.token_ids.size() == 2);
  CHECK(on_monday.token_ids[0] == *vocab.id_of("on"));
  CHECK(on_monday.token_ids[1] == *vocab.id_of("monday"));
}

TEST_CASE("parse_curriculum OOV handling") {
  auto vocab = Vocabulary::from_words({"spring", "winter", "on"});  // no "monday"

  SUBCASE("reject names the group and phrase") {
    try {
      parse_curriculum(kDocument, vocab, OovPolicy::kReject);
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      std::string msg = e.what();
      CHECK(msg.find("days") != std::string::npos);
      CHECK(msg.find("monday") != std::string::npos);
    }
  }

  SUBCASE("a group emptied by skipping is an error") {
    CHECK_THROWS_AS(parse_curriculum(kDocument, vocab, OovPolicy::kSkip), std::invalid_argument);
  }

  SUBCASE("skip drops the phrase and reports it") {
    auto no_winter = Vocabulary::from_words({"spring", "monday", "on"});
    auto parsed = parse_curriculum(kDocument, no_winter, OovPolicy::kSkip);
    REQUIRE(parsed.curriculum.groups.size() == 2);
    CHECK(parsed.curriculum.groups[0].phrases.size() == 1);
    CHECK(parsed.curriculum.groups[0].phrases[0].surface == "spring");
    REQUIRE(parsed.skipped.size() == 1);
    CHECK(parsed.skipped[0].group == "seasons");
    CHECK(parsed.skipped[0].phrase == "winter");
  }
}

TEST_CASE("parse_curriculum rejects malformed documents") {
  auto vocab = full_vocab();
  CHECK_THROWS(parse_curriculum("not json", vocab, OovPolicy::kReject));
  CHECK_THROWS(parse_curriculum(R"({"groups": [], "extra": 1})", vocab, OovPolicy::kReject));
  CHECK_THROWS(parse_curriculum(
      R"({"groups": [{"name": "a", "phrases": ["spring"], "x": 1}]})", vocab,
      OovPolicy::kReject));
  CHECK_THROWS(parse_curriculum(R"({"groups": [{"name": "a", "phrases": []}]})", vocab,
                                OovPolicy::kReject));
  CHECK_THROWS(parse_curriculum(
      R"({"groups": [{"name": "a", "phrases": ["spring"]}, {"name": "a", "phrases": ["winter"]}]})",
      vocab, OovPolicy::kReject));
  CHECK_THROWS(parse_curriculum(
      R"({"groups": [{"name": "a", "phrases": ["Spring", "spring"]}]})", vocab,
      OovPolicy::kReject));
  // empty curriculum is fine
  auto parsed = parse_curriculum(R"({"groups": []})", vocab, OovPolicy::kReject);
  CHECK(parsed.curriculum.groups.empty());
}

TEST_CASE("scan_utterance matches whole tokens and prefers the longest phrase") {
  auto vocab = full_vocab();
  auto cur = parse_curriculum(kDocument, vocab, OovPolicy::kReject).curriculum;
  ConstraintState state(cur);

  SUBCASE("longest match is recorded") {
    auto events = scan_utterance(state, cur, vocab.tokenize("see you on monday"), Side::kSystem,
                                 0, SideSet{});
    REQUIRE(events.size() == 1);
    CHECK(events[0].group == "days");
    CHECK(events[0].phrase == "on monday");
    CHECK(events[0].side == Side::kSystem);
    CHECK(state.remaining_names() == std::vector<std::string>{"seasons"});
  }

  SUBCASE("no sub-token matches") {
    auto events =
        scan_utterance(state, cur, vocab.tokenize("mondays are hard"), Side::kUser, 0, SideSet{});
    CHECK(events.empty());
    CHECK(state.remaining_count() == 2);
  }

  SUBCASE("empty remaining leaves state unchanged") {
    scan_utterance(state, cur, vocab.tokenize("on monday"), Side::kSystem, 0, SideSet{});
    scan_utterance(state, cur, vocab.tokenize("i love winter"), Side::kUser, 1, SideSet{});
    CHECK(state.remaining_count() == 0);
    auto events = scan_utterance(state, cur, vocab.tokenize("winter monday"), Side::kUser, 2,
                                 SideSet{});
    CHECK(events.empty());
    CHECK(state.events().size() == 2);
  }

  SUBCASE("uncounted side never matches") {
    auto events = scan_utterance(state, cur, vocab.tokenize("i love winter"), Side::kUser, 0,
                                 SideSet{true, false});
    CHECK(events.empty());
    CHECK(state.remaining_count() == 2);
  }

  SUBCASE("turn index regression is an error") {
    scan_utterance(state, cur, vocab.tokenize("winter"), Side::kSystem, 3, SideSet{});
    CHECK_THROWS_AS(
        scan_utterance(state, cur, vocab.tokenize("monday"), Side::kSystem, 2, SideSet{}),
        std::invalid_argument);
  }
}

TEST_CASE("scan_utterance properties: idempotence and conservation") {
  auto vocab = full_vocab();
  auto cur = parse_curriculum(kDocument, vocab, OovPolicy::kReject).curriculum;
  ConstraintState state(cur);

  std::mt19937_64 rng(7);
  std::vector<TokenId> word_ids;
  for (TokenId id = 2; id < vocab.size(); ++id) word_ids.push_back(id);

  for (int turn = 0; turn < 40; ++turn) {
    std::uniform_int_distribution<std::size_t> len(0, 6);
    std::uniform_int_distribution<std::size_t> pick(0, word_ids.size() - 1);
    std::vector<TokenId> tokens;
    for (std::size_t i = 0; i < len(rng); ++i) tokens.push_back(word_ids[pick(rng)]);

    auto first = scan_utterance(state, cur, tokens, Side::kSystem, turn, SideSet{});
    auto again = scan_utterance(state, cur, tokens, Side::kSystem, turn, SideSet{});
    CHECK(again.empty());  // idempotent: groups are already removed
    CHECK(state.remaining_count() + state.events().size() == cur.groups.size());
    (void)first;
  }
}

TEST_CASE("longest-match tie-breaks by position then surface") {
  auto vocab = Vocabulary::from_words({"a", "b", "c"});
  Curriculum cur;
  ConstraintGroup g;
  g.name = "g";
  g.phrases.push_back({"b a", {*vocab.id_of("b"), *vocab.id_of("a")}});
  g.phrases.push_back({"a b", {*vocab.id_of("a"), *vocab.id_of("b")}});
  cur.groups.push_back(g);

  ConstraintState state(cur);
  // both two-token phrases match; "a b" starts earlier
  auto events = scan_utterance(state, cur, vocab.tokenize("a b a"), Side::kSystem, 0, SideSet{});
  REQUIRE(events.size() == 1);
  CHECK(events[0].phrase == "a b");

  ConstraintState state2(cur);
  // in "b a b" the match "b a" starts earlier than "a b"
  auto events2 =
      scan_utterance(state2, cur, vocab.tokenize("b a b"), Side::kSystem, 0, SideSet{});
  REQUIRE(events2.size() == 1);
  CHECK(events2[0].phrase == "b a");
}
