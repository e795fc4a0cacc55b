#include <doctest.h>

#include <stdexcept>

#include "mgbs/vocabulary.hpp"

using namespace mgbs;

TEST_CASE("normalization lowercases and collapses whitespace") {
  CHECK(normalize("On  Monday\t") == "on monday");
  CHECK(normalize("") == "");
  CHECK(normalize("  ") == "");
  auto words = normalize_words("I love  Winter");
  REQUIRE(words.size() == 3);
  CHECK(words[0] == "i");
  CHECK(words[2] == "winter");
}

TEST_CASE("vocabulary is a bijection with reserved specials") {
  auto vocab = Vocabulary::from_words({"spring", "Winter", "monday"});
  CHECK(vocab.size() == 5);
  CHECK(vocab.bos_id() == 0);
  CHECK(vocab.eos_id() == 1);
  CHECK(vocab.surface(vocab.bos_id()) == Vocabulary::kBosSurface);
  CHECK(*vocab.id_of("winter") == 3);  // normalized at construction
  for (int id = 0; id < vocab.size(); ++id)
    CHECK(*vocab.id_of(vocab.surface(id)) == id);
}

TEST_CASE("vocabulary rejects duplicates and reserved words") {
  CHECK_THROWS_AS(Vocabulary::from_words({"a", "A"}), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary::from_words({"<bos>"}), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary::from_words({""}), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary::from_words({"two words"}), std::invalid_argument);
}

TEST_CASE("tokenize round-trips and enforces vocabulary") {
  auto vocab = Vocabulary::from_words({"see", "you", "on", "monday"});
  auto ids = vocab.tokenize("See you ON monday");
  CHECK(vocab.detokenize(ids) == "see you on monday");
  CHECK_THROWS_AS(vocab.tokenize("see you tomorrow"), std::invalid_argument);
  CHECK_THROWS_AS(vocab.tokenize("<eos>"), std::invalid_argument);

  std::vector<std::string> skipped;
  auto kept = vocab.tokenize_skip_oov("see you tomorrow", &skipped);
  CHECK(kept.size() == 2);
  REQUIRE(skipped.size() == 1);
  CHECK(skipped[0] == "tomorrow");
}
