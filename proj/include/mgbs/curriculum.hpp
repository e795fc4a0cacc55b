#ifndef MGBS_CURRICULUM_HPP_
#define MGBS_CURRICULUM_HPP_

#include <span>
#include <string>
#include <vector>

#include "mgbs/vocabulary.hpp"

namespace mgbs {

enum class Side { kSystem, kUser };

std::string to_string(Side side);
Side side_from_string(std::string_view s);

// Which conversation sides may remove a group from the forcing list when
// they mention one of its phrases.
struct SideSet {
  bool system = true;
  bool user = true;
  bool counts(Side s) const { return s == Side::kSystem ? system : user; }
};

enum class OovPolicy { kReject, kSkip };

// One constraint alternative: a word or a fixed multi-word phrase.
// surface is stored normalized; token_ids round-trip through the vocabulary.
struct PhraseConstraint {
  std::string surface;
  std::vector<TokenId> token_ids;
};

// Disjunctive group: emitting any one phrase satisfies the whole group.
struct ConstraintGroup {
  std::string name;
  std::vector<PhraseConstraint> phrases;
};

struct Curriculum {
  std::vector<ConstraintGroup> groups;

  const ConstraintGroup* find_group(std::string_view name) const;
  std::vector<std::string> group_names() const;
};

// Surface-level form of the curriculum file, usable without a vocabulary
// (metrics recounting works on raw transcript text).
struct SurfacePhrase {
  std::string surface;                // normalized
  std::vector<std::string> words;
};

struct SurfaceGroup {
  std::string name;
  std::vector<SurfacePhrase> phrases;
};

// Parses the curriculum file schema:
//   { "groups": [ { "name": "...", "phrases": ["...", ...] }, ... ] }
// Unknown keys, duplicate group names, or duplicate phrase surfaces within
// a group are errors (std::invalid_argument).
std::vector<SurfaceGroup> parse_curriculum_surfaces(const std::string& document);

std::vector<SurfaceGroup> to_surface_groups(const Curriculum& curriculum);

struct SkippedPhrase {
  std::string group;
  std::string phrase;
  std::string missing_word;
};

struct CurriculumParse {
  Curriculum curriculum;
  std::vector<SkippedPhrase> skipped;  // populated under OovPolicy::kSkip
};

// Tokenizes the parsed document against `vocab`. Under kReject, an
// out-of-vocabulary phrase is an error naming the group and phrase; under
// kSkip such phrases are dropped and reported, and a group left empty is
// an error.
CurriculumParse parse_curriculum(const std::string& document, const Vocabulary& vocab,
                                 OovPolicy policy);
CurriculumParse parse_curriculum_file(const std::string& path, const Vocabulary& vocab,
                                      OovPolicy policy);

struct SatisfactionEvent {
  std::string group;
  std::string phrase;      // the matched surface
  int turn_index = 0;
  Side side = Side::kSystem;
};

// Per-session record of which groups still need forcing. Satisfied groups
// carry exactly one event each; |remaining| + |events| is conserved.
class ConstraintState {
 public:
  explicit ConstraintState(const Curriculum& curriculum);

  bool is_remaining(std::string_view group) const;
  // Remaining groups in curriculum order.
  std::vector<std::string> remaining_names() const;
  std::size_t remaining_count() const;
  const std::vector<SatisfactionEvent>& events() const { return events_; }

  int max_event_turn() const;

 private:
  friend std::vector<SatisfactionEvent> scan_utterance(ConstraintState&, const Curriculum&,
                                                       std::span<const TokenId>, Side, int,
                                                       const SideSet&);
  std::vector<std::string> order_;       // all group names, curriculum order
  std::vector<bool> satisfied_;          // parallel to order_
  std::vector<SatisfactionEvent> events_;
};

// End-of-turn check: for each remaining group, if `side` is counted and any
// phrase occurs as a contiguous token subsequence, removes the group and
// records one event. Prefers the longest matching phrase, then the earliest
// match position, then the lexicographically smaller surface. Returns the
// events appended by this call.
std::vector<SatisfactionEvent> scan_utterance(ConstraintState& state,
                                              const Curriculum& curriculum,
                                              std::span<const TokenId> tokens, Side side,
                                              int turn_index, const SideSet& sides_counted);

// True if `phrase` occurs contiguously in `tokens`; *pos gets the first
// match start.
bool contains_phrase(std::span<const TokenId> tokens, std::span<const TokenId> phrase,
                     std::size_t* pos = nullptr);
bool contains_word_phrase(const std::vector<std::string>& words,
                          const std::vector<std::string>& phrase_words);

}  // namespace mgbs

#endif  // MGBS_CURRICULUM_HPP_
