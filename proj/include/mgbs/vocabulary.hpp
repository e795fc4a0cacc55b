#ifndef MGBS_VOCABULARY_HPP_
#define MGBS_VOCABULARY_HPP_

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mgbs {

using TokenId = int;

// Normalization used everywhere text meets token ids: ASCII lowercase,
// split on whitespace. Matching is whole-token, so "mondays" never
// matches "monday".
std::string normalize(std::string_view text);
std::vector<std::string> normalize_words(std::string_view text);

// Word-level token alphabet. Ids are dense in [0, size()); bos and eos
// are always present and reserved (they never appear inside utterances).
class Vocabulary {
 public:
  static constexpr const char* kBosSurface = "<bos>";
  static constexpr const char* kEosSurface = "<eos>";

  // bos gets id 0, eos id 1, then one id per distinct normalized word.
  // Throws std::invalid_argument on duplicate or reserved words.
  static Vocabulary from_words(const std::vector<std::string>& words);

  int size() const { return static_cast<int>(id_to_surface_.size()); }
  TokenId bos_id() const { return bos_id_; }
  TokenId eos_id() const { return eos_id_; }

  const std::string& surface(TokenId id) const;
  std::optional<TokenId> id_of(std::string_view surface) const;
  bool contains(std::string_view surface) const { return id_of(surface).has_value(); }

  // Normalizes and maps every word; throws std::invalid_argument on a word
  // that is out of vocabulary or reserved.
  std::vector<TokenId> tokenize(std::string_view text) const;

  // As tokenize, but drops out-of-vocabulary words into `skipped` instead
  // of throwing. Reserved surfaces still throw.
  std::vector<TokenId> tokenize_skip_oov(std::string_view text,
                                         std::vector<std::string>* skipped) const;

  std::string detokenize(std::span<const TokenId> ids) const;

 private:
  Vocabulary() = default;
  std::vector<std::string> id_to_surface_;
  std::unordered_map<std::string, TokenId> surface_to_id_;
  TokenId bos_id_ = 0;
  TokenId eos_id_ = 1;
};

}  // namespace mgbs

#endif  // MGBS_VOCABULARY_HPP_
