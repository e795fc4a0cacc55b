#include "mgbs/vocabulary.hpp"

#include <cctype>
#include <sstream>
#include <stdexcept>

namespace mgbs {

std::string normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_space = true;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space && !out.empty()) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      in_space = false;
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  v.id_to_surface_ = {kBosSurface, kEosSurface};
  v.surface_to_id_ = {{kBosSurface, 0}, {kEosSurface, 1}};
  v.bos_id_ = 0;
  v.eos_id_ = 1;
  for (const auto& raw : words) {
    std::string w = normalize(raw);
    if (w.empty())
      throw std::invalid_argument("vocabulary: empty word");
    if (w.find(' ') != std::string::npos)
      throw std::invalid_argument("vocabulary: word contains whitespace: \"" + raw + "\"");
    if (w == kBosSurface || w == kEosSurface)
      throw std::invalid_argument("vocabulary: reserved surface: " + w);
    auto [it, inserted] = v.surface_to_id_.emplace(w, static_cast<TokenId>(v.id_to_surface_.size()));
    if (!inserted)
      throw std::invalid_argument("vocabulary: duplicate word after normalization: " + w);
    v.id_to_surface_.push_back(w);
  }
  return v;
}

const std::string& Vocabulary::surface(TokenId id) const {
  if (id < 0 || id >= size())
    throw std::invalid_argument("vocabulary: token id out of range: " + std::to_string(id));
  return id_to_surface_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::id_of(std::string_view surface) const {
  auto it = surface_to_id_.find(std::string(surface));
  if (it == surface_to_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& w : normalize_words(text)) {
    auto id = id_of(w);
    if (!id)
      throw std::invalid_argument("vocabulary: word not in vocabulary: \"" + w + "\"");
    if (*id == bos_id_ || *id == eos_id_)
      throw std::invalid_argument("vocabulary: reserved token in text: " + w);
    ids.push_back(*id);
  }
  return ids;
}

std::vector<TokenId> Vocabulary::tokenize_skip_oov(std::string_view text,
                                                   std::vector<std::string>* skipped) const {
  std::vector<TokenId> ids;
  for (const auto& w : normalize_words(text)) {
    auto id = id_of(w);
    if (!id) {
      if (skipped) skipped->push_back(w);
      continue;
    }
    if (*id == bos_id_ || *id == eos_id_)
      throw std::invalid_argument("vocabulary: reserved token in text: " + w);
    ids.push_back(*id);
  }
  return ids;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::ostringstream out;
  bool first = true;
  for (TokenId id : ids) {
    if (!first) out << ' ';
    out << surface(id);
    first = false;
  }
  return out.str();
}

}  // namespace mgbs
