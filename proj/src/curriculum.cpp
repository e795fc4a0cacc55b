#include "mgbs/curriculum.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mgbs {

using nlohmann::json;

std::string to_string(Side side) { return side == Side::kSystem ? "system" : "user"; }

Side side_from_string(std::string_view s) {
  if (s == "system") return Side::kSystem;
  if (s == "user") return Side::kUser;
  throw std::invalid_argument("unknown side: " + std::string(s));
}

const ConstraintGroup* Curriculum::find_group(std::string_view name) const {
  for (const auto& g : groups)
    if (g.name == name) return &g;
  return nullptr;
}

std::vector<std::string> Curriculum::group_names() const {
  std::vector<std::string> names;
  names.reserve(groups.size());
  for (const auto& g : groups) names.push_back(g.name);
  return names;
}

namespace {

void require_keys(const json& obj, const std::set<std::string>& allowed,
                  const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      throw std::invalid_argument("curriculum: unknown key \"" + it.key() + "\" in " + where);
  }
}

}  // namespace

std::vector<SurfaceGroup> parse_curriculum_surfaces(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("curriculum: malformed document: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("curriculum: root must be an object");
  require_keys(doc, {"groups"}, "root");
  if (!doc.contains("groups") || !doc["groups"].is_array())
    throw std::invalid_argument("curriculum: missing \"groups\" array");

  std::vector<SurfaceGroup> groups;
  std::set<std::string> seen_names;
  for (const auto& g : doc["groups"]) {
    if (!g.is_object()) throw std::invalid_argument("curriculum: group must be an object");
    require_keys(g, {"name", "phrases"}, "group");
    if (!g.contains("name") || !g["name"].is_string())
      throw std::invalid_argument("curriculum: group \"name\" must be a string");
    if (!g.contains("phrases") || !g["phrases"].is_array())
      throw std::invalid_argument("curriculum: group \"phrases\" must be an array");

    SurfaceGroup group;
    group.name = g["name"].get<std::string>();
    if (group.name.empty()) throw std::invalid_argument("curriculum: empty group name");
    if (!seen_names.insert(group.name).second)
      throw std::invalid_argument("curriculum: duplicate group name: " + group.name);

    std::set<std::string> seen_surfaces;
    for (const auto& p : g["phrases"]) {
      if (!p.is_string())
        throw std::invalid_argument("curriculum: phrase must be a string in group " + group.name);
      SurfacePhrase phrase;
      phrase.words = normalize_words(p.get<std::string>());
      if (phrase.words.empty())
        throw std::invalid_argument("curriculum: empty phrase in group " + group.name);
      phrase.surface = normalize(p.get<std::string>());
      if (!seen_surfaces.insert(phrase.surface).second)
        throw std::invalid_argument("curriculum: duplicate phrase \"" + phrase.surface +
                                    "\" in group " + group.name);
      group.phrases.push_back(std::move(phrase));
    }
    if (group.phrases.empty())
      throw std::invalid_argument("curriculum: group has no phrases: " + group.name);
    groups.push_back(std::move(group));
  }
  return groups;
}

std::vector<SurfaceGroup> to_surface_groups(const Curriculum& curriculum) {
  std::vector<SurfaceGroup> out;
  for (const auto& g : curriculum.groups) {
    SurfaceGroup sg;
    sg.name = g.name;
    for (const auto& p : g.phrases) sg.phrases.push_back({p.surface, normalize_words(p.surface)});
    out.push_back(std::move(sg));
  }
  return out;
}

CurriculumParse parse_curriculum(const std::string& document, const Vocabulary& vocab,
                                 OovPolicy policy) {
  CurriculumParse result;
  for (const auto& sg : parse_curriculum_surfaces(document)) {
    ConstraintGroup group;
    group.name = sg.name;
    for (const auto& sp : sg.phrases) {
      PhraseConstraint phrase;
      phrase.surface = sp.surface;
      bool skipped = false;
      for (const auto& w : sp.words) {
        auto id = vocab.id_of(w);
        if (!id || *id == vocab.bos_id() || *id == vocab.eos_id()) {
          if (policy == OovPolicy::kReject)
            throw std::invalid_argument("curriculum: out-of-vocabulary word \"" + w +
                                        "\" in phrase \"" + sp.surface + "\" of group " +
                                        sg.name);
          result.skipped.push_back({sg.name, sp.surface, w});
          skipped = true;
          break;
        }
        phrase.token_ids.push_back(*id);
      }
      if (!skipped) group.phrases.push_back(std::move(phrase));
    }
    if (group.phrases.empty())
      throw std::invalid_argument("curriculum: group emptied by OOV skipping: " + sg.name);
    result.curriculum.groups.push_back(std::move(group));
  }
  return result;
}

CurriculumParse parse_curriculum_file(const std::string& path, const Vocabulary& vocab,
                                      OovPolicy policy) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("curriculum: cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_curriculum(buf.str(), vocab, policy);
}

ConstraintState::ConstraintState(const Curriculum& curriculum) {
  for (const auto& g : curriculum.groups) {
    order_.push_back(g.name);
    satisfied_.push_back(false);
  }
}

bool ConstraintState::is_remaining(std::string_view group) const {
  for (std::size_t i = 0; i < order_.size(); ++i)
    if (order_[i] == group) return !satisfied_[i];
  return false;
}

std::vector<std::string> ConstraintState::remaining_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < order_.size(); ++i)
    if (!satisfied_[i]) names.push_back(order_[i]);
  return names;
}

std::size_t ConstraintState::remaining_count() const {
  std::size_t n = 0;
  for (bool s : satisfied_)
    if (!s) ++n;
  return n;
}

int ConstraintState::max_event_turn() const {
  int max_turn = -1;
  for (const auto& e : events_) max_turn = std::max(max_turn, e.turn_index);
  return max_turn;
}

bool contains_phrase(std::span<const TokenId> tokens, std::span<const TokenId> phrase,
                     std::size_t* pos) {
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
    if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
      if (pos) *pos = i;
      return true;
    }
  }
  return false;
}

bool contains_word_phrase(const std::vector<std::string>& words,
                          const std::vector<std::string>& phrase_words) {
  if (phrase_words.empty() || phrase_words.size() > words.size()) return false;
  for (std::size_t i = 0; i + phrase_words.size() <= words.size(); ++i) {
    if (std::equal(phrase_words.begin(), phrase_words.end(), words.begin() + static_cast<std::ptrdiff_t>(i)))
      return true;
  }
  return false;
}

std::vector<SatisfactionEvent> scan_utterance(ConstraintState& state,
                                              const Curriculum& curriculum,
                                              std::span<const TokenId> tokens, Side side,
                                              int turn_index, const SideSet& sides_counted) {
  if (turn_index < state.max_event_turn())
    throw std::invalid_argument("scan_utterance: turn index regression: " +
                                std::to_string(turn_index));
  std::vector<SatisfactionEvent> new_events;
  if (!sides_counted.counts(side)) return new_events;

  for (std::size_t gi = 0; gi < curriculum.groups.size(); ++gi) {
    const auto& group = curriculum.groups[gi];
    if (gi >= state.order_.size() || state.order_[gi] != group.name)
      throw std::invalid_argument("scan_utterance: state does not match curriculum");
    if (state.satisfied_[gi]) continue;

    // Longest match wins; ties go to the earliest position, then the
    // lexicographically smaller surface.
    const PhraseConstraint* best = nullptr;
    std::size_t best_pos = 0;
    for (const auto& phrase : group.phrases) {
      std::size_t pos = 0;
      if (!contains_phrase(tokens, phrase.token_ids, &pos)) continue;
      if (!best || phrase.token_ids.size() > best->token_ids.size() ||
          (phrase.token_ids.size() == best->token_ids.size() &&
           (pos < best_pos || (pos == best_pos && phrase.surface < best->surface)))) {
        best = &phrase;
        best_pos = pos;
      }
    }
    if (best) {
      state.satisfied_[gi] = true;
      SatisfactionEvent event{group.name, best->surface, turn_index, side};
      state.events_.push_back(event);
      new_events.push_back(event);
    }
  }
  return new_events;
}

}  // namespace mgbs
