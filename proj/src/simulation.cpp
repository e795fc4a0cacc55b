#include "mgbs/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mgbs/subprocess_scorer.hpp"

namespace mgbs {

using nlohmann::json;

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kScripted: return "scripted";
    case PolicyKind::kEcho: return "echo";
    case PolicyKind::kConstraintCurious: return "constraint_curious";
  }
  return "scripted";
}

PolicyKind policy_kind_from_string(std::string_view s) {
  if (s == "scripted") return PolicyKind::kScripted;
  if (s == "echo") return PolicyKind::kEcho;
  if (s == "constraint_curious") return PolicyKind::kConstraintCurious;
  throw std::invalid_argument("unknown policy kind: " + std::string(s));
}

void UserPolicy::validate() const {
  if (kind == PolicyKind::kScripted && script.empty())
    throw std::invalid_argument("user policy: scripted policy requires a non-empty script");
  if (p_adopt < 0.0 || p_adopt > 1.0)
    throw std::invalid_argument("user policy: p_adopt must be in [0, 1]");
}

json UserPolicy::to_json() const {
  json j{{"kind", to_string(kind)}};
  if (!script.empty()) j["script"] = script;
  if (kind == PolicyKind::kConstraintCurious) j["p_adopt"] = p_adopt;
  if (seed != 0) j["seed"] = seed;
  return j;
}

UserPolicy UserPolicy::from_json(const json& j) {
  UserPolicy p;
  if (!j.is_object()) throw std::invalid_argument("user policy: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    if (key == "kind") p.kind = policy_kind_from_string(it.value().get<std::string>());
    else if (key == "script") p.script = it.value().get<std::vector<std::string>>();
    else if (key == "p_adopt") p.p_adopt = it.value().get<double>();
    else if (key == "seed") p.seed = it.value().get<std::uint64_t>();
    else throw std::invalid_argument("user policy: unknown key \"" + key + "\"");
  }
  p.validate();
  return p;
}

namespace {

class ScriptedSimulator : public UserSimulator {
 public:
  explicit ScriptedSimulator(std::vector<std::string> script) : script_(std::move(script)) {}
  std::optional<std::string> next_reply(const Session&) override {
    if (next_ >= script_.size()) return std::nullopt;
    return script_[next_++];
  }

 private:
  std::vector<std::string> script_;
  std::size_t next_ = 0;
};

class EchoSimulator : public UserSimulator {
 public:
  std::optional<std::string> next_reply(const Session& session) override {
    for (auto it = session.history().rbegin(); it != session.history().rend(); ++it)
      if (it->side == Side::kSystem) return it->text;
    return std::string();
  }
};

class CuriousSimulator : public UserSimulator {
 public:
  CuriousSimulator(const Curriculum& curriculum, double p_adopt,
                   std::vector<std::string> script, std::uint64_t seed)
      : curriculum_(curriculum), p_adopt_(p_adopt), script_(std::move(script)), rng_(seed) {}

  std::optional<std::string> next_reply(const Session& session) override {
    const double u = draw();
    if (u < p_adopt_) {
      if (auto phrase = system_constraint_word(session)) return phrase;
    }
    if (next_ >= script_.size()) return std::nullopt;
    return script_[next_++];
  }

 private:
  // One draw per user turn keeps adoption events aligned across p_adopt
  // values under a fixed seed.
  double draw() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  std::optional<std::string> system_constraint_word(const Session& session) const {
    const DialogTurn* last_system = nullptr;
    for (auto it = session.history().rbegin(); it != session.history().rend(); ++it) {
      if (it->side == Side::kSystem) {
        last_system = &*it;
        break;
      }
    }
    if (!last_system) return std::nullopt;
    const auto words = normalize_words(last_system->text);
    for (const auto& group : curriculum_.groups)
      for (const auto& phrase : group.phrases)
        if (contains_word_phrase(words, normalize_words(phrase.surface))) return phrase.surface;
    return std::nullopt;
  }

  const Curriculum& curriculum_;
  double p_adopt_;
  std::vector<std::string> script_;
  std::size_t next_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace

std::unique_ptr<UserSimulator> make_user_simulator(const UserPolicy& policy,
                                                   const Curriculum& curriculum,
                                                   std::uint64_t session_seed) {
  policy.validate();
  switch (policy.kind) {
    case PolicyKind::kScripted:
      return std::make_unique<ScriptedSimulator>(policy.script);
    case PolicyKind::kEcho:
      return std::make_unique<EchoSimulator>();
    case PolicyKind::kConstraintCurious:
      return std::make_unique<CuriousSimulator>(curriculum, policy.p_adopt, policy.script,
                                                session_seed);
  }
  throw std::invalid_argument("user policy: unknown kind");
}

double UsageReport::fraction(Side side, std::size_t group_index) const {
  if (sessions == 0) return 0.0;
  const auto& counts = side == Side::kSystem ? system_counts : user_counts;
  return static_cast<double>(counts.at(group_index)) / static_cast<double>(sessions);
}

double UsageReport::any_fraction(Side side) const { return fraction(side, group_names.size()); }

namespace {

std::string format_fraction(double f) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), f);
  if (ec != std::errc()) return "0";
  return std::string(buf, ptr);
}

}  // namespace

std::string UsageReport::to_csv() const {
  std::ostringstream out;
  out << "side,group,fraction,sessions\n";
  for (Side side : {Side::kSystem, Side::kUser}) {
    for (std::size_t g = 0; g < group_names.size(); ++g)
      out << to_string(side) << ',' << group_names[g] << ',' << format_fraction(fraction(side, g))
          << ',' << sessions << '\n';
    out << to_string(side) << ',' << kAnyGroupLabel << ','
        << format_fraction(any_fraction(side)) << ',' << sessions << '\n';
  }
  return out.str();
}

json UsageReport::to_json() const {
  json rows = json::array();
  for (Side side : {Side::kSystem, Side::kUser}) {
    for (std::size_t g = 0; g < group_names.size(); ++g)
      rows.push_back(json{{"side", to_string(side)},
                          {"group", group_names[g]},
                          {"fraction", fraction(side, g)}});
    rows.push_back(json{{"side", to_string(side)},
                        {"group", kAnyGroupLabel},
                        {"fraction", any_fraction(side)}});
  }
  return json{{"sessions", sessions}, {"errors", errors}, {"rows", rows}};
}

namespace {

json surface_groups_to_json(const std::vector<SurfaceGroup>& groups) {
  json out = json::array();
  for (const auto& g : groups) {
    json phrases = json::array();
    for (const auto& p : g.phrases) phrases.push_back(p.surface);
    out.push_back(json{{"name", g.name}, {"phrases", phrases}});
  }
  return json{{"groups", out}};
}

}  // namespace

UsageReport compute_usage(const std::vector<SessionTranscript>& transcripts,
                          const std::vector<SurfaceGroup>& curriculum) {
  if (transcripts.empty())
    throw std::invalid_argument("compute_usage: empty transcript list");

  const json expected_curriculum = surface_groups_to_json(curriculum);
  for (const auto& t : transcripts) {
    if (t.config.contains("curriculum") && t.config["curriculum"] != expected_curriculum)
      throw std::invalid_argument("compute_usage: curriculum mismatch in session " +
                                  t.session_id);
  }

  UsageReport report;
  for (const auto& g : curriculum) report.group_names.push_back(g.name);
  report.sessions = static_cast<int>(transcripts.size());
  report.system_counts.assign(curriculum.size() + 1, 0);
  report.user_counts.assign(curriculum.size() + 1, 0);

  for (const auto& t : transcripts) {
    std::vector<bool> sys_used(curriculum.size(), false);
    std::vector<bool> usr_used(curriculum.size(), false);
    for (const auto& turn : t.turns) {
      const auto words = normalize_words(turn.text);
      auto& used = turn.side == Side::kSystem ? sys_used : usr_used;
      for (std::size_t g = 0; g < curriculum.size(); ++g) {
        if (used[g]) continue;
        for (const auto& phrase : curriculum[g].phrases) {
          if (contains_word_phrase(words, phrase.words)) {
            used[g] = true;
            break;
          }
        }
      }
    }
    bool sys_any = false;
    bool usr_any = false;
    for (std::size_t g = 0; g < curriculum.size(); ++g) {
      if (sys_used[g]) ++report.system_counts[g], sys_any = true;
      if (usr_used[g]) ++report.user_counts[g], usr_any = true;
    }
    if (sys_any) ++report.system_counts[curriculum.size()];
    if (usr_any) ++report.user_counts[curriculum.size()];
  }
  return report;
}

UsageReport compute_usage(const std::vector<SessionTranscript>& transcripts,
                          const Curriculum& curriculum) {
  return compute_usage(transcripts, to_surface_groups(curriculum));
}

std::shared_ptr<Scorer> make_scorer(const json& descriptor) {
  if (!descriptor.is_object() || !descriptor.contains("kind"))
    throw std::invalid_argument("scorer config: missing \"kind\"");
  const std::string kind = descriptor["kind"].get<std::string>();

  auto probs_from_json = [](const json& j) {
    std::map<std::string, double> probs;
    for (auto it = j.begin(); it != j.end(); ++it) probs[it.key()] = it.value().get<double>();
    return probs;
  };

  if (kind == "table") {
    for (auto it = descriptor.begin(); it != descriptor.end(); ++it) {
      const auto& key = it.key();
      if (key != "kind" && key != "words" && key != "probs" && key != "overrides")
        throw std::invalid_argument("scorer config: unknown key \"" + key + "\"");
    }
    if (!descriptor.contains("words") || !descriptor.contains("probs"))
      throw std::invalid_argument("scorer config: table scorer needs \"words\" and \"probs\"");
    Vocabulary vocab = Vocabulary::from_words(descriptor["words"].get<std::vector<std::string>>());
    auto scorer = std::make_shared<TableScorer>(
        vocab, TableScorer::logprobs_from_probs(vocab, probs_from_json(descriptor["probs"])));
    if (descriptor.contains("overrides")) {
      for (const auto& o : descriptor["overrides"]) {
        std::vector<TokenId> prefix;
        for (const auto& s : o.at("prefix")) {
          auto id = vocab.id_of(normalize(s.get<std::string>()));
          if (!id) throw std::invalid_argument("scorer config: unknown override prefix word");
          prefix.push_back(*id);
        }
        scorer->set_override(std::move(prefix),
                             TableScorer::logprobs_from_probs(vocab, probs_from_json(o.at("probs"))));
      }
    }
    return scorer;
  }

  if (kind == "ngram") {
    for (auto it = descriptor.begin(); it != descriptor.end(); ++it) {
      const auto& key = it.key();
      if (key != "kind" && key != "corpus_path" && key != "n" && key != "k")
        throw std::invalid_argument("scorer config: unknown key \"" + key + "\"");
    }
    if (!descriptor.contains("corpus_path"))
      throw std::invalid_argument("scorer config: ngram scorer needs \"corpus_path\"");
    std::ifstream in(descriptor["corpus_path"].get<std::string>());
    if (!in)
      throw std::runtime_error("scorer config: cannot open corpus: " +
                               descriptor["corpus_path"].get<std::string>());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
      if (!normalize(line).empty()) lines.push_back(line);
    const int n = descriptor.value("n", 2);
    const double k = descriptor.value("k", 1.0);
    return std::make_shared<NgramScorer>(train_ngram_from_text(lines, n, k));
  }

  if (kind == "subprocess") {
    for (auto it = descriptor.begin(); it != descriptor.end(); ++it) {
      const auto& key = it.key();
      if (key != "kind" && key != "argv" && key != "words" && key != "vocab_path")
        throw std::invalid_argument("scorer config: unknown key \"" + key + "\"");
    }
    if (!descriptor.contains("argv"))
      throw std::invalid_argument("scorer config: subprocess scorer needs \"argv\"");
    std::vector<std::string> words;
    if (descriptor.contains("words")) {
      words = descriptor["words"].get<std::vector<std::string>>();
    } else if (descriptor.contains("vocab_path")) {
      std::ifstream in(descriptor["vocab_path"].get<std::string>());
      if (!in)
        throw std::runtime_error("scorer config: cannot open vocab: " +
                                 descriptor["vocab_path"].get<std::string>());
      std::string w;
      while (std::getline(in, w))
        if (!normalize(w).empty()) words.push_back(normalize(w));
    } else {
      throw std::invalid_argument(
          "scorer config: subprocess scorer needs \"words\" or \"vocab_path\"");
    }
    return std::make_shared<SubprocessScorer>(descriptor["argv"].get<std::vector<std::string>>(),
                                              Vocabulary::from_words(words));
  }

  throw std::invalid_argument("scorer config: unknown kind \"" + kind + "\"");
}

SimulationConfig SimulationConfig::from_json(const json& j) {
  SimulationConfig cfg;
  if (!j.is_object()) throw std::invalid_argument("simulation config: expected an object");
  bool have_scorer = false, have_curriculum = false;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    if (key == "scorer") {
      cfg.scorer = it.value();
      have_scorer = true;
    } else if (key == "curriculum_path") {
      cfg.curriculum_path = it.value().get<std::string>();
      have_curriculum = true;
    } else if (key == "beam") {
      cfg.beam = beam_config_from_json(it.value());
    } else if (key == "policy") {
      cfg.policy = UserPolicy::from_json(it.value());
    } else if (key == "sessions") {
      cfg.sessions = it.value().get<int>();
    } else if (key == "seed") {
      cfg.seed = it.value().get<std::uint64_t>();
    } else if (key == "sides_counted") {
      cfg.sides_counted = {false, false};
      for (const auto& s : it.value()) {
        Side side = side_from_string(s.get<std::string>());
        if (side == Side::kSystem) cfg.sides_counted.system = true;
        else cfg.sides_counted.user = true;
      }
    } else if (key == "max_system_turns") {
      cfg.max_system_turns = it.value().get<int>();
    } else if (key == "threads") {
      cfg.threads = it.value().get<int>();
    } else if (key == "record_wall_clock") {
      cfg.record_wall_clock = it.value().get<bool>();
    } else {
      throw std::invalid_argument("simulation config: unknown key \"" + key + "\"");
    }
  }
  if (!have_scorer) throw std::invalid_argument("simulation config: missing \"scorer\"");
  if (!have_curriculum)
    throw std::invalid_argument("simulation config: missing \"curriculum_path\"");
  if (cfg.sessions < 1) throw std::invalid_argument("simulation config: sessions must be >= 1");
  if (cfg.max_system_turns < 1)
    throw std::invalid_argument("simulation config: max_system_turns must be >= 1");
  if (cfg.threads < 1) throw std::invalid_argument("simulation config: threads must be >= 1");
  return cfg;
}

SimulationConfig SimulationConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("simulation config: cannot open: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("simulation config: malformed JSON: ") + e.what());
  }
  return from_json(j);
}

SimulationResult run_simulation(const SimulationConfig& config) {
  config.beam.validate();
  config.policy.validate();

  std::shared_ptr<Scorer> scorer = make_scorer(config.scorer);
  Curriculum curriculum =
      parse_curriculum_file(config.curriculum_path, scorer->vocab(), OovPolicy::kReject)
          .curriculum;

  json sides_json = json::array();
  if (config.sides_counted.system) sides_json.push_back("system");
  if (config.sides_counted.user) sides_json.push_back("user");
  const json snapshot{{"beam", beam_config_to_json(config.beam)},
                      {"sides_counted", sides_json},
                      {"curriculum", curriculum_to_json(curriculum)},
                      {"scorer", config.scorer},
                      {"policy", config.policy.to_json()},
                      {"seed", config.seed},
                      {"max_system_turns", config.max_system_turns}};

  const int n = config.sessions;
  std::vector<SessionTranscript> transcripts(static_cast<std::size_t>(n));
  std::vector<char> failed(static_cast<std::size_t>(n), 0);

  auto run_one = [&](int i) {
    const std::uint64_t session_seed =
        (config.seed ^ config.policy.seed) + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i + 1);
    const std::string session_id = "session-" + std::to_string(i);
    try {
      Session session(curriculum, scorer, config.beam, config.sides_counted, OovPolicy::kReject,
                      session_id);
      auto simulator = make_user_simulator(config.policy, curriculum, session_seed);
      RunDialogOptions options;
      options.max_system_turns = config.max_system_turns;
      options.record_wall_clock = config.record_wall_clock;
      options.config_snapshot = snapshot;
      transcripts[static_cast<std::size_t>(i)] = run_dialog(session, *simulator, options);
    } catch (const DialogFailure& f) {
      transcripts[static_cast<std::size_t>(i)] = f.partial_transcript;
      failed[static_cast<std::size_t>(i)] = 1;
    } catch (const std::exception& e) {
      SessionTranscript t;
      t.session_id = session_id;
      t.config = snapshot;
      t.config["error"] = e.what();
      for (const auto& g : curriculum.groups) t.final_remaining.push_back(g.name);
      transcripts[static_cast<std::size_t>(i)] = std::move(t);
      failed[static_cast<std::size_t>(i)] = 1;
    }
  };

  if (config.threads <= 1) {
    for (int i = 0; i < n; ++i) run_one(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    const int n_workers = std::min(config.threads, n);
    workers.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
      workers.emplace_back([&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run_one(i);
      });
    }
    for (auto& t : workers) t.join();
  }

  std::vector<SessionTranscript> ok;
  int errors = 0;
  for (int i = 0; i < n; ++i) {
    if (failed[static_cast<std::size_t>(i)]) ++errors;
    else ok.push_back(transcripts[static_cast<std::size_t>(i)]);
  }

  SimulationResult result;
  result.transcripts = std::move(transcripts);
  if (!ok.empty()) {
    result.report = compute_usage(ok, curriculum);
  } else {
    for (const auto& g : curriculum.groups) result.report.group_names.push_back(g.name);
    result.report.system_counts.assign(curriculum.groups.size() + 1, 0);
    result.report.user_counts.assign(curriculum.groups.size() + 1, 0);
  }
  result.report.errors = errors;
  return result;
}

void replay_validate(const SessionTranscript& transcript, const Curriculum& curriculum,
                     const SideSet& sides_counted) {
  ConstraintState state(curriculum);
  const std::size_t n_groups = curriculum.groups.size();

  auto fail = [&](const std::string& what) {
    throw std::runtime_error("replay_validate: session " + transcript.session_id + ": " + what);
  };

  int position = 0;
  for (const auto& turn : transcript.turns) {
    if (turn.turn_index != position)
      fail("turn_index " + std::to_string(turn.turn_index) + " at position " +
           std::to_string(position));

    auto events = scan_utterance(state, curriculum, turn.tokens, turn.side, turn.turn_index,
                                 sides_counted);
    if (events.size() != turn.events.size())
      fail("turn " + std::to_string(position) + " replays " + std::to_string(events.size()) +
           " events, transcript records " + std::to_string(turn.events.size()));
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (events[i].group != turn.events[i].group || events[i].phrase != turn.events[i].phrase ||
          events[i].side != turn.events[i].side)
        fail("turn " + std::to_string(position) + " event " + std::to_string(i) +
             " mismatch: replay got " + events[i].group + "/" + events[i].phrase);
    }
    if (state.remaining_count() + state.events().size() != n_groups)
      fail("conservation violated after turn " + std::to_string(position));
    ++position;
  }

  if (state.remaining_names() != transcript.final_remaining)
    fail("final_remaining mismatch");
}

}  // namespace mgbs
