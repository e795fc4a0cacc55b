#include "mgbs/session.hpp"

#include <chrono>
#include <fstream>
#include <stdexcept>

namespace mgbs {

using nlohmann::json;

nlohmann::json beam_config_to_json(const BeamConfig& cfg) {
  return json{{"k", cfg.beam_size},         {"max_len", cfg.max_len},
              {"alpha", cfg.length_penalty}, {"t0", cfg.t0},
              {"a", cfg.a},                  {"score_mode", to_string(cfg.score_mode)}};
}

BeamConfig beam_config_from_json(const json& j) {
  BeamConfig cfg;
  if (!j.is_object()) throw std::invalid_argument("beam config: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    if (key == "k") cfg.beam_size = it.value().get<int>();
    else if (key == "max_len") cfg.max_len = it.value().get<int>();
    else if (key == "alpha") cfg.length_penalty = it.value().get<double>();
    else if (key == "t0") cfg.t0 = it.value().get<double>();
    else if (key == "a") cfg.a = it.value().get<double>();
    else if (key == "score_mode") cfg.score_mode = score_mode_from_string(it.value().get<std::string>());
    else throw std::invalid_argument("beam config: unknown key \"" + key + "\"");
  }
  cfg.validate();
  return cfg;
}

nlohmann::json curriculum_to_json(const Curriculum& curriculum) {
  json groups = json::array();
  for (const auto& g : curriculum.groups) {
    json phrases = json::array();
    for (const auto& p : g.phrases) phrases.push_back(p.surface);
    groups.push_back(json{{"name", g.name}, {"phrases", phrases}});
  }
  return json{{"groups", groups}};
}

nlohmann::json basic_config_snapshot(const Curriculum& curriculum, const BeamConfig& cfg,
                                     const SideSet& sides) {
  json sides_json = json::array();
  if (sides.system) sides_json.push_back("system");
  if (sides.user) sides_json.push_back("user");
  return json{{"beam", beam_config_to_json(cfg)},
              {"sides_counted", sides_json},
              {"curriculum", curriculum_to_json(curriculum)}};
}

json transcript_to_json(const SessionTranscript& t) {
  json turns = json::array();
  for (const auto& turn : t.turns) {
    json events = json::array();
    for (const auto& e : turn.events)
      events.push_back(json{{"group", e.group}, {"phrase", e.phrase}, {"side", to_string(e.side)}});
    turns.push_back(json{{"side", to_string(turn.side)},
                         {"turn_index", turn.turn_index},
                         {"text", turn.text},
                         {"tokens", turn.tokens},
                         {"events", events}});
  }
  return json{{"session_id", t.session_id},
              {"config", t.config},
              {"turns", turns},
              {"final_remaining", t.final_remaining},
              {"duration_ms", t.duration_ms}};
}

SessionTranscript transcript_from_json(const json& j) {
  static const char* kFields[] = {"session_id", "config", "turns", "final_remaining",
                                  "duration_ms"};
  for (const char* f : kFields)
    if (!j.contains(f))
      throw std::invalid_argument(std::string("transcript: missing field \"") + f + "\"");

  SessionTranscript t;
  t.session_id = j.at("session_id").get<std::string>();
  t.config = j.at("config");
  t.final_remaining = j.at("final_remaining").get<std::vector<std::string>>();
  t.duration_ms = j.at("duration_ms").get<std::uint64_t>();
  for (const auto& jt : j.at("turns")) {
    DialogTurn turn;
    turn.side = side_from_string(jt.at("side").get<std::string>());
    turn.turn_index = jt.at("turn_index").get<int>();
    turn.text = jt.at("text").get<std::string>();
    turn.tokens = jt.at("tokens").get<std::vector<TokenId>>();
    for (const auto& je : jt.at("events")) {
      SatisfactionEvent e;
      e.group = je.at("group").get<std::string>();
      e.phrase = je.at("phrase").get<std::string>();
      e.side = side_from_string(je.at("side").get<std::string>());
      e.turn_index = turn.turn_index;
      turn.events.push_back(std::move(e));
    }
    t.turns.push_back(std::move(turn));
  }
  return t;
}

std::string transcript_to_line(const SessionTranscript& t) { return transcript_to_json(t).dump(); }

void write_transcripts(const std::string& path, const std::vector<SessionTranscript>& ts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("transcript: cannot open for writing: " + path);
  for (const auto& t : ts) out << transcript_to_line(t) << '\n';
}

std::vector<SessionTranscript> read_transcripts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("transcript: cannot open: " + path);
  std::vector<SessionTranscript> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(transcript_from_json(json::parse(line)));
  }
  return out;
}

Session::Session(Curriculum curriculum, std::shared_ptr<const Scorer> scorer, BeamConfig cfg,
                 SideSet sides_counted, OovPolicy user_oov, std::string session_id)
    : curriculum_(std::move(curriculum)),
      scorer_(std::move(scorer)),
      cfg_(cfg),
      sides_counted_(sides_counted),
      user_oov_(user_oov),
      session_id_(std::move(session_id)),
      state_(curriculum_) {
  if (!scorer_) throw std::invalid_argument("session: null scorer");
  cfg_.validate();
  const auto& vocab = scorer_->vocab();
  for (const auto& g : curriculum_.groups) {
    for (const auto& p : g.phrases) {
      for (TokenId t : p.token_ids) {
        if (t < 0 || t >= vocab.size())
          throw std::invalid_argument("session: curriculum token id " + std::to_string(t) +
                                      " outside scorer vocabulary (group " + g.name + ")");
        if (t == vocab.bos_id() || t == vocab.eos_id())
          throw std::invalid_argument("session: curriculum phrase contains a reserved token");
      }
    }
  }
}

std::vector<ConstraintGroup> Session::remaining_groups() const {
  std::vector<ConstraintGroup> out;
  for (const auto& g : curriculum_.groups)
    if (state_.is_remaining(g.name)) out.push_back(g);
  return out;
}

std::vector<TokenId> Session::history_prefix() const {
  std::vector<TokenId> prefix;
  for (const auto& turn : history_) {
    prefix.insert(prefix.end(), turn.tokens.begin(), turn.tokens.end());
    prefix.push_back(scorer_->vocab().eos_id());
  }
  return prefix;
}

DialogTurn Session::append_turn(Side side, std::vector<TokenId> tokens, std::string text) {
  DialogTurn turn;
  turn.side = side;
  turn.tokens = std::move(tokens);
  turn.text = std::move(text);
  turn.turn_index = static_cast<int>(history_.size());
  turn.events = scan_utterance(state_, curriculum_, turn.tokens, side, turn.turn_index,
                               sides_counted_);
  history_.push_back(turn);
  return turn;
}

std::pair<DialogTurn, TurnResult> Session::system_turn() {
  const auto remaining = remaining_groups();
  const auto prefix = history_prefix();
  TurnResult result = decode_turn(prefix, remaining, *scorer_, cfg_, t_);
  std::string text = scorer_->vocab().detokenize(result.utterance);
  DialogTurn turn = append_turn(Side::kSystem, result.utterance, std::move(text));
  ++t_;
  return {std::move(turn), std::move(result)};
}

DialogTurn Session::user_turn(const std::string& text) {
  std::vector<TokenId> tokens;
  if (user_oov_ == OovPolicy::kReject) {
    tokens = scorer_->vocab().tokenize(text);
  } else {
    tokens = scorer_->vocab().tokenize_skip_oov(text, nullptr);
  }
  return append_turn(Side::kUser, std::move(tokens), normalize(text));
}

DialogTurn Session::user_turn_tokens(std::vector<TokenId> tokens, const std::string& text) {
  const auto& vocab = scorer_->vocab();
  for (TokenId t : tokens) {
    if (t < 0 || t >= vocab.size())
      throw std::invalid_argument("session: user token id out of range: " + std::to_string(t));
    if (t == vocab.bos_id() || t == vocab.eos_id())
      throw std::invalid_argument("session: user tokens contain a reserved token");
  }
  std::string resolved = text.empty() ? vocab.detokenize(tokens) : text;
  return append_turn(Side::kUser, std::move(tokens), std::move(resolved));
}

SessionTranscript run_dialog(Session& session, UserSimulator& user,
                             const RunDialogOptions& options) {
  if (options.max_system_turns < 1)
    throw std::invalid_argument("run_dialog: max_system_turns must be >= 1");

  const auto start = std::chrono::steady_clock::now();
  SessionTranscript transcript;
  transcript.session_id = session.session_id();
  transcript.config = options.config_snapshot.is_null()
                          ? basic_config_snapshot(session.curriculum(), session.config(),
                                                  session.sides_counted())
                          : options.config_snapshot;

  std::string error;
  try {
    for (int i = 0; i < options.max_system_turns; ++i) {
      session.system_turn();
      auto reply = user.next_reply(session);
      if (!reply) break;
      session.user_turn(*reply);
    }
  } catch (const std::exception& e) {
    error = e.what();
  }

  transcript.turns = session.history();
  transcript.final_remaining = session.remaining_group_names();
  if (options.record_wall_clock) {
    transcript.duration_ms = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                              start)
            .count());
  }
  if (!error.empty()) {
    transcript.config["error"] = error;
    throw DialogFailure(error, std::move(transcript));
  }
  return transcript;
}

}  // namespace mgbs
