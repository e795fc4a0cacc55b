#ifndef MGBS_SESSION_HPP_
#define MGBS_SESSION_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mgbs/curriculum.hpp"
#include "mgbs/decoder.hpp"
#include "mgbs/scorer.hpp"

namespace mgbs {

struct DialogTurn {
  Side side = Side::kSystem;
  std::vector<TokenId> tokens;
  std::string text;
  int turn_index = 0;  // position in the dialog, both sides counted
  std::vector<SatisfactionEvent> events;
};

// The unit of metrics computation; serializes to one JSON object per line
// and reloads losslessly.
struct SessionTranscript {
  std::string session_id;
  nlohmann::json config;
  std::vector<DialogTurn> turns;
  std::vector<std::string> final_remaining;  // curriculum order
  std::uint64_t duration_ms = 0;
};

nlohmann::json transcript_to_json(const SessionTranscript& t);
SessionTranscript transcript_from_json(const nlohmann::json& j);
std::string transcript_to_line(const SessionTranscript& t);

void write_transcripts(const std::string& path, const std::vector<SessionTranscript>& ts);
std::vector<SessionTranscript> read_transcripts(const std::string& path);

// Multi-turn orchestration: alternating turns, the per-system-turn counter
// feeding the dynamic threshold, and the end-of-turn constraint-list update.
// One Session is single-threaded; the curriculum and scorer it references
// are shared read-only.
class Session {
 public:
  Session(Curriculum curriculum, std::shared_ptr<const Scorer> scorer, BeamConfig cfg,
          SideSet sides_counted = {}, OovPolicy user_oov = OovPolicy::kReject,
          std::string session_id = "session-0");

  // Decodes one system turn against the remaining groups, appends it,
  // scans it for satisfaction events, and advances the turn counter.
  std::pair<DialogTurn, TurnResult> system_turn();

  // Appends a user turn and scans it. Tokenization of unknown words throws
  // under kReject and drops them under kSkip; pre-tokenized ids skip
  // tokenization entirely.
  DialogTurn user_turn(const std::string& text);
  DialogTurn user_turn_tokens(std::vector<TokenId> tokens, const std::string& text = "");

  const std::vector<DialogTurn>& history() const { return history_; }
  const ConstraintState& constraint_state() const { return state_; }
  const Curriculum& curriculum() const { return curriculum_; }
  const BeamConfig& config() const { return cfg_; }
  const SideSet& sides_counted() const { return sides_counted_; }
  const std::string& session_id() const { return session_id_; }
  int system_turns_taken() const { return t_; }

  std::vector<std::string> remaining_group_names() const { return state_.remaining_names(); }
  // The groups the next decode will force, in curriculum order.
  std::vector<ConstraintGroup> remaining_groups() const;

  // Prior turns joined with eos separators; the current turn's bos comes
  // from the decoder's initial hypothesis.
  std::vector<TokenId> history_prefix() const;

 private:
  DialogTurn append_turn(Side side, std::vector<TokenId> tokens, std::string text);

  Curriculum curriculum_;
  std::shared_ptr<const Scorer> scorer_;
  BeamConfig cfg_;
  SideSet sides_counted_;
  OovPolicy user_oov_;
  std::string session_id_;
  ConstraintState state_;
  std::vector<DialogTurn> history_;
  int t_ = 0;  // system turns taken
};

// Scripted or seeded stand-in for the human side of the dialog. Returning
// nullopt ends the dialog.
class UserSimulator {
 public:
  virtual ~UserSimulator() = default;
  virtual std::optional<std::string> next_reply(const Session& session) = 0;
};

struct RunDialogOptions {
  int max_system_turns = 6;
  bool record_wall_clock = false;  // off: duration_ms stays 0 so replays are byte-identical
  nlohmann::json config_snapshot;  // embedded as the transcript's config
};

// Thrown when a component fails mid-dialog; carries the partial transcript,
// marked with an "error" key in its config.
class DialogFailure : public std::runtime_error {
 public:
  DialogFailure(const std::string& what, SessionTranscript partial)
      : std::runtime_error(what), partial_transcript(std::move(partial)) {}
  SessionTranscript partial_transcript;
};

// Alternates system turns and simulator replies until max_system_turns or
// the simulator signals the end.
SessionTranscript run_dialog(Session& session, UserSimulator& user,
                             const RunDialogOptions& options);

// Minimal config snapshot for transcripts produced outside the simulation
// harness: beam, sides counted, and the curriculum itself.
nlohmann::json basic_config_snapshot(const Curriculum& curriculum, const BeamConfig& cfg,
                                     const SideSet& sides);

nlohmann::json beam_config_to_json(const BeamConfig& cfg);
BeamConfig beam_config_from_json(const nlohmann::json& j);
nlohmann::json curriculum_to_json(const Curriculum& curriculum);

}  // namespace mgbs

#endif  // MGBS_SESSION_HPP_
