#ifndef MGBS_SIMULATION_HPP_
#define MGBS_SIMULATION_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgbs/curriculum.hpp"
#include "mgbs/scorer.hpp"
#include "mgbs/session.hpp"

namespace mgbs {

enum class PolicyKind { kScripted, kEcho, kConstraintCurious };

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(std::string_view s);

// Configuration for the simulated user. kScripted replays its script and
// ends when it runs out; kEcho repeats the last system utterance; a
// kConstraintCurious user repeats a constraint word the system just used
// with probability p_adopt and falls back to its script otherwise.
struct UserPolicy {
  PolicyKind kind = PolicyKind::kEcho;
  std::vector<std::string> script;
  double p_adopt = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static UserPolicy from_json(const nlohmann::json& j);
};

std::unique_ptr<UserSimulator> make_user_simulator(const UserPolicy& policy,
                                                   const Curriculum& curriculum,
                                                   std::uint64_t session_seed);

// Fraction of sessions, per side, in which that side uttered any phrase of
// each group (and of any group at all). Counting ignores satisfaction
// state: a phrase mentioned after its group was satisfied still counts.
struct UsageReport {
  std::vector<std::string> group_names;  // curriculum order
  int sessions = 0;
  int errors = 0;
  // counts[side][g] over group_names, plus the trailing ANY cell.
  std::vector<int> system_counts;
  std::vector<int> user_counts;

  double fraction(Side side, std::size_t group_index) const;
  double any_fraction(Side side) const;

  std::string to_csv() const;  // header: side,group,fraction,sessions
  nlohmann::json to_json() const;
};

inline constexpr const char* kAnyGroupLabel = "ANY";

// Counts usage over transcripts sharing one curriculum (mismatch with the
// embedded curriculum of any transcript is an error, as is an empty list).
UsageReport compute_usage(const std::vector<SessionTranscript>& transcripts,
                          const std::vector<SurfaceGroup>& curriculum);
UsageReport compute_usage(const std::vector<SessionTranscript>& transcripts,
                          const Curriculum& curriculum);

// Scorer descriptors for config files:
//   {"kind": "table", "words": [...], "probs": {surface: p, ...},
//    "overrides": [{"prefix": [surface...], "probs": {...}}, ...]}
//   {"kind": "ngram", "corpus_path": "...", "n": 2, "k": 1.0}
//   {"kind": "subprocess", "argv": ["...", ...]}
std::shared_ptr<Scorer> make_scorer(const nlohmann::json& descriptor);

struct SimulationConfig {
  nlohmann::json scorer;
  std::string curriculum_path;
  BeamConfig beam;
  UserPolicy policy;
  int sessions = 1;
  std::uint64_t seed = 0;
  SideSet sides_counted;
  int max_system_turns = 6;
  int threads = 1;
  bool record_wall_clock = false;

  static SimulationConfig from_json(const nlohmann::json& j);
  static SimulationConfig from_file(const std::string& path);
};

struct SimulationResult {
  std::vector<SessionTranscript> transcripts;  // session order, failed ones included
  UsageReport report;                          // counted over successful sessions
};

// Runs config.sessions independent sessions, deterministically given the
// seed regardless of thread count. A session that throws is recorded as an
// error (partial transcript kept, marked in its config) and excluded from
// the usage fractions; other sessions proceed.
SimulationResult run_simulation(const SimulationConfig& config);

// Transcript-level consistency check: re-scans every turn's tokens and
// verifies the recorded events match, conservation |remaining| + |events| =
// |groups| holds after every turn, no group is satisfied twice, and
// final_remaining agrees. Throws std::runtime_error naming the first
// violation.
void replay_validate(const SessionTranscript& transcript, const Curriculum& curriculum,
                     const SideSet& sides_counted);

}  // namespace mgbs

#endif  // MGBS_SIMULATION_HPP_
