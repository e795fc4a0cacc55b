#ifndef MGBS_DECODER_HPP_
#define MGBS_DECODER_HPP_

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgbs/curriculum.hpp"
#include "mgbs/scorer.hpp"

namespace mgbs {

// Logistic function 1 / (1 + e^-x), evaluated in the numerically stable
// branch for each sign.
double sigmoid(double x);

// Turn-dependent acceptance slack T = T0 * 2 * sigmoid(a * t). Equals T0
// exactly at t = 0 and stays below 2 * T0; strictly increasing in t for
// a > 0.
double dynamic_threshold(double t0, double a, int turn_index);

enum class ScoreMode { kRaw, kLengthNormalized };

std::string to_string(ScoreMode mode);
ScoreMode score_mode_from_string(std::string_view s);

struct BeamConfig {
  int beam_size = 10;
  int max_len = 20;            // generated tokens per turn, eos included
  double length_penalty = 1.0; // exponent alpha in logp / len^alpha
  double t0 = 10.0;            // initial threshold
  double a = 1.0;              // threshold growth scalar
  ScoreMode score_mode = ScoreMode::kRaw;

  void validate() const;  // throws std::invalid_argument
};

enum class Bank { kUnsatisfied, kSatisfied };

std::string to_string(Bank bank);

// Mid-phrase marker: the hypothesis has emitted next_position tokens of
// remaining[group_index].phrases[phrase_index] and its only continuation is
// the phrase's next token.
struct InProgressPhrase {
  int group_index = 0;
  int phrase_index = 0;
  std::size_t next_position = 0;
};

// Provenance of the one force-inserted phrase; begin indexes into tokens.
struct ForcedPhrase {
  int group_index = 0;
  int phrase_index = 0;
  std::size_t begin = 0;
};

struct Hypothesis {
  std::vector<TokenId> tokens;  // starts with bos
  double logp = 0.0;            // sum of per-token scores, bos excluded
  Bank bank = Bank::kUnsatisfied;
  std::optional<InProgressPhrase> in_progress;
  std::optional<ForcedPhrase> forced;  // set when the forced phrase completes
  bool finished = false;

  std::size_t generated_len() const { return tokens.size() - 1; }
  // Position of the (possibly still in-progress) forced phrase; hypotheses
  // without one sort last on this key.
  std::size_t constraint_begin() const;
};

// Finished-candidate ranking score. kRaw: accumulated logp. kLengthNormalized:
// logp / len^alpha with len counting generated tokens including eos. Rejects
// unfinished hypotheses.
double final_score(const Hypothesis& h, const BeamConfig& cfg);

// Total orders making every decode reproducible. Live pools sort by logp,
// then shorter sequence, then earlier constraint position, then smaller
// token sequence. Finished candidates rank by final_score first.
bool live_order(const Hypothesis& a, const Hypothesis& b);
bool finished_order(const Hypothesis& a, const Hypothesis& b, const BeamConfig& cfg);

// The two-bank beam box plus the in-progress pool feeding the satisfied
// bank. Finished candidates are folded into per-bank bests as they occur.
struct BeamBanks {
  std::vector<Hypothesis> unsatisfied;
  std::vector<Hypothesis> in_progress;
  std::vector<Hypothesis> satisfied;
  std::optional<Hypothesis> best_finished_unsatisfied;
  std::optional<Hypothesis> best_finished_satisfied;

  bool live() const {
    return !unsatisfied.empty() || !in_progress.empty() || !satisfied.empty();
  }

  static BeamBanks initial(TokenId bos_id);
};

// One decoding step over all three pools:
//   unsatisfied: top-k generate continuations, excluding any token that
//     would complete a remaining phrase, plus one start per remaining
//     phrase (the constraint append);
//   in_progress: the forced next phrase token only;
//   satisfied: ordinary top-k continuation, never another constraint append.
// Each pool is then pruned to beam_size under live_order; hypotheses with
// identical token sequences are deduplicated (the earlier constraint
// position survives). Hypotheses reaching eos or max_len fold into the
// per-bank finished bests.
void gbs_step(BeamBanks& banks, std::span<const TokenId> history, const Scorer& scorer,
              std::span<const ConstraintGroup> remaining, const BeamConfig& cfg);

struct TurnCandidates {
  std::optional<Hypothesis> best_unsatisfied;
  std::optional<Hypothesis> best_satisfied;
};

// Runs gbs_step to completion from the single bos hypothesis.
TurnCandidates search_turn(std::span<const TokenId> history, const Scorer& scorer,
                           std::span<const ConstraintGroup> remaining, const BeamConfig& cfg);

struct TurnResult {
  std::vector<TokenId> utterance;  // bos/eos stripped
  std::optional<std::string> satisfied_group;
  std::optional<std::string> satisfied_phrase;
  Bank chosen_bank = Bank::kUnsatisfied;
  std::optional<double> best_satisfied_score;
  std::optional<double> best_unsatisfied_score;
  double threshold_used = 0.0;
};

// Acceptance rule: with both candidates present the satisfied one is chosen
// iff final_score(sat) > final_score(unsat) - threshold; with one present it
// is chosen unconditionally. Both scores and the threshold are recorded.
// eos_id is needed to strip the terminator from the chosen utterance.
TurnResult select_final(const std::optional<Hypothesis>& best_satisfied,
                        const std::optional<Hypothesis>& best_unsatisfied, double threshold,
                        const BeamConfig& cfg, std::span<const ConstraintGroup> remaining,
                        TokenId eos_id);

// One dialog turn: search, then select with T = dynamic_threshold(t0, a,
// turn_index). Deterministic given its inputs.
TurnResult decode_turn(std::span<const TokenId> history,
                       std::span<const ConstraintGroup> remaining, const Scorer& scorer,
                       const BeamConfig& cfg, int turn_index);

// Parity baseline: plain beam search with the same finishing rules and
// final_score, implemented independently of the bank machinery.
Hypothesis vanilla_beam_search(std::span<const TokenId> history, const Scorer& scorer,
                               const BeamConfig& cfg);

}  // namespace mgbs

#endif  // MGBS_DECODER_HPP_
