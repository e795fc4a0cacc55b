#include "mgbs/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mgbs {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double dynamic_threshold(double t0, double a, int turn_index) {
  if (turn_index < 0)
    throw std::invalid_argument("dynamic_threshold: negative turn index");
  return t0 * 2.0 * sigmoid(a * static_cast<double>(turn_index));
}

std::string to_string(ScoreMode mode) {
  return mode == ScoreMode::kRaw ? "raw" : "length_normalized";
}

ScoreMode score_mode_from_string(std::string_view s) {
  if (s == "raw") return ScoreMode::kRaw;
  if (s == "length_normalized") return ScoreMode::kLengthNormalized;
  throw std::invalid_argument("unknown score mode: " + std::string(s));
}

std::string to_string(Bank bank) {
  return bank == Bank::kUnsatisfied ? "unsatisfied" : "satisfied";
}

void BeamConfig::validate() const {
  if (beam_size < 1) throw std::invalid_argument("beam config: beam_size must be >= 1");
  if (max_len < 2) throw std::invalid_argument("beam config: max_len must be >= 2");
  if (length_penalty < 0.0)
    throw std::invalid_argument("beam config: length_penalty must be >= 0");
}

std::size_t Hypothesis::constraint_begin() const {
  if (forced) return forced->begin;
  if (in_progress) return tokens.size() - 1 - in_progress->next_position;
  return std::numeric_limits<std::size_t>::max();
}

double final_score(const Hypothesis& h, const BeamConfig& cfg) {
  if (!h.finished) throw std::invalid_argument("final_score: hypothesis is not finished");
  if (cfg.score_mode == ScoreMode::kRaw) return h.logp;
  const double len = static_cast<double>(h.generated_len());
  return h.logp / std::pow(len, cfg.length_penalty);
}

namespace {

// Shared tail of both orders: shorter sequence, earlier constraint
// position, smaller token sequence, then phrase identity.
bool tie_break_tail(const Hypothesis& a, const Hypothesis& b) {
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  if (a.constraint_begin() != b.constraint_begin())
    return a.constraint_begin() < b.constraint_begin();
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  auto tag = [](const Hypothesis& h) {
    if (h.forced) return std::pair<int, int>(h.forced->group_index, h.forced->phrase_index);
    if (h.in_progress)
      return std::pair<int, int>(h.in_progress->group_index, h.in_progress->phrase_index);
    return std::pair<int, int>(-1, -1);
  };
  return tag(a) < tag(b);
}

}  // namespace

bool live_order(const Hypothesis& a, const Hypothesis& b) {
  if (a.logp != b.logp) return a.logp > b.logp;
  return tie_break_tail(a, b);
}

bool finished_order(const Hypothesis& a, const Hypothesis& b, const BeamConfig& cfg) {
  const double sa = final_score(a, cfg);
  const double sb = final_score(b, cfg);
  if (sa != sb) return sa > sb;
  if (a.logp != b.logp) return a.logp > b.logp;
  return tie_break_tail(a, b);
}

BeamBanks BeamBanks::initial(TokenId bos_id) {
  BeamBanks banks;
  Hypothesis root;
  root.tokens = {bos_id};
  banks.unsatisfied.push_back(std::move(root));
  return banks;
}

namespace {

struct StepContext {
  std::span<const TokenId> history;
  const Scorer& scorer;
  std::span<const ConstraintGroup> remaining;
  const BeamConfig& cfg;
  TokenId bos_id;
  TokenId eos_id;
};

std::vector<double> score_continuations(const StepContext& ctx, const Hypothesis& h) {
  std::vector<TokenId> prefix;
  prefix.reserve(ctx.history.size() + h.tokens.size());
  prefix.insert(prefix.end(), ctx.history.begin(), ctx.history.end());
  prefix.insert(prefix.end(), h.tokens.begin(), h.tokens.end());
  auto logprobs = ctx.scorer.next_logprobs(prefix);
  if (static_cast<int>(logprobs.size()) != ctx.scorer.vocab().size())
    throw std::runtime_error("decoder: scorer returned a vector of wrong length");
  return logprobs;
}

// True if appending `token` creates a contiguous occurrence of some
// remaining phrase ending at the new position. Keeps the unsatisfied bank
// free of constraint words.
bool completes_remaining_phrase(const Hypothesis& h, TokenId token,
                                std::span<const ConstraintGroup> remaining) {
  for (const auto& group : remaining) {
    for (const auto& phrase : group.phrases) {
      const auto& ids = phrase.token_ids;
      if (ids.empty() || ids.back() != token) continue;
      const std::size_t need = ids.size() - 1;  // tokens before the new one
      if (h.tokens.size() - 1 < need) continue;  // bos is not matchable
      bool match = true;
      for (std::size_t i = 0; i < need; ++i) {
        if (h.tokens[h.tokens.size() - need + i] != ids[i]) {
          match = false;
          break;
        }
      }
      if (match) return true;
    }
  }
  return false;
}

void fold_finished(std::optional<Hypothesis>& best, Hypothesis h, const BeamConfig& cfg) {
  if (!best || finished_order(h, *best, cfg)) best = std::move(h);
}

Hypothesis extend(const Hypothesis& h, TokenId token, double logprob) {
  Hypothesis next = h;
  next.tokens.push_back(token);
  next.logp += logprob;
  return next;
}

bool any_content_possible(const std::vector<double>& logprobs, TokenId bos_id, TokenId eos_id) {
  for (TokenId token = 0; token < static_cast<TokenId>(logprobs.size()); ++token) {
    if (token == bos_id || token == eos_id) continue;
    if (!is_impossible(logprobs[static_cast<std::size_t>(token)])) return true;
  }
  return false;
}

// An utterance must contain at least one real token: eos is banned as the
// first generated token unless the model leaves no alternative.
bool eos_permitted(const StepContext& ctx, const Hypothesis& h,
                   const std::vector<double>& logprobs) {
  if (h.generated_len() >= 1) return true;
  return !any_content_possible(logprobs, ctx.bos_id, ctx.eos_id);
}

void finish_or_keep(Hypothesis h, const StepContext& ctx, std::vector<Hypothesis>& pool,
                    std::optional<Hypothesis>& best_finished) {
  const bool hit_eos = h.tokens.back() == ctx.eos_id;
  const bool hit_max = h.generated_len() >= static_cast<std::size_t>(ctx.cfg.max_len);
  if (hit_eos || hit_max) {
    if (h.in_progress) return;  // a half-emitted phrase cannot finish
    h.finished = true;
    fold_finished(best_finished, std::move(h), ctx.cfg);
    return;
  }
  pool.push_back(std::move(h));
}

// Top beam_size continuations of `h` by (logprob, token id), excluding bos,
// eos (handled by the caller), impossible tokens, and anything `exclude`
// rejects.
template <typename ExcludeFn>
std::vector<std::pair<TokenId, double>> top_continuations(const StepContext& ctx,
                                                          const std::vector<double>& logprobs,
                                                          ExcludeFn exclude) {
  std::vector<std::pair<TokenId, double>> candidates;
  candidates.reserve(logprobs.size());
  for (TokenId token = 0; token < static_cast<TokenId>(logprobs.size()); ++token) {
    if (token == ctx.bos_id || token == ctx.eos_id) continue;
    const double lp = logprobs[static_cast<std::size_t>(token)];
    if (is_impossible(lp)) continue;
    if (exclude(token)) continue;
    candidates.emplace_back(token, lp);
  }
  const std::size_t keep = std::min<std::size_t>(candidates.size(),
                                                 static_cast<std::size_t>(ctx.cfg.beam_size));
  auto better = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                    candidates.end(), better);
  candidates.resize(keep);
  return candidates;
}

// Prune to beam_size under live_order, dropping all but the best-ranked
// hypothesis of each token sequence. Duplicates arise only from different
// constraint placements over the same tokens; the earlier placement is the
// one every later tie-break prefers, so dropping the rest loses nothing.
void prune_pool(std::vector<Hypothesis>& pool, int beam_size) {
  std::sort(pool.begin(), pool.end(), live_order);
  std::vector<Hypothesis> kept;
  kept.reserve(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(beam_size)));
  for (auto& h : pool) {
    if (kept.size() >= static_cast<std::size_t>(beam_size)) break;
    bool duplicate = false;
    for (const auto& k : kept) {
      if (k.tokens == h.tokens && k.in_progress.has_value() == h.in_progress.has_value() &&
          (!k.in_progress ||
           (k.in_progress->group_index == h.in_progress->group_index &&
            k.in_progress->phrase_index == h.in_progress->phrase_index &&
            k.in_progress->next_position == h.in_progress->next_position))) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(std::move(h));
  }
  pool = std::move(kept);
}

}  // namespace

void gbs_step(BeamBanks& banks, std::span<const TokenId> history, const Scorer& scorer,
              std::span<const ConstraintGroup> remaining, const BeamConfig& cfg) {
  cfg.validate();
  const StepContext ctx{history, scorer, remaining, cfg, scorer.vocab().bos_id(),
                        scorer.vocab().eos_id()};

  BeamBanks next;
  next.best_finished_unsatisfied = std::move(banks.best_finished_unsatisfied);
  next.best_finished_satisfied = std::move(banks.best_finished_satisfied);

  for (const auto& h : banks.unsatisfied) {
    const auto logprobs = score_continuations(ctx, h);

    // generate: ordinary continuations that do not complete a phrase
    const double eos_lp = logprobs[static_cast<std::size_t>(ctx.eos_id)];
    if (!is_impossible(eos_lp) && eos_permitted(ctx, h, logprobs)) {
      Hypothesis done = extend(h, ctx.eos_id, eos_lp);
      done.finished = true;
      fold_finished(next.best_finished_unsatisfied, std::move(done), cfg);
    }
    auto generate = top_continuations(ctx, logprobs, [&](TokenId token) {
      return completes_remaining_phrase(h, token, remaining);
    });
    for (const auto& [token, lp] : generate)
      finish_or_keep(extend(h, token, lp), ctx, next.unsatisfied, next.best_finished_unsatisfied);

    // start: append each remaining phrase's first token
    for (int gi = 0; gi < static_cast<int>(remaining.size()); ++gi) {
      const auto& group = remaining[static_cast<std::size_t>(gi)];
      for (int pi = 0; pi < static_cast<int>(group.phrases.size()); ++pi) {
        const auto& ids = group.phrases[static_cast<std::size_t>(pi)].token_ids;
        const double lp = logprobs[static_cast<std::size_t>(ids.front())];
        if (is_impossible(lp)) continue;
        Hypothesis started = extend(h, ids.front(), lp);
        if (ids.size() == 1) {
          started.bank = Bank::kSatisfied;
          started.forced = ForcedPhrase{gi, pi, started.tokens.size() - 1};
          finish_or_keep(std::move(started), ctx, next.satisfied,
                         next.best_finished_satisfied);
        } else {
          started.in_progress = InProgressPhrase{gi, pi, 1};
          finish_or_keep(std::move(started), ctx, next.in_progress,
                         next.best_finished_satisfied);
        }
      }
    }
  }

  // continue: the forced next phrase token is the only continuation
  for (const auto& h : banks.in_progress) {
    const auto logprobs = score_continuations(ctx, h);
    const auto& phrase =
        remaining[static_cast<std::size_t>(h.in_progress->group_index)]
            .phrases[static_cast<std::size_t>(h.in_progress->phrase_index)];
    const TokenId token = phrase.token_ids[h.in_progress->next_position];
    const double lp = logprobs[static_cast<std::size_t>(token)];
    if (is_impossible(lp)) continue;
    Hypothesis advanced = extend(h, token, lp);
    advanced.in_progress->next_position += 1;
    if (advanced.in_progress->next_position == phrase.token_ids.size()) {
      advanced.bank = Bank::kSatisfied;
      advanced.forced = ForcedPhrase{advanced.in_progress->group_index,
                                     advanced.in_progress->phrase_index,
                                     advanced.tokens.size() - phrase.token_ids.size()};
      advanced.in_progress.reset();
      finish_or_keep(std::move(advanced), ctx, next.satisfied, next.best_finished_satisfied);
    } else {
      finish_or_keep(std::move(advanced), ctx, next.in_progress,
                     next.best_finished_satisfied);
    }
  }

  // satisfied: ordinary continuation only; the per-turn constraint budget
  // of one forbids further appends
  for (const auto& h : banks.satisfied) {
    const auto logprobs = score_continuations(ctx, h);
    const double eos_lp = logprobs[static_cast<std::size_t>(ctx.eos_id)];
    if (!is_impossible(eos_lp)) {
      Hypothesis done = extend(h, ctx.eos_id, eos_lp);
      done.finished = true;
      fold_finished(next.best_finished_satisfied, std::move(done), cfg);
    }
    auto generate = top_continuations(ctx, logprobs, [](TokenId) { return false; });
    for (const auto& [token, lp] : generate)
      finish_or_keep(extend(h, token, lp), ctx, next.satisfied, next.best_finished_satisfied);
  }

  prune_pool(next.unsatisfied, cfg.beam_size);
  prune_pool(next.in_progress, cfg.beam_size);
  prune_pool(next.satisfied, cfg.beam_size);
  banks = std::move(next);
}

TurnCandidates search_turn(std::span<const TokenId> history, const Scorer& scorer,
                           std::span<const ConstraintGroup> remaining, const BeamConfig& cfg) {
  cfg.validate();
  BeamBanks banks = BeamBanks::initial(scorer.vocab().bos_id());
  while (banks.live()) gbs_step(banks, history, scorer, remaining, cfg);
  return {std::move(banks.best_finished_unsatisfied), std::move(banks.best_finished_satisfied)};
}

TurnResult select_final(const std::optional<Hypothesis>& best_satisfied,
                        const std::optional<Hypothesis>& best_unsatisfied, double threshold,
                        const BeamConfig& cfg, std::span<const ConstraintGroup> remaining,
                        TokenId eos_id) {
  if (!best_satisfied && !best_unsatisfied)
    throw std::runtime_error("select_final: no finished candidate in either bank");

  TurnResult result;
  result.threshold_used = threshold;
  if (best_satisfied) result.best_satisfied_score = final_score(*best_satisfied, cfg);
  if (best_unsatisfied) result.best_unsatisfied_score = final_score(*best_unsatisfied, cfg);

  bool choose_satisfied;
  if (best_satisfied && best_unsatisfied)
    choose_satisfied = *result.best_satisfied_score > *result.best_unsatisfied_score - threshold;
  else
    choose_satisfied = best_satisfied.has_value();

  const Hypothesis& chosen = choose_satisfied ? *best_satisfied : *best_unsatisfied;
  result.chosen_bank = choose_satisfied ? Bank::kSatisfied : Bank::kUnsatisfied;
  if (choose_satisfied && chosen.forced) {
    const auto& group = remaining[static_cast<std::size_t>(chosen.forced->group_index)];
    result.satisfied_group = group.name;
    result.satisfied_phrase =
        group.phrases[static_cast<std::size_t>(chosen.forced->phrase_index)].surface;
  }
  // bos heads every hypothesis and eos can only be the terminator
  auto end = chosen.tokens.end();
  if (chosen.tokens.back() == eos_id) --end;
  result.utterance.assign(chosen.tokens.begin() + 1, end);
  return result;
}

TurnResult decode_turn(std::span<const TokenId> history,
                       std::span<const ConstraintGroup> remaining, const Scorer& scorer,
                       const BeamConfig& cfg, int turn_index) {
  auto candidates = search_turn(history, scorer, remaining, cfg);
  const double threshold = dynamic_threshold(cfg.t0, cfg.a, turn_index);
  return select_final(candidates.best_satisfied, candidates.best_unsatisfied, threshold, cfg,
                      remaining, scorer.vocab().eos_id());
}

Hypothesis vanilla_beam_search(std::span<const TokenId> history, const Scorer& scorer,
                               const BeamConfig& cfg) {
  cfg.validate();
  const TokenId bos_id = scorer.vocab().bos_id();
  const TokenId eos_id = scorer.vocab().eos_id();

  std::vector<Hypothesis> beam;
  {
    Hypothesis root;
    root.tokens = {bos_id};
    beam.push_back(std::move(root));
  }
  std::optional<Hypothesis> best;

  while (!beam.empty()) {
    std::vector<Hypothesis> expanded;
    for (const auto& h : beam) {
      std::vector<TokenId> prefix(history.begin(), history.end());
      prefix.insert(prefix.end(), h.tokens.begin(), h.tokens.end());
      const auto logprobs = scorer.next_logprobs(prefix);
      // the first generated token may not be eos unless nothing else is possible
      bool content_possible = false;
      for (TokenId token = 0; token < static_cast<TokenId>(logprobs.size()); ++token) {
        if (token == bos_id || token == eos_id) continue;
        if (!is_impossible(logprobs[static_cast<std::size_t>(token)])) content_possible = true;
      }
      for (TokenId token = 0; token < static_cast<TokenId>(logprobs.size()); ++token) {
        if (token == bos_id) continue;
        if (token == eos_id && h.generated_len() == 0 && content_possible) continue;
        const double lp = logprobs[static_cast<std::size_t>(token)];
        if (is_impossible(lp)) continue;
        Hypothesis next = h;
        next.tokens.push_back(token);
        next.logp += lp;
        if (token == eos_id || next.generated_len() >= static_cast<std::size_t>(cfg.max_len)) {
          next.finished = true;
          if (!best || finished_order(next, *best, cfg)) best = std::move(next);
        } else {
          expanded.push_back(std::move(next));
        }
      }
    }
    std::sort(expanded.begin(), expanded.end(), live_order);
    if (expanded.size() > static_cast<std::size_t>(cfg.beam_size))
      expanded.resize(static_cast<std::size_t>(cfg.beam_size));
    beam = std::move(expanded);
  }
  if (!best) throw std::runtime_error("vanilla_beam_search: no finished hypothesis");
  return *best;
}

}  // namespace mgbs
