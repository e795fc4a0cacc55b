#include "mgbs/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mgbs {

namespace {

// Deliberately separate from the decoder's scoring/tie-break code so a
// disagreement localizes bugs to the search itself.
struct Candidate {
  std::vector<TokenId> tokens;
  double logp = 0.0;
  double score = 0.0;
  std::size_t phrase_pos = std::numeric_limits<std::size_t>::max();
};

double candidate_score(double logp, std::size_t len, const BeamConfig& cfg) {
  if (cfg.score_mode == ScoreMode::kRaw) return logp;
  return logp / std::pow(static_cast<double>(len), cfg.length_penalty);
}

bool candidate_better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.logp != b.logp) return a.logp > b.logp;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  if (a.phrase_pos != b.phrase_pos) return a.phrase_pos < b.phrase_pos;
  return a.tokens < b.tokens;
}

std::size_t earliest_phrase_start(const std::vector<TokenId>& tokens,
                                  std::span<const ConstraintGroup> remaining) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (const auto& group : remaining) {
    for (const auto& phrase : group.phrases) {
      std::size_t pos = 0;
      if (contains_phrase(tokens, phrase.token_ids, &pos)) best = std::min(best, pos);
    }
  }
  return best;
}

struct Enumerator {
  const Scorer& scorer;
  std::span<const ConstraintGroup> remaining;
  const BeamConfig& cfg;
  int max_len;
  TokenId bos_id;
  TokenId eos_id;

  std::optional<Candidate> best_overall;
  std::optional<Candidate> best_satisfying;

  void consider(std::vector<TokenId> tokens, double logp) {
    Candidate c;
    c.phrase_pos = earliest_phrase_start(tokens, remaining);
    c.tokens = std::move(tokens);
    c.logp = logp;
    c.score = candidate_score(logp, c.tokens.size(), cfg);
    const bool satisfying = c.phrase_pos != std::numeric_limits<std::size_t>::max();
    if (!best_overall || candidate_better(c, *best_overall)) best_overall = c;
    if (satisfying && (!best_satisfying || candidate_better(c, *best_satisfying)))
      best_satisfying = std::move(c);
  }

  void walk(std::vector<TokenId>& prefix_tokens, std::vector<TokenId>& generated, double logp) {
    const auto logprobs = scorer.next_logprobs(prefix_tokens);
    for (TokenId token = 0; token < static_cast<TokenId>(logprobs.size()); ++token) {
      if (token == bos_id) continue;
      const double lp = logprobs[static_cast<std::size_t>(token)];
      if (is_impossible(lp)) continue;
      generated.push_back(token);
      const double next_logp = logp + lp;
      if (token == eos_id || static_cast<int>(generated.size()) == max_len) {
        consider(generated, next_logp);
      } else {
        prefix_tokens.push_back(token);
        walk(prefix_tokens, generated, next_logp);
        prefix_tokens.pop_back();
      }
      generated.pop_back();
    }
  }
};

}  // namespace

OracleResult exhaustive_decode(const Scorer& scorer, int max_len,
                               std::span<const ConstraintGroup> remaining,
                               const BeamConfig& cfg, bool force,
                               std::span<const TokenId> history) {
  const int vocab_size = scorer.vocab().size();
  if (!force && (vocab_size > 8 || max_len > 7))
    throw std::invalid_argument(
        "exhaustive_decode: refusing |vocab| > 8 or max_len > 7 without force");
  if (max_len < 1) throw std::invalid_argument("exhaustive_decode: max_len must be >= 1");

  Enumerator e{scorer,
               remaining,
               cfg,
               max_len,
               scorer.vocab().bos_id(),
               scorer.vocab().eos_id(),
               {},
               {}};
  std::vector<TokenId> prefix(history.begin(), history.end());
  prefix.push_back(e.bos_id);
  std::vector<TokenId> generated;
  e.walk(prefix, generated, 0.0);

  if (!e.best_overall) throw std::runtime_error("exhaustive_decode: no terminated sequence");

  OracleResult result;
  result.best_overall = {e.best_overall->tokens, e.best_overall->logp, e.best_overall->score};
  if (e.best_satisfying)
    result.best_satisfying =
        OracleBest{e.best_satisfying->tokens, e.best_satisfying->logp, e.best_satisfying->score};

  const std::int64_t alphabet = vocab_size - 1;  // bos excluded
  std::int64_t count = 0;
  std::int64_t power = 1;
  for (int l = 1; l <= max_len; ++l) {
    power *= alphabet;
    count += power;
  }
  result.enumerated_count = count;
  return result;
}

TableScorer random_table_scorer(std::mt19937_64& rng, int n_words, int n_overrides,
                                int max_override_len) {
  std::vector<std::string> words;
  for (int i = 0; i < n_words; ++i) words.push_back("w" + std::to_string(i));
  Vocabulary vocab = Vocabulary::from_words(words);

  auto random_dist = [&]() {
    std::uniform_real_distribution<double> unit(0.05, 1.0);
    std::vector<double> probs(static_cast<std::size_t>(vocab.size()), 0.0);
    double total = 0.0;
    for (int id = 0; id < vocab.size(); ++id) {
      if (id == vocab.bos_id()) continue;
      probs[static_cast<std::size_t>(id)] = unit(rng);
      total += probs[static_cast<std::size_t>(id)];
    }
    std::vector<double> logprobs(probs.size(), kLogZero);
    for (int id = 0; id < vocab.size(); ++id) {
      if (id == vocab.bos_id()) continue;
      logprobs[static_cast<std::size_t>(id)] = std::log(probs[static_cast<std::size_t>(id)] / total);
    }
    return logprobs;
  };

  TableScorer scorer(vocab, random_dist());
  std::uniform_int_distribution<int> len_dist(0, max_override_len);
  std::uniform_int_distribution<int> word_dist(0, n_words - 1);
  for (int i = 0; i < n_overrides; ++i) {
    std::vector<TokenId> prefix{vocab.bos_id()};
    const int len = len_dist(rng);
    for (int j = 0; j < len; ++j) prefix.push_back(*vocab.id_of("w" + std::to_string(word_dist(rng))));
    scorer.set_override(std::move(prefix), random_dist());
  }
  return scorer;
}

Curriculum random_curriculum(std::mt19937_64& rng, const Vocabulary& vocab) {
  std::vector<TokenId> word_ids;
  for (TokenId id = 0; id < vocab.size(); ++id)
    if (id != vocab.bos_id() && id != vocab.eos_id()) word_ids.push_back(id);
  if (word_ids.empty()) throw std::invalid_argument("random_curriculum: vocabulary has no words");

  std::uniform_int_distribution<int> group_count_dist(1, 2);
  std::uniform_int_distribution<int> phrase_count_dist(1, 2);
  std::uniform_int_distribution<int> phrase_len_dist(1, 2);
  std::uniform_int_distribution<std::size_t> word_dist(0, word_ids.size() - 1);

  Curriculum curriculum;
  const int n_groups = group_count_dist(rng);
  for (int gi = 0; gi < n_groups; ++gi) {
    ConstraintGroup group;
    group.name = "g" + std::to_string(gi);
    const int n_phrases = phrase_count_dist(rng);
    int attempts = 0;
    while (static_cast<int>(group.phrases.size()) < n_phrases && attempts++ < 64) {
      PhraseConstraint phrase;
      const int len = phrase_len_dist(rng);
      for (int i = 0; i < len; ++i) phrase.token_ids.push_back(word_ids[word_dist(rng)]);
      phrase.surface = vocab.detokenize(phrase.token_ids);
      bool duplicate = false;
      for (const auto& p : group.phrases) duplicate = duplicate || p.surface == phrase.surface;
      if (!duplicate) group.phrases.push_back(std::move(phrase));
    }
    curriculum.groups.push_back(std::move(group));
  }
  return curriculum;
}

}  // namespace mgbs
