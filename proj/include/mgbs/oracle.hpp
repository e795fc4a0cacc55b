#ifndef MGBS_ORACLE_HPP_
#define MGBS_ORACLE_HPP_

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mgbs/curriculum.hpp"
#include "mgbs/decoder.hpp"
#include "mgbs/scorer.hpp"

namespace mgbs {

struct OracleBest {
  std::vector<TokenId> tokens;  // generated tokens, trailing eos included
  double logp = 0.0;
  double score = 0.0;           // final_score under the given config
};

struct OracleResult {
  OracleBest best_overall;
  std::optional<OracleBest> best_satisfying;
  std::int64_t enumerated_count = 0;  // sum over l of |V \ bos|^l
};

// Brute-force ground truth: enumerates every sequence over the non-bos
// alphabet that terminates by eos or by reaching max_len, scores each by the
// decoder's final_score definition (reimplemented here), and returns the
// argmax overall and the argmax among sequences containing at least one
// complete phrase of a remaining group. Ties break exactly like the
// decoder: higher logp, shorter sequence, earlier first phrase occurrence,
// smaller token sequence.
//
// Guarded to |vocab| <= 8 and max_len <= 7 unless force is set.
OracleResult exhaustive_decode(const Scorer& scorer, int max_len,
                               std::span<const ConstraintGroup> remaining,
                               const BeamConfig& cfg, bool force = false,
                               std::span<const TokenId> history = {});

// Seeded fixtures for decoder-vs-oracle sweeps. The scorer gets a random
// default distribution plus a handful of random prefix overrides; the
// curriculum draws 1-2 groups of 1-2 phrases, each phrase 1-2 tokens long.
TableScorer random_table_scorer(std::mt19937_64& rng, int n_words, int n_overrides,
                                int max_override_len);
Curriculum random_curriculum(std::mt19937_64& rng, const Vocabulary& vocab);

}  // namespace mgbs

#endif  // MGBS_ORACLE_HPP_
