#ifndef MGBS_SCORER_HPP_
#define MGBS_SCORER_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mgbs/vocabulary.hpp"

namespace mgbs {

// Finite stand-in for log(0). Scores at or below kImpossibleThreshold never
// participate in top-k selection; keeping the sentinel finite keeps sorting
// total and portable.
inline constexpr double kLogZero = -1e30;
inline constexpr double kImpossibleThreshold = -1e29;

inline bool is_impossible(double logprob) { return logprob <= kImpossibleThreshold; }

// Next-token log-probability source. Contract, for every prefix:
//   - returned vector has length vocab().size()
//   - exp of the entries sums to 1 within 1e-6
//   - the bos entry is kLogZero (bos is never generated)
//   - identical prefix yields an identical vector
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::vector<double> next_logprobs(std::span<const TokenId> prefix) const = 0;
  virtual const Vocabulary& vocab() const = 0;
};

// Fixture scorer: a fixed default distribution plus optional per-prefix
// overrides. Echoes stored vectors bitwise.
class TableScorer : public Scorer {
 public:
  // Distributions are given in the log domain and validated against the
  // scorer contract at construction.
  TableScorer(Vocabulary vocab, std::vector<double> default_logprobs);

  void set_override(std::vector<TokenId> prefix, std::vector<double> logprobs);

  // Convenience: builds the log-domain vector from linear probabilities
  // keyed by surface; missing surfaces get zero probability.
  static std::vector<double> logprobs_from_probs(const Vocabulary& vocab,
                                                 const std::map<std::string, double>& probs);

  std::vector<double> next_logprobs(std::span<const TokenId> prefix) const override;
  const Vocabulary& vocab() const override { return vocab_; }

 private:
  void validate(const std::vector<double>& logprobs) const;
  Vocabulary vocab_;
  std::vector<double> default_logprobs_;
  std::map<std::vector<TokenId>, std::vector<double>> overrides_;
};

// Add-k smoothed n-gram model over the non-bos alphabet:
//   P(w | c) = (count(c, w) + k) / (count(c, .) + k * (|V| - 1))
// bos is excluded from smoothing so P(bos | c) stays zero.
class NgramScorer : public Scorer {
 public:
  std::vector<double> next_logprobs(std::span<const TokenId> prefix) const override;
  const Vocabulary& vocab() const override { return vocab_; }

  int order() const { return order_; }
  double smoothing() const { return smoothing_; }

 private:
  explicit NgramScorer(Vocabulary vocab) : vocab_(std::move(vocab)) {}
  friend NgramScorer train_ngram(const Vocabulary&, const std::vector<std::vector<TokenId>>&,
                                 int, double);
  struct ContextCounts {
    std::map<TokenId, std::int64_t> counts;
    std::int64_t total = 0;
  };
  Vocabulary vocab_;
  int order_ = 1;
  double smoothing_ = 1.0;
  std::map<std::vector<TokenId>, ContextCounts> contexts_;
};

// Counts every length-n window of each sequence, implicitly padded with
// n-1 bos in front and one eos behind. An empty corpus is allowed (pure
// smoothing); n < 1 or k <= 0 is rejected, as are sequences containing
// bos or eos.
NgramScorer train_ngram(const Vocabulary& vocab, const std::vector<std::vector<TokenId>>& corpus,
                        int n, double k);

// Reads one utterance per line, builds the vocabulary from the distinct
// words in first-appearance order, and trains on the tokenized lines.
NgramScorer train_ngram_from_text(const std::vector<std::string>& lines, int n, double k);

}  // namespace mgbs

#endif  // MGBS_SCORER_HPP_
