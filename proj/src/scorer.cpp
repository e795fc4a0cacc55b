#include "mgbs/scorer.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mgbs {

namespace {

double exp_sum(const std::vector<double>& logprobs) {
  double sum = 0.0;
  for (double lp : logprobs) sum += std::exp(lp);
  return sum;
}

}  // namespace

TableScorer::TableScorer(Vocabulary vocab, std::vector<double> default_logprobs)
    : vocab_(std::move(vocab)), default_logprobs_(std::move(default_logprobs)) {
  validate(default_logprobs_);
}

void TableScorer::set_override(std::vector<TokenId> prefix, std::vector<double> logprobs) {
  validate(logprobs);
  overrides_[std::move(prefix)] = std::move(logprobs);
}

void TableScorer::validate(const std::vector<double>& logprobs) const {
  if (static_cast<int>(logprobs.size()) != vocab_.size())
    throw std::invalid_argument("table scorer: distribution length " +
                                std::to_string(logprobs.size()) + " != vocabulary size " +
                                std::to_string(vocab_.size()));
  if (!is_impossible(logprobs[static_cast<std::size_t>(vocab_.bos_id())]))
    throw std::invalid_argument("table scorer: bos must have zero probability");
  double sum = exp_sum(logprobs);
  if (std::abs(sum - 1.0) > 1e-6) {
    std::ostringstream msg;
    msg << "table scorer: distribution exp-sum " << sum << " is not 1 within 1e-6";
    throw std::invalid_argument(msg.str());
  }
}

std::vector<double> TableScorer::logprobs_from_probs(const Vocabulary& vocab,
                                                     const std::map<std::string, double>& probs) {
  std::vector<double> logprobs(static_cast<std::size_t>(vocab.size()), kLogZero);
  for (const auto& [surface, p] : probs) {
    auto id = vocab.id_of(normalize(surface));
    if (!id) throw std::invalid_argument("table scorer: unknown surface: " + surface);
    if (p < 0.0) throw std::invalid_argument("table scorer: negative probability for " + surface);
    logprobs[static_cast<std::size_t>(*id)] = p > 0.0 ? std::log(p) : kLogZero;
  }
  return logprobs;
}

std::vector<double> TableScorer::next_logprobs(std::span<const TokenId> prefix) const {
  auto it = overrides_.find(std::vector<TokenId>(prefix.begin(), prefix.end()));
  if (it != overrides_.end()) return it->second;
  return default_logprobs_;
}

std::vector<double> NgramScorer::next_logprobs(std::span<const TokenId> prefix) const {
  const auto n_eff = static_cast<double>(vocab_.size() - 1);  // bos excluded
  std::vector<TokenId> context;
  const std::size_t ctx_len = static_cast<std::size_t>(order_ - 1);
  context.reserve(ctx_len);
  for (std::size_t i = prefix.size() > ctx_len ? prefix.size() - ctx_len : 0; i < prefix.size(); ++i)
    context.push_back(prefix[i]);
  while (context.size() < ctx_len)
    context.insert(context.begin(), vocab_.bos_id());

  const ContextCounts* cc = nullptr;
  if (auto it = contexts_.find(context); it != contexts_.end()) cc = &it->second;

  const double total = cc ? static_cast<double>(cc->total) : 0.0;
  const double log_denom = std::log(total + smoothing_ * n_eff);
  const double log_unseen = std::log(smoothing_) - log_denom;

  std::vector<double> logprobs(static_cast<std::size_t>(vocab_.size()), log_unseen);
  logprobs[static_cast<std::size_t>(vocab_.bos_id())] = kLogZero;
  if (cc) {
    for (const auto& [token, count] : cc->counts)
      logprobs[static_cast<std::size_t>(token)] =
          std::log(static_cast<double>(count) + smoothing_) - log_denom;
  }
  return logprobs;
}

NgramScorer train_ngram(const Vocabulary& vocab, const std::vector<std::vector<TokenId>>& corpus,
                        int n, double k) {
  if (n < 1) throw std::invalid_argument("train_ngram: order must be >= 1, got " + std::to_string(n));
  if (!(k > 0.0)) throw std::invalid_argument("train_ngram: smoothing k must be > 0");

  NgramScorer scorer(vocab);
  scorer.order_ = n;
  scorer.smoothing_ = k;

  for (const auto& seq : corpus) {
    for (TokenId t : seq) {
      if (t < 0 || t >= vocab.size())
        throw std::invalid_argument("train_ngram: token id out of range: " + std::to_string(t));
      if (t == vocab.bos_id() || t == vocab.eos_id())
        throw std::invalid_argument("train_ngram: corpus sequence contains a reserved token");
    }
    std::vector<TokenId> padded(static_cast<std::size_t>(n - 1), vocab.bos_id());
    padded.insert(padded.end(), seq.begin(), seq.end());
    padded.push_back(vocab.eos_id());

    for (std::size_t i = static_cast<std::size_t>(n - 1); i < padded.size(); ++i) {
      std::vector<TokenId> context(padded.begin() + static_cast<std::ptrdiff_t>(i - (n - 1)),
                                   padded.begin() + static_cast<std::ptrdiff_t>(i));
      auto& cc = scorer.contexts_[context];
      cc.counts[padded[i]] += 1;
      cc.total += 1;
    }
  }
  return scorer;
}

NgramScorer train_ngram_from_text(const std::vector<std::string>& lines, int n, double k) {
  std::vector<std::string> words;
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(lines.size());
  std::map<std::string, bool> seen;
  for (const auto& line : lines) {
    auto ws = normalize_words(line);
    for (const auto& w : ws) {
      if (!seen.count(w)) {
        seen[w] = true;
        words.push_back(w);
      }
    }
    tokenized.push_back(std::move(ws));
  }
  Vocabulary vocab = Vocabulary::from_words(words);
  std::vector<std::vector<TokenId>> corpus;
  corpus.reserve(tokenized.size());
  for (const auto& ws : tokenized) {
    std::vector<TokenId> seq;
    seq.reserve(ws.size());
    for (const auto& w : ws) seq.push_back(*vocab.id_of(w));
    corpus.push_back(std::move(seq));
  }
  return train_ngram(vocab, corpus, n, k);
}

}  // namespace mgbs
