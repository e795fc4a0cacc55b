#ifndef MGBS_SUBPROCESS_SCORER_HPP_
#define MGBS_SUBPROCESS_SCORER_HPP_

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mgbs/scorer.hpp"
#include "mgbs/vocabulary.hpp"

namespace mgbs {

// Adapter for an external language model speaking a line protocol over
// stdin/stdout (one JSON object per line, UTF-8):
//
//   child -> {"vocab_size": int, "bos_id": int, "eos_id": int}   (handshake)
//   engine -> {"prefix": [int, ...]}
//   child -> {"logprobs": [real, ...]}    length must equal vocab_size
//
// Responses are validated against the scorer contract before use; a child
// exit, a malformed line, a wrong-length vector, and a normalization
// violation are reported as distinct errors. Requests are serialized per
// child process.
class SubprocessScorer : public Scorer {
 public:
  // Spawns `argv` and performs the handshake; a vocabulary mismatch is a
  // startup error.
  SubprocessScorer(std::vector<std::string> argv, Vocabulary vocab);
  ~SubprocessScorer() override;

  SubprocessScorer(const SubprocessScorer&) = delete;
  SubprocessScorer& operator=(const SubprocessScorer&) = delete;

  std::vector<double> next_logprobs(std::span<const TokenId> prefix) const override;
  const Vocabulary& vocab() const override { return vocab_; }

 private:
  struct Pipe;
  std::string read_line() const;
  void write_line(const std::string& line) const;
  [[noreturn]] void fail_child_exit(const std::string& when) const;

  Vocabulary vocab_;
  std::vector<std::string> argv_;
  mutable std::mutex io_mutex_;
  std::unique_ptr<Pipe> pipe_;
};

}  // namespace mgbs

#endif  // MGBS_SUBPROCESS_SCORER_HPP_
