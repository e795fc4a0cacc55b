#include "mgbs/subprocess_scorer.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mgbs {

using nlohmann::json;

struct SubprocessScorer::Pipe {
  pid_t pid = -1;
  int to_child = -1;    // engine writes requests here
  int from_child = -1;  // engine reads responses here
  std::string read_buffer;

  ~Pipe() {
    if (to_child >= 0) ::close(to_child);
    if (from_child >= 0) ::close(from_child);
    if (pid > 0) {
      int status = 0;
      if (::waitpid(pid, &status, WNOHANG) == 0) {
        ::kill(pid, SIGTERM);
        ::waitpid(pid, &status, 0);
      }
    }
  }
};

namespace {

void ignore_sigpipe_once() {
  static const bool done = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

}  // namespace

SubprocessScorer::SubprocessScorer(std::vector<std::string> argv, Vocabulary vocab)
    : vocab_(std::move(vocab)), argv_(std::move(argv)), pipe_(std::make_unique<Pipe>()) {
  if (argv_.empty()) throw std::invalid_argument("subprocess scorer: empty command");
  ignore_sigpipe_once();

  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
    throw std::runtime_error("subprocess scorer: pipe() failed");

  pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("subprocess scorer: fork() failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }

  ::close(to_child[0]);
  ::close(from_child[1]);
  pipe_->pid = pid;
  pipe_->to_child = to_child[1];
  pipe_->from_child = from_child[0];

  // handshake
  json hello;
  try {
    hello = json::parse(read_line());
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("subprocess scorer: malformed handshake: ") + e.what());
  }
  if (!hello.contains("vocab_size") || !hello.contains("bos_id") || !hello.contains("eos_id"))
    throw std::runtime_error("subprocess scorer: handshake missing vocab_size/bos_id/eos_id");
  const int child_vocab = hello["vocab_size"].get<int>();
  const int child_bos = hello["bos_id"].get<int>();
  const int child_eos = hello["eos_id"].get<int>();
  if (child_vocab != vocab_.size() || child_bos != vocab_.bos_id() || child_eos != vocab_.eos_id()) {
    std::ostringstream msg;
    msg << "subprocess scorer: vocabulary mismatch: child reports vocab_size=" << child_vocab
        << " bos_id=" << child_bos << " eos_id=" << child_eos << ", engine has "
        << vocab_.size() << "/" << vocab_.bos_id() << "/" << vocab_.eos_id();
    throw std::runtime_error(msg.str());
  }
}

SubprocessScorer::~SubprocessScorer() = default;

void SubprocessScorer::fail_child_exit(const std::string& when) const {
  int status = 0;
  std::ostringstream msg;
  msg << "subprocess scorer: child exited " << when;
  if (pipe_->pid > 0 && ::waitpid(pipe_->pid, &status, WNOHANG) == pipe_->pid) {
    if (WIFEXITED(status)) msg << " (exit code " << WEXITSTATUS(status) << ")";
    if (WIFSIGNALED(status)) msg << " (signal " << WTERMSIG(status) << ")";
    pipe_->pid = -1;
  }
  throw std::runtime_error(msg.str());
}

std::string SubprocessScorer::read_line() const {
  auto& buf = pipe_->read_buffer;
  for (;;) {
    auto nl = buf.find('\n');
    if (nl != std::string::npos) {
      std::string line = buf.substr(0, nl);
      buf.erase(0, nl + 1);
      return line;
    }
    char chunk[4096];
    ssize_t n = ::read(pipe_->from_child, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("subprocess scorer: read failed: ") +
                               std::strerror(errno));
    }
    if (n == 0) fail_child_exit("while a response was pending");
    buf.append(chunk, static_cast<std::size_t>(n));
  }
}

void SubprocessScorer::write_line(const std::string& line) const {
  std::string data = line + "\n";
  std::size_t written = 0;
  while (written < data.size()) {
    ssize_t n = ::write(pipe_->to_child, data.data() + written, data.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE) fail_child_exit("before the request could be sent");
      throw std::runtime_error(std::string("subprocess scorer: write failed: ") +
                               std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
}

std::vector<double> SubprocessScorer::next_logprobs(std::span<const TokenId> prefix) const {
  std::lock_guard<std::mutex> lock(io_mutex_);

  json request{{"prefix", std::vector<TokenId>(prefix.begin(), prefix.end())}};
  write_line(request.dump());

  const std::string line = read_line();
  json response;
  try {
    response = json::parse(line);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("subprocess scorer: malformed response: ") + e.what());
  }
  if (!response.is_object() || !response.contains("logprobs") || !response["logprobs"].is_array())
    throw std::runtime_error("subprocess scorer: malformed response: missing \"logprobs\" array");

  std::vector<double> logprobs;
  try {
    logprobs = response["logprobs"].get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("subprocess scorer: malformed response: ") + e.what());
  }
  if (static_cast<int>(logprobs.size()) != vocab_.size()) {
    std::ostringstream msg;
    msg << "subprocess scorer: logprob vector length mismatch: expected " << vocab_.size()
        << ", got " << logprobs.size();
    throw std::runtime_error(msg.str());
  }

  double sum = 0.0;
  for (double lp : logprobs) sum += std::exp(lp);
  if (std::abs(sum - 1.0) > 1e-6) {
    std::ostringstream msg;
    msg << "subprocess scorer: normalization violation: exp-sum = " << sum;
    throw std::runtime_error(msg.str());
  }
  const double bos_mass = std::exp(logprobs[static_cast<std::size_t>(vocab_.bos_id())]);
  if (bos_mass > 1e-6) {
    std::ostringstream msg;
    msg << "subprocess scorer: response assigns probability " << bos_mass << " to bos";
    throw std::runtime_error(msg.str());
  }

  logprobs[static_cast<std::size_t>(vocab_.bos_id())] = kLogZero;
  return logprobs;
}

}  // namespace mgbs
