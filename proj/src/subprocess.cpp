#include "calibr8/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <sstream>

#include "calibr8/error.hpp"

namespace calibr8 {
namespace {

std::vector<double> to_std(const Vector& x) { return {x.data(), x.data() + x.size()}; }

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void write_all(int fd, const std::string& s) {
  std::size_t off = 0;
  while (off < s.size()) {
    ssize_t w = ::write(fd, s.data() + off, s.size() - off);
    if (w < 0) {
      if (errno == EINTR) continue;
      return;  // child closed stdin early; its exit status decides the outcome
    }
    off += static_cast<std::size_t>(w);
  }
}

std::string run_child(const std::string& command, const std::string& request, double timeout_s,
                      const Vector& x) {
  ignore_sigpipe();
  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw EvaluationError("pipe() failed", to_std(x));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw EvaluationError("pipe() failed", to_std(x));
  }
  pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw EvaluationError("fork() failed", to_std(x));
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  write_all(in_pipe[1], request);
  ::close(in_pipe[1]);

  std::string out;
  bool timed_out = false;
  auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  char buf[4096];
  for (;;) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd pfd{out_pipe[0], POLLIN, 0};
    int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc == 0) {
      timed_out = true;
      break;
    }
    ssize_t r = ::read(out_pipe[0], buf, sizeof buf);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) break;
    out.append(buf, static_cast<std::size_t>(r));
    if (out.find('\n') != std::string::npos) break;
  }
  ::close(out_pipe[0]);
  if (timed_out) ::kill(pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out)
    throw EvaluationError("subprocess simulator timed out after " + std::to_string(timeout_s) + " s", to_std(x));
  if (auto nl = out.find('\n'); nl != std::string::npos) out.resize(nl);
  if (out.empty() && !(WIFEXITED(status) && WEXITSTATUS(status) == 0))
    throw EvaluationError("subprocess simulator exited with status " + std::to_string(status), to_std(x));
  return out;
}

}  // namespace

std::string format_request(const Vector& x, const Vector& u, std::uint64_t seed) {
  std::string s;
  char buf[32];
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g ", x[i]);
    s += buf;
  }
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g ", u[i]);
    s += buf;
  }
  s += std::to_string(seed);
  s += '\n';
  return s;
}

Vector parse_response(const std::string& line, std::size_t expected) {
  std::istringstream is(line);
  std::vector<double> vals;
  std::string tok;
  while (is >> tok) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw EvaluationError("unparseable simulator output '" + tok + "'", {});
    vals.push_back(v);
  }
  if (vals.size() != expected)
    throw EvaluationError("simulator returned " + std::to_string(vals.size()) + " values, expected " +
                              std::to_string(expected),
                          {});
  return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

BlackBoxSimulator make_subprocess_simulator(const SubprocessSpec& spec, std::optional<ParameterSpace> domain) {
  if (spec.command.empty()) throw ConfigurationError("subprocess simulator needs a command", "simulator.command");
  if (!(spec.timeout_s > 0)) throw ConfigurationError("timeout must be > 0", "simulator.timeout_s");
  auto info = spec.info;
  if (info.name.empty()) info.name = spec.command;
  auto eval = [spec](const Vector& x, const Vector& u, std::uint64_t seed) -> Vector {
    std::string line = run_child(spec.command, format_request(x, u, seed), spec.timeout_s, x);
    try {
      return parse_response(line, spec.info.output_dim);
    } catch (const EvaluationError& e) {
      throw EvaluationError(e.what(), to_std(x));
    }
  };
  return BlackBoxSimulator(info, eval, std::move(domain));
}

}  // namespace calibr8
