#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "idxsel/common.hpp"
#include "idxsel/costmodel.hpp"

namespace idxsel {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::vector<std::string> split_command(const std::string& command) {
  std::istringstream in(command);
  std::vector<std::string> argv;
  std::string token;
  while (in >> token) argv.push_back(token);
  if (argv.empty()) throw ArgumentError("external cost source: empty command");
  return argv;
}

class ExternalCostSource : public CostSource {
 public:
  ExternalCostSource(const std::string& command, int timeout_ms)
      : command_(command), timeout_ms_(timeout_ms) {
    try {
      spawn(split_command(command));
      handshake();
    } catch (...) {
      cleanup();  // destructor will not run for a partially constructed object
      throw;
    }
  }

  ~ExternalCostSource() override { cleanup(); }

  CostReport evaluate(const Workload& workload, const IndexConfiguration& config) override {
    std::lock_guard<std::mutex> lock(mutex_);
    json cfg = json::array();
    for (const auto& index : config.indexes()) {
      cfg.push_back({{"table", index.table}, {"columns", index.columns}});
    }
    json request = {{"op", "evaluate"},
                    {"workload", json::parse(workload_to_json(workload))},
                    {"config", cfg}};
    send_line(request.dump());
    const std::string line = read_line(Clock::now() + std::chrono::milliseconds(timeout_ms_));

    json response;
    try {
      response = json::parse(line);
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("cost source sent invalid JSON: ") + e.what());
    }
    CostReport report;
    try {
      report.total_cost = response.at("total_cost").get<double>();
      report.storage_units = response.at("storage_units").get<double>();
      for (const auto& entry : response.at("per_query")) {
        report.per_query.emplace_back(entry.at("id").get<std::string>(),
                                      entry.at("cost").get<double>());
      }
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("cost source response missing fields: ") + e.what());
    }
    validate_cost_report(report, workload);
    return report;
  }

 private:
  void spawn(const std::vector<std::string>& argv) {
    // Writes on a dead pipe must surface as EPIPE, not kill the process.
    signal(SIGPIPE, SIG_IGN);

    int in_pipe[2];   // parent -> child stdin
    int out_pipe[2];  // child stdout -> parent
    int exec_pipe[2];  // exec-failure errno channel
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0 || pipe(exec_pipe) != 0) {
      throw IoError("external cost source: pipe() failed");
    }
    fcntl(exec_pipe[1], F_SETFD, FD_CLOEXEC);

    pid_ = fork();
    if (pid_ < 0) throw IoError("external cost source: fork() failed");
    if (pid_ == 0) {
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      close(in_pipe[0]);
      close(in_pipe[1]);
      close(out_pipe[0]);
      close(out_pipe[1]);
      close(exec_pipe[0]);
      std::vector<char*> args;
      for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
      args.push_back(nullptr);
      execvp(args[0], args.data());
      const int err = errno;
      ssize_t ignored = write(exec_pipe[1], &err, sizeof(err));
      (void)ignored;
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    close(exec_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];

    int exec_errno = 0;
    const ssize_t n = read(exec_pipe[0], &exec_errno, sizeof(exec_errno));
    close(exec_pipe[0]);
    if (n > 0) {
      throw IoError("cannot start cost source '" + command_ +
                    "': " + std::strerror(exec_errno));
    }
  }

  void handshake() {
    send_line(R"({"op":"hello","version":1})");
    const std::string line = read_line(Clock::now() + std::chrono::milliseconds(timeout_ms_));
    json response;
    try {
      response = json::parse(line);
    } catch (const json::exception& e) {
      throw ProtocolError(std::string("cost source handshake is not JSON: ") + e.what());
    }
    if (response.value("ok", false) != true || response.value("version", 0) != 1) {
      throw ProtocolError("cost source handshake rejected: " + line);
    }
  }

  void send_line(const std::string& line) {
    std::string frame = line + "\n";
    std::size_t sent = 0;
    while (sent < frame.size()) {
      const ssize_t n = write(to_child_, frame.data() + sent, frame.size() - sent);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("cost source write failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(Clock::time_point deadline) {
    for (;;) {
      const auto newline = buffer_.find('\n');
      if (newline != std::string::npos) {
        std::string line = buffer_.substr(0, newline);
        buffer_.erase(0, newline + 1);
        return line;
      }
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (remaining.count() <= 0) {
        throw ProtocolError("cost source timed out after " + std::to_string(timeout_ms_) + "ms");
      }
      pollfd pfd{from_child_, POLLIN, 0};
      const int ready = poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("cost source poll failed: ") + std::strerror(errno));
      }
      if (ready == 0) {
        throw ProtocolError("cost source timed out after " + std::to_string(timeout_ms_) + "ms");
      }
      char chunk[4096];
      const ssize_t n = read(from_child_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("cost source read failed: ") + std::strerror(errno));
      }
      if (n == 0) {
        throw ProtocolError("cost source closed its output mid-conversation");
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void reap() {
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, &status, WNOHANG) != 0) return;
      usleep(10 * 1000);
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, &status, 0);
  }

  void cleanup() {
    if (to_child_ >= 0) close(to_child_);
    if (from_child_ >= 0) close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ > 0) reap();
    pid_ = -1;
  }

  std::string command_;
  int timeout_ms_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::mutex mutex_;
};

}  // namespace

std::unique_ptr<CostSource> spawn_external_source(const std::string& command, int timeout_ms) {
  return std::make_unique<ExternalCostSource>(command, timeout_ms);
}

}  // namespace idxsel
