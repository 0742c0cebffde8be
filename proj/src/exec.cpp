#include "prism/exec.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace prism::exec {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kOutputCap = 1 << 20;  // 1 MiB per stream

std::string rstrip(const std::string& s) {
    std::size_t end = s.size();
    while (end > 0 && (s[end - 1] == ' ' || s[end - 1] == '\t' || s[end - 1] == '\r')) {
        --end;
    }
    return s.substr(0, end);
}

}  // namespace

std::string normalize_output(const std::string& text) {
    std::vector<std::string> lines;
    std::string current;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(rstrip(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) lines.push_back(rstrip(current));
    while (!lines.empty() && lines.back().empty()) lines.pop_back();

    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i > 0) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

std::string ExecutionReport::to_json_line() const {
    nlohmann::ordered_json j;
    j["success"] = success;
    j["tests"] = tests;
    j["error"] = error;
    j["wall_ms"] = wall_ms;
    return j.dump();
}

void ProcessTaskSpec::validate() const {
    if (test_cases.empty()) {
        throw std::domain_error("ProcessTaskSpec: need at least one test case");
    }
    if (!(timeout_seconds > 0.0)) {
        throw std::domain_error("ProcessTaskSpec: timeout must be positive");
    }
    if (entry_command.empty()) {
        throw std::domain_error("ProcessTaskSpec: empty entry command");
    }
}

ExecutionReport execute_synthetic(int true_quality) {
    ExecutionReport report;
    if (true_quality == 1) {
        report.success = 1;
        report.tests = {1, 1, 1};
        report.output = "all checks passed";
        report.error = "";
    } else {
        report.success = 1;
        report.tests = {1, 0, 1};
        report.output = "expected 42, got 17";
        report.error = "assertion failed on test 2";
    }
    return report;
}

int quality_from_report(const ExecutionReport& report) {
    if (report.success != 1) return 0;
    for (std::uint8_t bit : report.tests) {
        if (bit == 0) return 0;
    }
    return 1;
}

VerifierVerdict pseudo_verify_simulated(int true_quality,
                                        const theory::ChannelSpec& channel,
                                        rng::SeedStream& stream) {
    channel.validate();
    VerifierVerdict verdict;
    if (true_quality == 1) {
        verdict.is_correct = stream.next_bernoulli(channel.fn_rate) ? 0 : 1;
    } else {
        verdict.is_correct = stream.next_bernoulli(channel.fp_rate) ? 1 : 0;
    }
    const auto analysis = theory::channel_analysis(channel);
    verdict.confidence = verdict.is_correct == 1 ? analysis.posterior_correct
                                                 : analysis.posterior_incorrect;
    verdict.errors_text =
        verdict.is_correct == 1 ? "" : "verifier flagged the solution as incorrect";
    return verdict;
}

// ---------------------------------------------------------------------------
// Subprocess judge
// ---------------------------------------------------------------------------

namespace {

struct RunResult {
    bool spawn_failed = false;
    bool timed_out = false;
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Run `command` under /bin/sh in `workdir`, feed `input`, harvest stdout
// and stderr with a wall-clock deadline. The child gets its own process
// group so a timeout kill reaps grandchildren too.
RunResult run_once(const std::string& command, const std::string& workdir,
                   const std::string& input, double timeout_seconds) {
    RunResult result;

    // O_CLOEXEC keeps concurrently spawned siblings from inheriting each
    // other's pipe ends (which would delay EOF on stdin/stdout until the
    // unrelated child exits). dup2 in the child clears the flag on the
    // stdio copies it actually needs.
    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) != 0 || pipe2(out_pipe, O_CLOEXEC) != 0 ||
        pipe2(err_pipe, O_CLOEXEC) != 0) {
        result.spawn_failed = true;
        result.err = std::string("pipe failed: ") + std::strerror(errno);
        return result;
    }

    const pid_t pid = fork();
    if (pid < 0) {
        result.spawn_failed = true;
        result.err = std::string("fork failed: ") + std::strerror(errno);
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1],
                       err_pipe[0], err_pipe[1]}) {
            close(fd);
        }
        return result;
    }

    if (pid == 0) {
        setpgid(0, 0);
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1],
                       err_pipe[0], err_pipe[1]}) {
            close(fd);
        }
        if (chdir(workdir.c_str()) != 0) _exit(127);
        execl("/bin/sh", "sh", "-c", command.c_str(), nullptr);
        _exit(127);
    }

    setpgid(pid, pid);
    close(in_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[1]);

    // Feed stdin, tolerate early exits.
    signal(SIGPIPE, SIG_IGN);
    std::size_t written = 0;
    while (written < input.size()) {
        const ssize_t n =
            write(in_pipe[1], input.data() + written, input.size() - written);
        if (n <= 0) break;
        written += static_cast<std::size_t>(n);
    }
    close(in_pipe[1]);

    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(timeout_seconds);
    struct pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
    bool open_fd[2] = {true, true};
    std::string* sinks[2] = {&result.out, &result.err};
    char buf[4096];

    while (open_fd[0] || open_fd[1]) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            break;
        }
        const auto remaining =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
        fds[0].events = open_fd[0] ? POLLIN : 0;
        fds[1].events = open_fd[1] ? POLLIN : 0;
        const int rc = poll(fds, 2, static_cast<int>(remaining.count()) + 1);
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (rc == 0) {
            result.timed_out = true;
            break;
        }
        for (int i = 0; i < 2; ++i) {
            if (!open_fd[i]) continue;
            if (fds[i].revents & (POLLIN | POLLHUP)) {
                const ssize_t n = read(fds[i].fd, buf, sizeof(buf));
                if (n <= 0) {
                    open_fd[i] = false;
                } else if (sinks[i]->size() < kOutputCap) {
                    sinks[i]->append(buf, static_cast<std::size_t>(
                                              std::min<std::size_t>(
                                                  static_cast<std::size_t>(n),
                                                  kOutputCap - sinks[i]->size())));
                }
            } else if (fds[i].revents & (POLLERR | POLLNVAL)) {
                open_fd[i] = false;
            }
        }
    }

    if (result.timed_out) {
        kill(-pid, SIGKILL);
    }
    close(out_pipe[0]);
    close(err_pipe[0]);

    // A child can close its stdio yet keep running; reap under the same
    // deadline and kill the whole group if it overstays.
    int status = 0;
    while (true) {
        const pid_t reaped = waitpid(pid, &status, WNOHANG);
        if (reaped == pid || reaped < 0) break;
        if (std::chrono::steady_clock::now() >= deadline) {
            result.timed_out = true;
            kill(-pid, SIGKILL);
            waitpid(pid, &status, 0);
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    return result;
}

std::string replace_placeholder(std::string text, const std::string& key,
                                const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        text.replace(pos, key.size(), value);
        pos += value.size();
    }
    return text;
}

class ScratchDir {
public:
    ScratchDir() {
        std::string tmpl =
            (fs::temp_directory_path() / "prism-exec-XXXXXX").string();
        std::vector<char> buf(tmpl.begin(), tmpl.end());
        buf.push_back('\0');
        if (mkdtemp(buf.data()) == nullptr) {
            throw std::runtime_error(std::string("mkdtemp failed: ") +
                                     std::strerror(errno));
        }
        path_ = buf.data();
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

}  // namespace

ExecutionReport execute_process(const ProcessTaskSpec& spec,
                                const std::string& candidate_source) {
    spec.validate();
    ExecutionReport report;
    const auto started = std::chrono::steady_clock::now();

    std::string workdir;
    std::string command;
    std::unique_ptr<ScratchDir> scratch;
    try {
        scratch = std::make_unique<ScratchDir>();
        workdir = scratch->path();
        const std::string src_path = workdir + "/candidate_src";
        std::ofstream src(src_path, std::ios::binary);
        src << candidate_source;
        src.close();
        command = replace_placeholder(spec.entry_command, "{src}", src_path);
    } catch (const std::exception& e) {
        report.success = 0;
        report.error = std::string("spawn failure: ") + e.what();
        report.tests.assign(spec.test_cases.size(), 0);
        return report;
    }

    bool all_pass = true;
    for (const auto& test : spec.test_cases) {
        const RunResult run =
            run_once(command, workdir, test.input, spec.timeout_seconds);
        int bit = 0;
        if (run.spawn_failed) {
            all_pass = false;
            report.error = "spawn failure: " + run.err;
        } else if (run.timed_out) {
            all_pass = false;
            if (report.error.empty()) report.error = "timeout";
        } else {
            const bool ok = run.exit_code == 0 &&
                            normalize_output(run.out) ==
                                normalize_output(test.expected_stdout);
            bit = ok ? 1 : 0;
            if (!ok) {
                all_pass = false;
                if (report.error.empty()) {
                    report.error = !run.err.empty()
                                       ? run.err
                                       : "wrong answer (exit " +
                                             std::to_string(run.exit_code) + ")";
                }
                report.output = run.out;
            }
        }
        if (bit == 1 && report.output.empty()) report.output = run.out;
        report.tests.push_back(static_cast<std::uint8_t>(bit));
    }

    report.success = all_pass ? 1 : 0;
    report.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - started)
                         .count();
    return report;
}

std::vector<ExecutionReport> execute_process_batch(
    const ProcessTaskSpec& spec, const std::vector<std::string>& candidates,
    int max_workers) {
    spec.validate();
    if (max_workers < 1) {
        throw std::domain_error("execute_process_batch: max_workers >= 1");
    }
    std::vector<ExecutionReport> reports(candidates.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t index = next.fetch_add(1);
            if (index >= candidates.size()) return;
            reports[index] = execute_process(spec, candidates[index]);
        }
    };
    const std::size_t n_workers = std::min<std::size_t>(
        candidates.size(), static_cast<std::size_t>(max_workers));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return reports;
}

ProcessTaskSpec load_task_dir(const std::string& dir) {
    ProcessTaskSpec spec;
    const fs::path root(dir);
    std::ifstream task(root / "task.txt");
    if (!task) {
        throw std::runtime_error("load_task_dir: missing " +
                                 (root / "task.txt").string());
    }
    std::string line;
    std::string program;
    bool in_program = false;
    while (std::getline(task, line)) {
        if (!in_program && line.rfind("entry:", 0) == 0) {
            spec.entry_command = rstrip(line.substr(6));
            while (!spec.entry_command.empty() && spec.entry_command.front() == ' ') {
                spec.entry_command.erase(spec.entry_command.begin());
            }
        } else if (!in_program && line.rfind("timeout:", 0) == 0) {
            spec.timeout_seconds = std::stod(line.substr(8));
        } else if (line == "program:") {
            in_program = true;
        } else if (in_program) {
            program += line;
            program.push_back('\n');
        }
    }
    spec.program_source = program;

    std::vector<fs::path> inputs;
    const fs::path tests_dir = root / "tests";
    if (fs::is_directory(tests_dir)) {
        for (const auto& entry : fs::directory_iterator(tests_dir)) {
            if (entry.path().extension() == ".in") inputs.push_back(entry.path());
        }
    }
    std::sort(inputs.begin(), inputs.end());
    for (const auto& in_path : inputs) {
        fs::path out_path = in_path;
        out_path.replace_extension(".out");
        auto slurp = [](const fs::path& p) {
            std::ifstream f(p, std::ios::binary);
            std::ostringstream ss;
            ss << f.rdbuf();
            return ss.str();
        };
        spec.test_cases.push_back(
            ProcessTestCase{slurp(in_path), slurp(out_path)});
    }
    spec.validate();
    return spec;
}

}  // namespace prism::exec
