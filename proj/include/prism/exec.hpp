#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prism/rng.hpp"
#include "prism/theory.hpp"

// Feedback providers spanning the information hierarchy: a deterministic
// synthetic executor (complete verification), a subprocess judge for real
// program tasks, and a channel-noisy pseudo-verifier.

namespace prism::exec {

struct ExecutionReport {
    int success = 0;                  // process ran to completion everywhere
    std::string output;               // captured stdout (last failing or last test)
    std::vector<std::uint8_t> tests;  // per-test pass bits
    std::string error;                // stderr / timeout / spawn diagnostics
    long long wall_ms = 0;

    std::string to_json_line() const;
};

struct VerifierVerdict {
    int is_correct = 0;
    double confidence = 0.0;  // in [0,1]
    std::string errors_text;
};

struct ProcessTestCase {
    std::string input;            // fed to stdin
    std::string expected_stdout;  // compared after trailing-whitespace strip
};

/// A runnable program task. `entry_command` is a shell command with the
/// `{src}` placeholder standing for the candidate source file path;
/// `program_source` holds the task's reference solution (useful for
/// fixtures and smoke runs).
struct ProcessTaskSpec {
    std::string program_source;
    std::string entry_command;
    std::vector<ProcessTestCase> test_cases;
    double timeout_seconds = 60.0;

    void validate() const;
};

/// Fixed report pair keyed by true quality; repeated calls are identical
/// and quality_from_report inverts them exactly.
ExecutionReport execute_synthetic(int true_quality);

/// Runs the candidate once per test case in an isolated child process
/// under a private scratch directory, with a wall-clock timeout and a
/// 1 MiB output cap per stream. Spawn failures come back inside the
/// report, never as exceptions.
ExecutionReport execute_process(const ProcessTaskSpec& spec,
                                const std::string& candidate_source);

/// Judges several candidates against the same task on a bounded worker
/// pool (each run keeps its own scratch directory). Reports are
/// order-aligned with the inputs.
std::vector<ExecutionReport> execute_process_batch(
    const ProcessTaskSpec& spec, const std::vector<std::string>& candidates,
    int max_workers = 4);

/// Q(report) = 1 iff success and every test bit is 1.
int quality_from_report(const ExecutionReport& report);

/// Noisy binary verdict: flips true_quality with the channel's fp/fn
/// rates. Confidence is the channel posterior P(Q=1 | verdict), so it is
/// calibrated by construction.
VerifierVerdict pseudo_verify_simulated(int true_quality,
                                        const theory::ChannelSpec& channel,
                                        rng::SeedStream& stream);

/// Reads a task directory: task.txt ("entry:" and "timeout:" lines, the
/// rest treated as the reference program) plus tests/NN.in + tests/NN.out
/// pairs.
ProcessTaskSpec load_task_dir(const std::string& dir);

/// Judge-style stdout comparison: strip trailing whitespace per line and
/// trailing newlines.
std::string normalize_output(const std::string& text);

}  // namespace prism::exec
