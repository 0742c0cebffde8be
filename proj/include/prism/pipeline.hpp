#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prism/exec.hpp"
#include "prism/llm.hpp"
#include "prism/rng.hpp"
#include "prism/simworld.hpp"

// The four-phase orchestrator (Propose -> Execute -> Review -> Synthesize
// with closed-loop validation) plus the baseline aggregators, over either
// the seeded simulated world or a chat-completion backend.

namespace prism::pipeline {

class PipelineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Aggregator { kPrism, kMajorityVote, kRandomSelect, kOracleSelect };
enum class Backend { kSimulated, kLlm, kMockLlm };
enum class Phase { kPropose, kExecute, kReview, kSynthesize };

std::string to_string(Aggregator a);
std::string to_string(Phase p);
Aggregator aggregator_from_string(const std::string& s);
Backend backend_from_string(const std::string& s);

struct TokenLedger {
    long long input_tokens = 0;
    long long output_tokens = 0;
    struct Call {
        Phase phase;
        std::string label;
        long long in = 0;
        long long out = 0;
    };
    std::vector<Call> per_call;

    void add(Phase phase, std::string label, long long in, long long out);
    bool totals_consistent() const;
    long long total() const { return input_tokens + output_tokens; }
};

struct PhaseRecord {
    Phase phase = Phase::kPropose;
    std::vector<std::string> items;
    long long tokens_in = 0;
    long long tokens_out = 0;
    long long wall_ms = 0;
};

struct CandidateRecord {
    int answer_id = -1;
    int quality = 0;
    std::string role;
    std::string text;    // chat backends only
    bool failed = false; // backend failure marker
};

struct PipelineResult {
    CandidateRecord final_answer;
    int quality = 0;
    std::vector<PhaseRecord> trace;
    TokenLedger ledger;
    int iterations = 0;  // synthesize records emitted
    std::string selected_role;
    bool validated = true;   // false when no executor was available
    bool any_correct = false;  // simulated backends: coverage event

    std::string to_json_line(const std::string& task_id,
                             Aggregator aggregator) const;
};

/// Per-call token constants for the simulated backend; only relative
/// frontier shape matters.
struct CostModel {
    long long c_prop = 800;
    long long c_rev = 400;
    long long c_syn = 1200;
};

/// Knobs of the simulated world (Assumptions A1-A6 territory).
struct SimWorldConfig {
    simworld::AgentPopulation population = simworld::AgentPopulation::common(3, 0.4);
    simworld::TaskModel task{0.4, 1, 4};
    simworld::ReviewerModel reviewer{0.2, 1};
    /// Per-iteration synthesizer success when it must rescue (a correct
    /// candidate exists but selection missed it). Negative = default
    /// 1 - reviewer.error_rate.
    double synth_success = -1.0;
    /// Faithful synthesis: a correctly-selected candidate is carried
    /// through verbatim (trajectory grafting), so the first loop
    /// iteration validates. Disable to make every iteration an
    /// independent Bernoulli trial.
    bool synth_faithful = true;
    /// Selection sees execution reports (the execution-passing filter).
    /// Disable to force purely review-driven selection.
    bool selection_uses_reports = true;
    /// Executor available to the synthesize loop; when absent the loop
    /// returns its initial synthesis flagged unvalidated.
    bool has_executor = true;

    double effective_synth_success() const {
        return synth_success >= 0.0 ? synth_success : 1.0 - reviewer.error_rate;
    }
};

struct RunConfig {
    int k_proposers = 3;
    int r_reviewers = 1;
    int s_synth_iters = 3;
    std::vector<llm::RoleSpec> roles = llm::default_roles();
    Aggregator aggregator = Aggregator::kPrism;
    Backend backend = Backend::kSimulated;
    double proposer_temperature = 0.7;
    double synthesis_temperature = 0.0;
    simworld::WorldSeed seed{42, {}};
    SimWorldConfig world;
    CostModel costs;

    void validate() const;
};

/// Outcome of the closed-loop synthesize stage.
struct LoopOutcome {
    bool passed = false;
    int iterations = 0;
};

/// The simulated synthesizer's rescue loop: independent per-iteration
/// success with early return on the first validated pass.
LoopOutcome simulated_synth_loop(double success_prob, int t_max,
                                 rng::SeedStream& stream);

// ---------------------------------------------------------------------------
// Simulated backend
// ---------------------------------------------------------------------------

/// Runs pipeline variants over the simulated world. Construction
/// calibrates the population sampler once; per-task randomness comes from
/// labeled substreams of the config seed, so results are independent of
/// scheduling.
class SimulatedRunner {
public:
    explicit SimulatedRunner(RunConfig config);

    const RunConfig& config() const { return config_; }

    PipelineResult run_task(std::uint64_t task_index) const;
    PipelineResult run_prism(std::uint64_t task_index) const;
    PipelineResult run_self_consistency(std::uint64_t task_index) const;
    PipelineResult run_baseline_select(std::uint64_t task_index,
                                       Aggregator kind) const;

    // Individual phases, exposed for direct testing.
    std::vector<CandidateRecord> propose(rng::SeedStream& task_stream) const;
    std::vector<exec::ExecutionReport> execute_all(
        const std::vector<CandidateRecord>& candidates) const;
    /// reviews[k][j] = verdict of reviewer j on candidate k.
    std::vector<std::vector<int>> review(
        const std::vector<CandidateRecord>& candidates,
        const std::vector<exec::ExecutionReport>& reports,
        rng::SeedStream& task_stream) const;

private:
    RunConfig config_;
    simworld::CorrelatedBernoulliSampler sampler_;
};

// ---------------------------------------------------------------------------
// Chat backend (live or mock)
// ---------------------------------------------------------------------------

struct ChatTask {
    std::string id;
    std::string statement;
    exec::ProcessTaskSpec process;
};

/// Loads every task directory under `root` (sorted by name); each task
/// directory holds task.txt, statement.txt and tests/.
std::vector<ChatTask> load_chat_tasks(const std::string& root);

class ChatRunner {
public:
    ChatRunner(RunConfig config, llm::ChatClient client);

    PipelineResult run_prism(const ChatTask& task) const;

private:
    RunConfig config_;
    llm::ChatClient client_;
};

}  // namespace prism::pipeline
