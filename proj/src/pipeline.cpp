#include "prism/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace prism::pipeline {

namespace fs = std::filesystem;

std::string to_string(Aggregator a) {
    switch (a) {
        case Aggregator::kPrism: return "prism";
        case Aggregator::kMajorityVote: return "majority_vote";
        case Aggregator::kRandomSelect: return "random_select";
        case Aggregator::kOracleSelect: return "oracle_select";
    }
    return "?";
}

std::string to_string(Phase p) {
    switch (p) {
        case Phase::kPropose: return "propose";
        case Phase::kExecute: return "execute";
        case Phase::kReview: return "review";
        case Phase::kSynthesize: return "synthesize";
    }
    return "?";
}

Aggregator aggregator_from_string(const std::string& s) {
    if (s == "prism") return Aggregator::kPrism;
    if (s == "majority_vote") return Aggregator::kMajorityVote;
    if (s == "random_select") return Aggregator::kRandomSelect;
    if (s == "oracle_select") return Aggregator::kOracleSelect;
    throw std::invalid_argument("unknown aggregator '" + s + "'");
}

Backend backend_from_string(const std::string& s) {
    if (s == "simulated") return Backend::kSimulated;
    if (s == "llm") return Backend::kLlm;
    if (s == "mock" || s == "mock_llm") return Backend::kMockLlm;
    throw std::invalid_argument("unknown backend '" + s + "'");
}

void TokenLedger::add(Phase phase, std::string label, long long in,
                      long long out) {
    input_tokens += in;
    output_tokens += out;
    per_call.push_back(Call{phase, std::move(label), in, out});
}

bool TokenLedger::totals_consistent() const {
    long long in = 0, out = 0;
    for (const auto& call : per_call) {
        in += call.in;
        out += call.out;
    }
    return in == input_tokens && out == output_tokens;
}

std::string PipelineResult::to_json_line(const std::string& task_id,
                                         Aggregator aggregator) const {
    nlohmann::ordered_json j;
    j["task_id"] = task_id;
    j["aggregator"] = to_string(aggregator);
    j["quality"] = quality;
    j["tokens_in"] = ledger.input_tokens;
    j["tokens_out"] = ledger.output_tokens;
    j["iterations"] = iterations;
    j["selected_role"] = selected_role;
    return j.dump();
}

void RunConfig::validate() const {
    if (k_proposers < 1) throw std::domain_error("RunConfig: k_proposers >= 1");
    if (r_reviewers < 0) throw std::domain_error("RunConfig: r_reviewers >= 0");
    if (s_synth_iters < 1) throw std::domain_error("RunConfig: s_synth_iters >= 1");
    if (backend != Backend::kSimulated &&
        roles.size() != static_cast<std::size_t>(k_proposers)) {
        throw std::domain_error(
            "RunConfig: chat backends need one role per proposer");
    }
    world.population.validate();
    world.task.validate();
    world.reviewer.validate();
}

LoopOutcome simulated_synth_loop(double success_prob, int t_max,
                                 rng::SeedStream& stream) {
    LoopOutcome outcome;
    for (int t = 1; t <= t_max; ++t) {
        outcome.iterations = t;
        if (stream.next_bernoulli(success_prob)) {
            outcome.passed = true;
            return outcome;
        }
    }
    outcome.passed = false;
    return outcome;
}

// ---------------------------------------------------------------------------
// SimulatedRunner
// ---------------------------------------------------------------------------

namespace {

std::string role_label(const RunConfig& config, int index) {
    if (index < static_cast<int>(config.roles.size())) {
        return config.roles[static_cast<std::size_t>(index)].label;
    }
    return "agent_" + std::to_string(index);
}

}  // namespace

SimulatedRunner::SimulatedRunner(RunConfig config)
    : config_(std::move(config)), sampler_(config_.world.population) {
    config_.validate();
    if (config_.world.population.k != config_.k_proposers &&
        config_.aggregator != Aggregator::kMajorityVote) {
        throw std::domain_error(
            "SimulatedRunner: population size must match k_proposers");
    }
}

std::vector<CandidateRecord> SimulatedRunner::propose(
    rng::SeedStream& task_stream) const {
    auto propose_stream = task_stream.substream("propose");
    const auto bits = sampler_.sample(propose_stream);
    std::vector<CandidateRecord> candidates;
    candidates.reserve(bits.size());
    for (std::size_t k = 0; k < bits.size(); ++k) {
        auto answer_stream = propose_stream.substream(k);
        const auto drawn =
            simworld::sample_candidate(config_.world.task, bits[k] == 1,
                                       answer_stream);
        CandidateRecord cand;
        cand.answer_id = drawn.answer_id;
        cand.quality = drawn.quality;
        cand.role = role_label(config_, static_cast<int>(k));
        candidates.push_back(std::move(cand));
    }
    return candidates;
}

std::vector<exec::ExecutionReport> SimulatedRunner::execute_all(
    const std::vector<CandidateRecord>& candidates) const {
    if (candidates.empty()) {
        throw PipelineError("execute_all: no candidates");
    }
    std::vector<exec::ExecutionReport> reports;
    reports.reserve(candidates.size());
    for (const auto& cand : candidates) {
        reports.push_back(exec::execute_synthetic(cand.quality));
    }
    return reports;
}

std::vector<std::vector<int>> SimulatedRunner::review(
    const std::vector<CandidateRecord>& candidates,
    const std::vector<exec::ExecutionReport>& reports,
    rng::SeedStream& task_stream) const {
    (void)reports;  // reviewers read the evidence; the error model already
                    // conditions on it
    auto review_stream = task_stream.substream("review");
    const int k_total = static_cast<int>(candidates.size());
    std::vector<std::vector<int>> verdicts(candidates.size());
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        auto cand_stream = review_stream.substream(k);
        verdicts[k].reserve(static_cast<std::size_t>(config_.r_reviewers));
        for (int j = 0; j < config_.r_reviewers; ++j) {
            // Round-robin assignment over the other agents, never the
            // proposer itself.
            const int reviewer =
                k_total > 1
                    ? (static_cast<int>(k) + 1 + j % (k_total - 1)) % k_total
                    : 0;
            auto rev_stream =
                cand_stream.substream("reviewer")
                    .substream(static_cast<std::uint64_t>(j))
                    .substream(static_cast<std::uint64_t>(reviewer));
            verdicts[k].push_back(simworld::sample_review(
                config_.world.reviewer, candidates[k].quality, rev_stream));
        }
    }
    return verdicts;
}

PipelineResult SimulatedRunner::run_task(std::uint64_t task_index) const {
    switch (config_.aggregator) {
        case Aggregator::kPrism: return run_prism(task_index);
        case Aggregator::kMajorityVote: return run_self_consistency(task_index);
        case Aggregator::kRandomSelect:
        case Aggregator::kOracleSelect:
            return run_baseline_select(task_index, config_.aggregator);
    }
    throw PipelineError("run_task: bad aggregator");
}

PipelineResult SimulatedRunner::run_prism(std::uint64_t task_index) const {
    auto task_stream = config_.seed.stream().substream("task").substream(task_index);
    PipelineResult result;

    // Phase 1: propose.
    const auto candidates = propose(task_stream);
    if (candidates.empty()) throw PipelineError("run_prism: zero candidates");
    for (const auto& cand : candidates) {
        result.any_correct = result.any_correct || cand.quality == 1;
        result.ledger.add(Phase::kPropose, "propose/" + cand.role,
                          config_.costs.c_prop / 2,
                          config_.costs.c_prop - config_.costs.c_prop / 2);
    }
    PhaseRecord propose_rec;
    propose_rec.phase = Phase::kPropose;
    for (const auto& cand : candidates) {
        propose_rec.items.push_back(cand.role + ": answer " +
                                    std::to_string(cand.answer_id));
    }
    propose_rec.tokens_in = result.ledger.input_tokens;
    propose_rec.tokens_out = result.ledger.output_tokens;
    result.trace.push_back(std::move(propose_rec));

    // Phase 2: execute.
    const auto reports = execute_all(candidates);
    PhaseRecord exec_rec;
    exec_rec.phase = Phase::kExecute;
    for (const auto& report : reports) {
        exec_rec.items.push_back(report.to_json_line());
    }
    result.trace.push_back(std::move(exec_rec));

    // Phase 3: review.
    const auto verdicts = review(candidates, reports, task_stream);
    PhaseRecord review_rec;
    review_rec.phase = Phase::kReview;
    for (std::size_t k = 0; k < verdicts.size(); ++k) {
        std::ostringstream os;
        os << "candidate " << k << ":";
        for (int v : verdicts[k]) os << ' ' << v;
        review_rec.items.push_back(os.str());
        result.ledger.add(Phase::kReview, "review/cand" + std::to_string(k),
                          static_cast<long long>(verdicts[k].size()) *
                              (config_.costs.c_rev / 2),
                          static_cast<long long>(verdicts[k].size()) *
                              (config_.costs.c_rev - config_.costs.c_rev / 2));
        review_rec.tokens_in += static_cast<long long>(verdicts[k].size()) *
                                (config_.costs.c_rev / 2);
        review_rec.tokens_out += static_cast<long long>(verdicts[k].size()) *
                                 (config_.costs.c_rev - config_.costs.c_rev / 2);
    }
    result.trace.push_back(std::move(review_rec));

    // Selection: most positive verdicts among execution-passing candidates,
    // ties to the lowest index. Without the report filter (or when nothing
    // passes), rank the full candidate list.
    std::vector<std::size_t> pool;
    if (config_.world.selection_uses_reports) {
        for (std::size_t k = 0; k < reports.size(); ++k) {
            if (exec::quality_from_report(reports[k]) == 1) pool.push_back(k);
        }
    }
    if (pool.empty()) {
        pool.resize(candidates.size());
        for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = k;
    }
    std::size_t selected = pool.front();
    int best_votes = -1;
    for (std::size_t k : pool) {
        const int votes = static_cast<int>(
            std::count(verdicts[k].begin(), verdicts[k].end(), 1));
        if (votes > best_votes) {
            best_votes = votes;
            selected = k;
        }
    }
    result.selected_role = candidates[selected].role;

    // Phase 4: synthesize with closed-loop validation.
    auto synth_stream = task_stream.substream("synthesize");
    const bool selected_correct = candidates[selected].quality == 1;
    const double q_syn = config_.world.effective_synth_success();

    if (!config_.world.has_executor) {
        // No validation available: return the initial synthesis untested.
        CandidateRecord final_cand = candidates[selected];
        result.ledger.add(Phase::kSynthesize, "synthesize/iter1",
                          config_.costs.c_syn / 2,
                          config_.costs.c_syn - config_.costs.c_syn / 2);
        PhaseRecord rec;
        rec.phase = Phase::kSynthesize;
        rec.items.push_back("iteration 1: unvalidated (no executor)");
        rec.tokens_in = config_.costs.c_syn / 2;
        rec.tokens_out = config_.costs.c_syn - config_.costs.c_syn / 2;
        result.trace.push_back(std::move(rec));
        result.iterations = 1;
        result.validated = false;
        result.quality = final_cand.quality;
        result.final_answer = std::move(final_cand);
        return result;
    }

    int final_quality = 0;
    for (int t = 1; t <= config_.s_synth_iters; ++t) {
        result.iterations = t;
        // Synthesize one candidate.
        int out_quality;
        if (config_.world.synth_faithful && selected_correct) {
            out_quality = 1;  // graft the validated candidate through
        } else if (result.any_correct) {
            out_quality = synth_stream.next_bernoulli(q_syn) ? 1 : 0;
        } else {
            out_quality = 0;  // nothing correct to graft from
        }
        result.ledger.add(Phase::kSynthesize, "synthesize/iter" + std::to_string(t),
                          config_.costs.c_syn / 2,
                          config_.costs.c_syn - config_.costs.c_syn / 2);

        // Execute the synthesis and stop on the first pass.
        const auto report = exec::execute_synthetic(out_quality);
        PhaseRecord rec;
        rec.phase = Phase::kSynthesize;
        rec.tokens_in = config_.costs.c_syn / 2;
        rec.tokens_out = config_.costs.c_syn - config_.costs.c_syn / 2;
        const bool passed = exec::quality_from_report(report) == 1;
        std::ostringstream os;
        os << "iteration " << t << ": " << (passed ? "pass" : "fail");
        if (!passed) os << " (" << report.error << ")";
        rec.items.push_back(os.str());
        result.trace.push_back(std::move(rec));

        final_quality = out_quality;
        if (passed) break;
    }

    result.quality = final_quality;
    auto answer_stream = synth_stream.substream("answer");
    const auto drawn = simworld::sample_candidate(config_.world.task,
                                                  final_quality == 1, answer_stream);
    result.final_answer.answer_id = drawn.answer_id;
    result.final_answer.quality = final_quality;
    result.final_answer.role = "synthesis";
    return result;
}

PipelineResult SimulatedRunner::run_self_consistency(
    std::uint64_t task_index) const {
    auto task_stream = config_.seed.stream().substream("task").substream(task_index);
    auto propose_stream = task_stream.substream("propose");

    PipelineResult result;
    PhaseRecord propose_rec;
    propose_rec.phase = Phase::kPropose;

    // K independent samples of the same agent on this task.
    std::vector<CandidateRecord> candidates;
    for (int k = 0; k < config_.k_proposers; ++k) {
        auto draw_stream = propose_stream.substream(static_cast<std::uint64_t>(k));
        const bool correct =
            draw_stream.next_bernoulli(config_.world.task.per_problem_p);
        const auto drawn =
            simworld::sample_candidate(config_.world.task, correct, draw_stream);
        CandidateRecord cand;
        cand.answer_id = drawn.answer_id;
        cand.quality = drawn.quality;
        cand.role = "sample_" + std::to_string(k);
        result.any_correct = result.any_correct || cand.quality == 1;
        result.ledger.add(Phase::kPropose, "propose/" + cand.role,
                          config_.costs.c_prop / 2,
                          config_.costs.c_prop - config_.costs.c_prop / 2);
        propose_rec.items.push_back(cand.role + ": answer " +
                                    std::to_string(cand.answer_id));
        candidates.push_back(std::move(cand));
    }
    propose_rec.tokens_in = result.ledger.input_tokens;
    propose_rec.tokens_out = result.ledger.output_tokens;
    result.trace.push_back(std::move(propose_rec));

    // Modal answer id; ties resolve to the lowest id.
    std::map<int, int> counts;
    for (const auto& cand : candidates) ++counts[cand.answer_id];
    int best_id = candidates.front().answer_id;
    int best_count = 0;
    for (const auto& [id, count] : counts) {
        if (count > best_count) {  // map iterates ids ascending
            best_count = count;
            best_id = id;
        }
    }
    for (const auto& cand : candidates) {
        if (cand.answer_id == best_id) {
            result.final_answer = cand;
            break;
        }
    }
    result.quality = result.final_answer.quality;
    result.selected_role = result.final_answer.role;
    result.iterations = 0;
    return result;
}

PipelineResult SimulatedRunner::run_baseline_select(std::uint64_t task_index,
                                                    Aggregator kind) const {
    auto task_stream = config_.seed.stream().substream("task").substream(task_index);
    PipelineResult result;

    const auto candidates = propose(task_stream);
    PhaseRecord propose_rec;
    propose_rec.phase = Phase::kPropose;
    for (const auto& cand : candidates) {
        result.any_correct = result.any_correct || cand.quality == 1;
        result.ledger.add(Phase::kPropose, "propose/" + cand.role,
                          config_.costs.c_prop / 2,
                          config_.costs.c_prop - config_.costs.c_prop / 2);
        propose_rec.items.push_back(cand.role + ": answer " +
                                    std::to_string(cand.answer_id));
    }
    propose_rec.tokens_in = result.ledger.input_tokens;
    propose_rec.tokens_out = result.ledger.output_tokens;
    result.trace.push_back(std::move(propose_rec));

    std::size_t selected = 0;
    if (kind == Aggregator::kOracleSelect) {
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            if (candidates[k].quality == 1) {
                selected = k;
                break;
            }
        }
    } else {
        auto select_stream = task_stream.substream("select");
        selected = static_cast<std::size_t>(
            select_stream.next_below(candidates.size()));
    }

    result.final_answer = candidates[selected];
    result.quality = result.final_answer.quality;
    result.selected_role = result.final_answer.role;
    result.iterations = 0;
    return result;
}

// ---------------------------------------------------------------------------
// ChatRunner
// ---------------------------------------------------------------------------

std::vector<ChatTask> load_chat_tasks(const std::string& root) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());

    std::vector<ChatTask> tasks;
    for (const auto& dir : dirs) {
        ChatTask task;
        task.id = dir.filename().string();
        std::ifstream statement(dir / "statement.txt");
        std::ostringstream ss;
        ss << statement.rdbuf();
        task.statement = ss.str();
        task.process = exec::load_task_dir(dir.string());
        tasks.push_back(std::move(task));
    }
    if (tasks.empty()) {
        throw PipelineError("no task directories under " + root);
    }
    return tasks;
}

ChatRunner::ChatRunner(RunConfig config, llm::ChatClient client)
    : config_(std::move(config)), client_(std::move(client)) {
    config_.validate();
}

PipelineResult ChatRunner::run_prism(const ChatTask& task) const {
    PipelineResult result;

    auto timed_complete = [&](llm::ChatExchange request, Phase phase,
                              const std::string& label) {
        const auto reply = client_.complete(std::move(request));
        result.ledger.add(phase, label, reply.usage.input_tokens,
                          reply.usage.output_tokens);
        return reply;
    };

    // Phase 1: propose, one call per role.
    std::vector<CandidateRecord> candidates;
    PhaseRecord propose_rec;
    propose_rec.phase = Phase::kPropose;
    for (int k = 0; k < config_.k_proposers; ++k) {
        const auto& role = config_.roles[static_cast<std::size_t>(k)];
        CandidateRecord cand;
        cand.role = role.label;
        try {
            llm::ChatExchange request;
            request.messages = llm::render_role_prompt(role, task.statement);
            request.temperature = config_.proposer_temperature;
            request.seed = static_cast<long long>(config_.seed.root_seed);
            const auto reply =
                timed_complete(std::move(request), Phase::kPropose,
                               "propose/" + role.label);
            cand.text = reply.response_text;
            propose_rec.tokens_in += reply.usage.input_tokens;
            propose_rec.tokens_out += reply.usage.output_tokens;
        } catch (const std::exception& e) {
            cand.failed = true;
            cand.text = std::string("<proposal failed: ") + e.what() + ">";
        }
        propose_rec.items.push_back(cand.role +
                                    (cand.failed ? " [failed]" : " [ok]"));
        candidates.push_back(std::move(cand));
    }
    result.trace.push_back(std::move(propose_rec));
    if (std::all_of(candidates.begin(), candidates.end(),
                    [](const CandidateRecord& c) { return c.failed; })) {
        throw PipelineError("run_prism: every proposal call failed");
    }

    // Phase 2: execute every candidate in the sandbox (bounded pool).
    std::vector<std::string> sources;
    for (const auto& cand : candidates) {
        sources.push_back(cand.failed ? std::string() : cand.text);
    }
    auto reports = exec::execute_process_batch(task.process, sources);
    PhaseRecord exec_rec;
    exec_rec.phase = Phase::kExecute;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        if (candidates[k].failed) {
            reports[k] = exec::ExecutionReport{};
            reports[k].success = 0;
            reports[k].error = "proposal unavailable";
            reports[k].tests.assign(task.process.test_cases.size(), 0);
        }
        exec_rec.items.push_back(reports[k].to_json_line());
        exec_rec.wall_ms += reports[k].wall_ms;
    }
    result.trace.push_back(std::move(exec_rec));

    // Phase 3: evidence-based cross-review, r verdicts per candidate.
    std::vector<std::vector<int>> verdict_bits(candidates.size());
    std::vector<std::vector<std::string>> review_texts(candidates.size());
    PhaseRecord review_rec;
    review_rec.phase = Phase::kReview;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        for (int j = 0; j < config_.r_reviewers; ++j) {
            const std::string label =
                "review/cand" + std::to_string(k) + "/rev" + std::to_string(j);
            try {
                llm::ChatExchange request;
                request.messages =
                    llm::render_review_prompt(candidates[k].text, reports[k]);
                request.temperature = 0.0;
                request.seed = static_cast<long long>(config_.seed.root_seed);
                const auto reply =
                    timed_complete(std::move(request), Phase::kReview, label);
                review_rec.tokens_in += reply.usage.input_tokens;
                review_rec.tokens_out += reply.usage.output_tokens;
                review_texts[k].push_back(reply.response_text);
                if (auto verdict = llm::parse_review_verdict(reply.response_text)) {
                    verdict_bits[k].push_back(verdict->is_correct);
                    review_rec.items.push_back(
                        label + ": verdict " + std::to_string(verdict->is_correct));
                } else {
                    // Unparseable review counts as an abstention.
                    review_rec.items.push_back(label + ": abstained");
                }
            } catch (const std::exception& e) {
                review_rec.items.push_back(label + ": failed (" +
                                           std::string(e.what()) + ")");
            }
        }
    }
    result.trace.push_back(std::move(review_rec));

    // Selection mirrors the simulated rule.
    std::vector<std::size_t> pool;
    for (std::size_t k = 0; k < reports.size(); ++k) {
        if (exec::quality_from_report(reports[k]) == 1) pool.push_back(k);
    }
    if (pool.empty()) {
        pool.resize(candidates.size());
        for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = k;
    }
    std::size_t selected = pool.front();
    int best_votes = -1;
    for (std::size_t k : pool) {
        const int votes = static_cast<int>(std::count(
            verdict_bits[k].begin(), verdict_bits[k].end(), 1));
        if (votes > best_votes) {
            best_votes = votes;
            selected = k;
        }
    }
    result.selected_role = candidates[selected].role;

    // Phase 4: synthesize -> execute -> refine loop.
    llm::SynthesisContext ctx;
    ctx.task_statement = task.statement;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        ctx.candidate_texts.push_back(candidates[k].text);
        ctx.reports.push_back(reports[k]);
        ctx.reviews.push_back(review_texts[k]);
    }

    std::string current_text = candidates[selected].text;
    int final_quality = 0;
    for (int t = 1; t <= config_.s_synth_iters; ++t) {
        result.iterations = t;
        PhaseRecord rec;
        rec.phase = Phase::kSynthesize;
        try {
            llm::ChatExchange request;
            request.messages = llm::render_synthesis_prompt(ctx);
            request.temperature = config_.synthesis_temperature;
            request.seed = static_cast<long long>(config_.seed.root_seed);
            const auto reply = timed_complete(
                std::move(request), Phase::kSynthesize,
                "synthesize/iter" + std::to_string(t));
            rec.tokens_in = reply.usage.input_tokens;
            rec.tokens_out = reply.usage.output_tokens;
            current_text = reply.response_text;
        } catch (const std::exception& e) {
            rec.items.push_back("synthesis call failed: " + std::string(e.what()));
            result.trace.push_back(std::move(rec));
            break;
        }

        const auto report = exec::execute_process(task.process, current_text);
        rec.wall_ms = report.wall_ms;
        final_quality = exec::quality_from_report(report);
        rec.items.push_back("iteration " + std::to_string(t) + ": " +
                            (final_quality == 1 ? "pass" : "fail"));
        result.trace.push_back(std::move(rec));
        if (final_quality == 1) break;

        ctx.prior_attempt = current_text;
        ctx.prior_error = report.error.empty() ? report.output : report.error;
    }

    result.quality = final_quality;
    result.final_answer.text = current_text;
    result.final_answer.quality = final_quality;
    result.final_answer.role = "synthesis";
    result.validated = true;
    return result;
}

}  // namespace prism::pipeline
