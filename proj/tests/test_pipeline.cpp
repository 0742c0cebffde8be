#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "prism/pipeline.hpp"
#include "prism/theory.hpp"

using namespace prism;
using namespace prism::pipeline;

namespace {

RunConfig standard_config() {
    RunConfig config;  // K=3, R=1, S=3, p=0.4, eps0=0.2 defaults
    config.seed.root_seed = 2024;
    return config;
}

double mean_quality(const SimulatedRunner& runner, long long n) {
    double sum = 0.0;
    for (long long t = 0; t < n; ++t) {
        sum += runner.run_task(static_cast<std::uint64_t>(t)).quality;
    }
    return sum / static_cast<double>(n);
}

// Plurality winner with lowest-id ties over the full multinomial outcome
// space for K samples: brute-force oracle for self-consistency accuracy.
double vote_oracle(const simworld::TaskModel& task, int k) {
    const int ids = task.correct_variants + task.incorrect_variants;
    std::vector<double> prob(static_cast<std::size_t>(ids));
    for (int v = 0; v < ids; ++v) {
        prob[v] = task.is_correct_id(v)
                      ? task.per_problem_p / task.correct_variants
                      : (1 - task.per_problem_p) / task.incorrect_variants;
    }
    double acc = 0.0;
    std::vector<int> outcome(static_cast<std::size_t>(k), 0);
    while (true) {
        double pr = 1.0;
        std::map<int, int> counts;
        for (int draw : outcome) {
            pr *= prob[static_cast<std::size_t>(draw)];
            ++counts[draw];
        }
        int winner = -1, best = 0;
        for (const auto& [id, count] : counts) {
            if (count > best) {
                best = count;
                winner = id;
            }
        }
        if (task.is_correct_id(winner)) acc += pr;
        int pos = 0;
        while (pos < k && ++outcome[static_cast<std::size_t>(pos)] == ids) {
            outcome[static_cast<std::size_t>(pos)] = 0;
            ++pos;
        }
        if (pos == k) break;
    }
    return acc;
}

}  // namespace

TEST_CASE("simulated synth loop: geometric early-return semantics") {
    rng::SeedStream stream(5, "loop");

    // Certain success returns after one iteration.
    for (int i = 0; i < 50; ++i) {
        const auto outcome = simulated_synth_loop(1.0, 3, stream);
        CHECK(outcome.passed);
        CHECK(outcome.iterations == 1);
    }
    // Certain failure burns all iterations.
    for (int i = 0; i < 50; ++i) {
        const auto outcome = simulated_synth_loop(0.0, 4, stream);
        CHECK(!outcome.passed);
        CHECK(outcome.iterations == 4);
    }

    // Pass frequency 1 - 0.5^3 at q = 0.5, S = 3.
    const int n = 100000;
    int passed = 0;
    for (int i = 0; i < n; ++i) {
        if (simulated_synth_loop(0.5, 3, stream).passed) ++passed;
    }
    CHECK(std::abs(passed / double(n) - 0.875) < 0.01);
}

TEST_CASE("propose: coverage frequency and K=1 degenerate case") {
    auto config = standard_config();
    SimulatedRunner runner(config);

    const int n = 100000;
    int covered = 0;
    auto root = config.seed.stream().substream("propose-test");
    for (int t = 0; t < n; ++t) {
        auto task_stream = root.substream(static_cast<std::uint64_t>(t));
        const auto candidates = runner.propose(task_stream);
        REQUIRE(candidates.size() == 3);
        for (const auto& cand : candidates) {
            if (cand.quality == 1) {
                ++covered;
                break;
            }
        }
    }
    CHECK(std::abs(covered / double(n) - 0.784) < 0.005);

    auto single = standard_config();
    single.k_proposers = 1;
    single.world.population = simworld::AgentPopulation::common(1, 0.4);
    SimulatedRunner single_runner(single);
    auto stream = single.seed.stream();
    CHECK(single_runner.propose(stream).size() == 1);
}

TEST_CASE("execute_all: reports align with candidate quality bits") {
    SimulatedRunner runner(standard_config());
    auto stream = standard_config().seed.stream().substream("exec-test");
    for (int t = 0; t < 500; ++t) {
        auto task_stream = stream.substream(static_cast<std::uint64_t>(t));
        const auto candidates = runner.propose(task_stream);
        const auto reports = runner.execute_all(candidates);
        REQUIRE(reports.size() == candidates.size());
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            CHECK(exec::quality_from_report(reports[k]) == candidates[k].quality);
        }
    }
}

TEST_CASE("review: error frequencies and edge configurations") {
    auto config = standard_config();
    config.r_reviewers = 2;
    SimulatedRunner runner(config);

    // Both-reject frequency on correct candidates is eps0^2 = 0.04.
    const int n = 100000;
    int correct_seen = 0, both_rejected = 0;
    auto root = config.seed.stream().substream("review-test");
    for (int t = 0; t < n; ++t) {
        auto task_stream = root.substream(static_cast<std::uint64_t>(t));
        const auto candidates = runner.propose(task_stream);
        const auto reports = runner.execute_all(candidates);
        const auto verdicts = runner.review(candidates, reports, task_stream);
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            REQUIRE(verdicts[k].size() == 2);
            if (candidates[k].quality == 1) {
                ++correct_seen;
                if (verdicts[k][0] == 0 && verdicts[k][1] == 0) ++both_rejected;
            }
        }
        if (correct_seen >= 100000) break;
    }
    CHECK(std::abs(both_rejected / double(correct_seen) - 0.04) < 0.005);

    // eps0 = 0: verdicts equal derived quality.
    auto exact = standard_config();
    exact.world.reviewer.error_rate = 0.0;
    SimulatedRunner exact_runner(exact);
    auto stream2 = exact.seed.stream().substream("exact");
    for (int t = 0; t < 200; ++t) {
        auto task_stream = stream2.substream(static_cast<std::uint64_t>(t));
        const auto candidates = exact_runner.propose(task_stream);
        const auto reports = exact_runner.execute_all(candidates);
        const auto verdicts = exact_runner.review(candidates, reports, task_stream);
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            for (int v : verdicts[k]) CHECK(v == candidates[k].quality);
        }
    }

    // r = 0: empty matrix, review phase effectively skipped.
    auto no_review = standard_config();
    no_review.r_reviewers = 0;
    SimulatedRunner no_review_runner(no_review);
    auto stream3 = no_review.seed.stream();
    const auto candidates = no_review_runner.propose(stream3);
    const auto reports = no_review_runner.execute_all(candidates);
    const auto verdicts = no_review_runner.review(candidates, reports, stream3);
    for (const auto& row : verdicts) CHECK(row.empty());
}

TEST_CASE("run_prism: perfect selection at eps0=0 reaches coverage exactly") {
    auto config = standard_config();
    config.world.reviewer.error_rate = 0.0;
    SimulatedRunner runner(config);
    const int n = 50000;
    const double mq = mean_quality(runner, n);
    const double c3 = theory::iid_coverage(0.4, 3);
    CHECK(std::abs(mq - c3) < 3 * std::sqrt(c3 * (1 - c3) / n));
}

TEST_CASE("run_prism: trace shape and ledger consistency") {
    SimulatedRunner runner(standard_config());
    for (int t = 0; t < 300; ++t) {
        const auto result = runner.run_prism(static_cast<std::uint64_t>(t));

        int proposes = 0, synths = 0;
        Phase prev = Phase::kPropose;
        bool ordered = true;
        for (std::size_t i = 0; i < result.trace.size(); ++i) {
            const auto phase = result.trace[i].phase;
            if (phase == Phase::kPropose) ++proposes;
            if (phase == Phase::kSynthesize) ++synths;
            if (i > 0 && static_cast<int>(phase) < static_cast<int>(prev)) {
                ordered = false;
            }
            prev = phase;
        }
        CHECK(proposes == 1);
        CHECK(synths <= 3);
        CHECK(synths == result.iterations);
        CHECK(ordered);
        CHECK(result.ledger.totals_consistent());
    }
}

TEST_CASE("ledger reproduces the closed-form token cost at R=K-1, full loop") {
    auto config = standard_config();
    config.r_reviewers = 2;  // K-1
    config.world.synth_success = 0.0;  // every rescue fails
    config.world.synth_faithful = true;
    SimulatedRunner runner(config);

    bool checked_full = false;
    for (int t = 0; t < 2000 && !checked_full; ++t) {
        const auto result = runner.run_prism(static_cast<std::uint64_t>(t));
        // Zero-coverage tasks burn all S iterations.
        if (!result.any_correct) {
            REQUIRE(result.iterations == 3);
            const long long expected =
                theory::token_cost(3, 3, config.costs.c_prop, config.costs.c_rev,
                                   config.costs.c_syn);
            CHECK(result.ledger.total() == expected);
            checked_full = true;
        }
    }
    CHECK(checked_full);
}

TEST_CASE("run_prism: all-fail branch returns best effort with S records") {
    auto config = standard_config();
    config.world.synth_success = 0.0;
    config.world.synth_faithful = false;  // even correct selections must rescue
    SimulatedRunner runner(config);
    for (int t = 0; t < 200; ++t) {
        const auto result = runner.run_prism(static_cast<std::uint64_t>(t));
        CHECK(result.quality == 0);
        CHECK(result.iterations == 3);
    }
}

TEST_CASE("run_prism without executor returns unvalidated initial synthesis") {
    auto config = standard_config();
    config.world.has_executor = false;
    SimulatedRunner runner(config);
    const auto result = runner.run_prism(11);
    CHECK(!result.validated);
    CHECK(result.iterations == 1);
}

TEST_CASE("self-consistency: binomial regime matches the vote oracle") {
    auto config = standard_config();
    config.aggregator = Aggregator::kMajorityVote;
    config.k_proposers = 5;
    config.world.task = simworld::TaskModel{0.3, 1, 1};
    SimulatedRunner runner(config);

    const int n = 100000;
    const double acc = mean_quality(runner, n);
    CHECK(std::abs(acc - 0.16308) < 0.005);
}

TEST_CASE("self-consistency: fragmentation failure mode") {
    auto config = standard_config();
    config.aggregator = Aggregator::kMajorityVote;
    config.k_proposers = 5;
    // Correct mass splits across 4 variants; wrong answers cluster on one.
    config.world.task = simworld::TaskModel{0.6, 4, 1};
    SimulatedRunner runner(config);

    const int n = 100000;
    const double acc = mean_quality(runner, n);
    const double oracle = vote_oracle(config.world.task, 5);
    CHECK(std::abs(acc - oracle) < 0.006);
    CHECK(acc < 0.6);  // below even the single-sample rate
    // And far below what oracle selection over the same 5 samples achieves.
    CHECK(acc < theory::iid_coverage(0.6, 5) - 0.3);
}

TEST_CASE("self-consistency: unanimous candidates win trivially") {
    auto config = standard_config();
    config.aggregator = Aggregator::kMajorityVote;
    config.k_proposers = 5;
    config.world.task = simworld::TaskModel{0.999999, 1, 1};
    SimulatedRunner runner(config);
    const auto result = runner.run_task(1);
    CHECK(result.final_answer.answer_id == 0);
    CHECK(result.quality == 1);
}

TEST_CASE("baseline selectors: oracle hits coverage, random hits 1/K") {
    auto oracle_config = standard_config();
    oracle_config.aggregator = Aggregator::kOracleSelect;
    SimulatedRunner oracle_runner(oracle_config);
    const int n = 100000;
    const double oracle_acc = mean_quality(oracle_runner, n);
    CHECK(std::abs(oracle_acc - 0.784) < 0.005);

    // Random selection on tasks with exactly one correct candidate: 1/3.
    auto random_config = standard_config();
    random_config.aggregator = Aggregator::kRandomSelect;
    SimulatedRunner random_runner(random_config);
    long long exactly_one = 0, hit = 0;
    for (int t = 0; t < n; ++t) {
        const auto result = random_runner.run_task(static_cast<std::uint64_t>(t));
        // Recover the candidate set from the trace-independent propose path.
        auto task_stream = random_config.seed.stream()
                               .substream("task")
                               .substream(static_cast<std::uint64_t>(t));
        const auto candidates = random_runner.propose(task_stream);
        int correct = 0;
        for (const auto& cand : candidates) correct += cand.quality;
        if (correct == 1) {
            ++exactly_one;
            hit += result.quality;
        }
    }
    REQUIRE(exactly_one > 10000);
    CHECK(std::abs(hit / double(exactly_one) - 1.0 / 3.0) < 0.01);
}

TEST_CASE("K=1: every selector degenerates to the single candidate") {
    for (auto aggregator : {Aggregator::kPrism, Aggregator::kRandomSelect,
                            Aggregator::kOracleSelect}) {
        auto config = standard_config();
        config.k_proposers = 1;
        config.world.population = simworld::AgentPopulation::common(1, 0.4);
        config.aggregator = aggregator;
        config.world.reviewer.error_rate = 0.0;
        SimulatedRunner runner(config);
        double sum = 0.0;
        for (int t = 0; t < 20000; ++t) {
            sum += runner.run_task(static_cast<std::uint64_t>(t)).quality;
        }
        CHECK(std::abs(sum / 20000 - 0.4) < 0.015);
    }
}

TEST_CASE("identical seeds give identical results, different seeds differ") {
    auto config = standard_config();
    SimulatedRunner a(config), b(config);
    for (int t = 0; t < 50; ++t) {
        const auto ra = a.run_task(static_cast<std::uint64_t>(t));
        const auto rb = b.run_task(static_cast<std::uint64_t>(t));
        CHECK(ra.to_json_line("t", Aggregator::kPrism) ==
              rb.to_json_line("t", Aggregator::kPrism));
    }
    config.seed.root_seed = 2025;
    SimulatedRunner c(config);
    bool any_diff = false;
    for (int t = 0; t < 50; ++t) {
        any_diff |= a.run_task(static_cast<std::uint64_t>(t)).quality !=
                    c.run_task(static_cast<std::uint64_t>(t)).quality;
    }
    CHECK(any_diff);
}

TEST_CASE("mock chat backend: deterministic end-to-end over canned tasks") {
    const std::string fixtures = FIXTURES_DIR;
    auto run_once = [&fixtures]() {
        RunConfig config;
        config.backend = Backend::kMockLlm;
        config.k_proposers = 3;
        config.r_reviewers = 1;
        config.s_synth_iters = 3;

        llm::EndpointConfig endpoint;
        endpoint.max_retries = 0;
        auto transport = std::make_shared<llm::MockTransport>(
            fixtures + "/mock/transcript.jsonl");
        ChatRunner runner(config, llm::ChatClient(endpoint, transport));

        const auto tasks = load_chat_tasks(fixtures + "/mock/tasks");
        std::string out;
        for (const auto& task : tasks) {
            const auto result = runner.run_prism(task);
            out += result.to_json_line(task.id, Aggregator::kPrism) + "\n";
        }
        return out;
    };

    const std::string first = run_once();
    const std::string second = run_once();
    CHECK(first == second);

    // Quality pattern: t1 passes on iteration 1, t2 needs a refinement
    // round, t3 never validates.
    CHECK(first.find("\"task_id\":\"t1_adder\",\"aggregator\":\"prism\",\"quality\":1") !=
          std::string::npos);
    CHECK(first.find("\"task_id\":\"t2_firstline\",\"aggregator\":\"prism\",\"quality\":1") !=
          std::string::npos);
    CHECK(first.find("\"task_id\":\"t3_seven\",\"aggregator\":\"prism\",\"quality\":0") !=
          std::string::npos);

    std::istringstream lines(first);
    std::string line;
    std::vector<int> iterations;
    while (std::getline(lines, line)) {
        const auto pos = line.find("\"iterations\":");
        REQUIRE(pos != std::string::npos);
        iterations.push_back(std::stoi(line.substr(pos + 13)));
    }
    CHECK(iterations == std::vector<int>{1, 2, 3});
}
