#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdlib>

#include "prism/exec.hpp"
#include "prism/simworld.hpp"

using namespace prism;
using namespace prism::exec;

namespace {

// MI of an empirical 2x2 joint given as counts.
double empirical_mi(const long long counts[2][2]) {
    long long total = 0;
    for (int q = 0; q < 2; ++q) {
        for (int v = 0; v < 2; ++v) total += counts[q][v];
    }
    double pq[2] = {0, 0}, pv[2] = {0, 0};
    for (int q = 0; q < 2; ++q) {
        for (int v = 0; v < 2; ++v) {
            pq[q] += static_cast<double>(counts[q][v]) / total;
            pv[v] += static_cast<double>(counts[q][v]) / total;
        }
    }
    double mi = 0.0;
    for (int q = 0; q < 2; ++q) {
        for (int v = 0; v < 2; ++v) {
            const double j = static_cast<double>(counts[q][v]) / total;
            if (j > 0) mi += j * std::log2(j / (pq[q] * pv[v]));
        }
    }
    return mi;
}

double empirical_entropy(double p1) {
    double h = 0.0;
    for (double p : {p1, 1 - p1}) {
        if (p > 0) h -= p * std::log2(p);
    }
    return h;
}

ProcessTaskSpec adder_task() {
    ProcessTaskSpec spec;
    spec.entry_command = "sh {src}";
    spec.timeout_seconds = 5.0;
    spec.test_cases = {
        {"1 2\n", "3\n"},
        {"10 32\n", "42\n"},
        {"0 0\n", "0\n"},
    };
    spec.program_source = "read a b\necho $((a + b))\n";
    return spec;
}

}  // namespace

TEST_CASE("synthetic executor is deterministic and inverts to quality") {
    const auto pass = execute_synthetic(1);
    CHECK(pass.success == 1);
    for (auto bit : pass.tests) CHECK(bit == 1);
    CHECK(quality_from_report(pass) == 1);

    const auto fail = execute_synthetic(0);
    CHECK(!fail.error.empty());
    bool some_test_failed = false;
    for (auto bit : fail.tests) some_test_failed |= bit == 0;
    CHECK(some_test_failed);
    CHECK(quality_from_report(fail) == 0);

    for (int i = 0; i < 20; ++i) {
        CHECK(execute_synthetic(1).to_json_line() == pass.to_json_line());
        CHECK(execute_synthetic(0).to_json_line() == fail.to_json_line());
    }
}

TEST_CASE("quality_from_report agrees with the brute-force conjunction") {
    rng::SeedStream stream(31, "reports");
    for (int i = 0; i < 2000; ++i) {
        ExecutionReport report;
        report.success = static_cast<int>(stream.next_below(2));
        const int m = static_cast<int>(stream.next_below(5));
        bool all = true;
        for (int t = 0; t < m; ++t) {
            const auto bit = static_cast<std::uint8_t>(stream.next_below(2));
            report.tests.push_back(bit);
            all = all && bit == 1;
        }
        const int expected = (report.success == 1 && all) ? 1 : 0;
        CHECK(quality_from_report(report) == expected);
    }
    CHECK(quality_from_report({1, "", {1, 1, 1}, "", 0}) == 1);
    CHECK(quality_from_report({1, "", {1, 0}, "", 0}) == 0);
}

TEST_CASE("simulated pseudo-verifier: exact channel frequencies") {
    rng::SeedStream stream(33, "verify");

    // Noiseless channel reduces to execution fidelity.
    const theory::ChannelSpec noiseless{0.4, 0.0, 0.0};
    for (int i = 0; i < 100; ++i) {
        CHECK(pseudo_verify_simulated(1, noiseless, stream).is_correct == 1);
        CHECK(pseudo_verify_simulated(0, noiseless, stream).is_correct == 0);
    }

    const theory::ChannelSpec channel{0.4, 0.05, 0.10};
    const int n = 100000;
    int wrong = 0;
    for (int i = 0; i < n; ++i) {
        if (pseudo_verify_simulated(1, channel, stream).is_correct != 1) ++wrong;
    }
    CHECK(std::abs(wrong / double(n) - 0.10) < 0.005);

    // Confidence is the channel posterior, calibrated by construction.
    const auto analysis = theory::channel_analysis(channel);
    const auto verdict = pseudo_verify_simulated(1, channel, stream);
    const double expected = verdict.is_correct == 1 ? analysis.posterior_correct
                                                    : analysis.posterior_incorrect;
    CHECK(verdict.confidence == doctest::Approx(expected));
}

TEST_CASE("information sufficiency: I(Q; g(e)) equals H(Q) on simulated batches") {
    rng::SeedStream stream(35, "sufficiency");
    long long counts[2][2] = {{0, 0}, {0, 0}};
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const int quality = stream.next_bernoulli(0.37) ? 1 : 0;
        const auto report = execute_synthetic(quality);
        counts[quality][quality_from_report(report)] += 1;
    }
    const double p1 =
        static_cast<double>(counts[1][0] + counts[1][1]) / static_cast<double>(n);
    CHECK(std::abs(empirical_mi(counts) - empirical_entropy(p1)) < 1e-12);
}

TEST_CASE("information hierarchy: text < pseudo-verifier < execution") {
    // Default channels at the common prior.
    const theory::ChannelSpec text{0.4, 0.10, 0.15};
    const theory::ChannelSpec verifier{0.4, 0.05, 0.10};
    const double i_text = theory::channel_analysis(text).mi;
    const double i_verifier = theory::channel_analysis(verifier).mi;
    const double i_exec = theory::binary_entropy(0.4);
    CHECK(i_text < i_verifier);
    CHECK(i_verifier < i_exec);
}

TEST_CASE("normalize_output strips trailing whitespace and blank tail lines") {
    CHECK(normalize_output("42\n") == "42");
    CHECK(normalize_output("42  \n\n") == "42");
    CHECK(normalize_output("a \t\r\nb\r\n") == "a\nb");
    CHECK(normalize_output("a\n\nb\n\n\n") == "a\n\nb");
    CHECK(normalize_output("") == "");
}

TEST_CASE("process executor: passing candidate") {
    const auto spec = adder_task();
    const auto report = execute_process(spec, spec.program_source);
    CHECK(report.success == 1);
    REQUIRE(report.tests.size() == 3);
    for (auto bit : report.tests) CHECK(bit == 1);
    CHECK(quality_from_report(report) == 1);
}

TEST_CASE("process executor: wrong answer on the middle test") {
    const auto spec = adder_task();
    // Correct except when the sum is 42.
    const std::string candidate =
        "read a b\ns=$((a + b))\nif [ $s -eq 42 ]; then echo 41; else echo $s; fi\n";
    const auto report = execute_process(spec, candidate);
    CHECK(report.success == 0);
    REQUIRE(report.tests.size() == 3);
    CHECK(report.tests[0] == 1);
    CHECK(report.tests[1] == 0);
    CHECK(report.tests[2] == 1);
    CHECK(quality_from_report(report) == 0);
}

TEST_CASE("process executor: deterministic for deterministic candidates") {
    const auto spec = adder_task();
    const auto a = execute_process(spec, spec.program_source);
    const auto b = execute_process(spec, spec.program_source);
    CHECK(a.success == b.success);
    CHECK(a.tests == b.tests);
}

TEST_CASE("concurrent stdin-reading candidates see EOF promptly") {
    // Candidates that read stdin to EOF must not hang on pipe ends
    // leaked into sibling children by concurrent spawns.
    ProcessTaskSpec spec;
    spec.entry_command = "sh {src}";
    spec.timeout_seconds = 5.0;
    spec.test_cases = {{"alpha\nbeta\n", "alpha\nbeta\n"}};
    const std::vector<std::string> candidates(4, "cat\n");

    const auto start = std::chrono::steady_clock::now();
    const auto reports = execute_process_batch(spec, candidates, 4);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    for (const auto& report : reports) CHECK(quality_from_report(report) == 1);
    CHECK(elapsed < 2.5);  // the leak shows up as a full 5 s timeout
}

TEST_CASE("batch judging keeps reports order-aligned across workers") {
    const auto spec = adder_task();
    std::vector<std::string> candidates = {
        spec.program_source,            // pass
        "read a b\necho $((a - b))\n",  // fail
        "read a b\necho $((b + a))\n",  // pass
        "echo nonsense\n",              // fail
    };
    const auto reports = execute_process_batch(spec, candidates, 4);
    REQUIRE(reports.size() == 4);
    CHECK(quality_from_report(reports[0]) == 1);
    CHECK(quality_from_report(reports[1]) == 0);
    CHECK(quality_from_report(reports[2]) == 1);
    CHECK(quality_from_report(reports[3]) == 0);
}

TEST_CASE("process executor: timeout is reported, not thrown") {
    ProcessTaskSpec spec;
    spec.entry_command = "sh {src}";
    spec.timeout_seconds = 0.3;
    spec.test_cases = {{"", "done\n"}};
    const auto report = execute_process(spec, "while true; do :; done\n");
    CHECK(report.success == 0);
    CHECK(report.tests == std::vector<std::uint8_t>{0});
    CHECK(report.error.find("timeout") != std::string::npos);
}

TEST_CASE("process executor: closed stdio does not dodge the deadline") {
    ProcessTaskSpec spec;
    spec.entry_command = "sh {src}";
    spec.timeout_seconds = 0.3;
    spec.test_cases = {{"", "done\n"}};
    // Drops its pipes immediately, then lingers.
    const auto start = std::chrono::steady_clock::now();
    const auto report =
        execute_process(spec, "exec >/dev/null 2>&1\nsleep 30\n");
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    CHECK(report.success == 0);
    CHECK(report.error.find("timeout") != std::string::npos);
    CHECK(elapsed < 5.0);
}

TEST_CASE("process executor: stderr of the failing test lands in error") {
    ProcessTaskSpec spec;
    spec.entry_command = "sh {src}";
    spec.timeout_seconds = 5.0;
    spec.test_cases = {{"", "ok\n"}};
    const auto report =
        execute_process(spec, "echo boom >&2\nexit 3\n");
    CHECK(report.success == 0);
    CHECK(report.error.find("boom") != std::string::npos);
}

TEST_CASE("process executor: spawn failure comes back inside the report") {
    const char* old_tmpdir = std::getenv("TMPDIR");
    setenv("TMPDIR", "/nonexistent-prism-scratch", 1);
    const auto spec = adder_task();
    const auto report = execute_process(spec, spec.program_source);
    if (old_tmpdir) {
        setenv("TMPDIR", old_tmpdir, 1);
    } else {
        unsetenv("TMPDIR");
    }
    CHECK(report.success == 0);
    CHECK(report.error.find("spawn failure") != std::string::npos);
}

TEST_CASE("task directory loader") {
    const std::string dir = std::string(FIXTURES_DIR) + "/tasks/t1_adder";
    const auto spec = load_task_dir(dir);
    CHECK(spec.entry_command == "sh {src}");
    CHECK(spec.timeout_seconds == doctest::Approx(5.0));
    REQUIRE(spec.test_cases.size() == 2);
    CHECK(spec.test_cases[0].input == "1 2\n");
    CHECK(spec.test_cases[0].expected_stdout == "3\n");
    CHECK(!spec.program_source.empty());

    // The reference program passes its own tests.
    const auto report = execute_process(spec, spec.program_source);
    CHECK(report.success == 1);
}

TEST_CASE("validation errors") {
    ProcessTaskSpec bad;
    bad.entry_command = "sh {src}";
    bad.timeout_seconds = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::domain_error);  // no tests
    bad.test_cases = {{"", ""}};
    bad.timeout_seconds = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::domain_error);
}
