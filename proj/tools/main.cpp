// prism CLI: theory | simulate | game | pipeline | pareto.
//
// Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.
// Everything is deterministic given --seed; outputs go only to --out (or
// stdout) and the process executor's scratch directory under the system
// temp dir.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "prism/configfile.hpp"
#include "prism/exec.hpp"
#include "prism/game.hpp"
#include "prism/llm.hpp"
#include "prism/montecarlo.hpp"
#include "prism/pipeline.hpp"
#include "prism/simworld.hpp"
#include "prism/theory.hpp"

namespace {

constexpr const char* kVersion = "prism 0.1.0";

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::ostream& open_output(const std::string& out_path, std::ofstream& file) {
    if (out_path.empty() || out_path == "-") return std::cout;
    file.open(out_path);
    if (!file) throw std::runtime_error("cannot open output file: " + out_path);
    return file;
}

// ---------------------------------------------------------------------------
// theory: golden constants as CSV
// ---------------------------------------------------------------------------

int cmd_theory(const std::string& out_path) {
    std::ofstream file;
    std::ostream& os = open_output(out_path, file);

    os << "name,p,k,eps0,s,rho,value\n";
    auto row = [&os](const std::string& name, const std::string& p,
                     const std::string& k, const std::string& eps0,
                     const std::string& s, const std::string& rho, double value) {
        os << name << "," << p << "," << k << "," << eps0 << "," << s << ","
           << rho << "," << fmt(value) << "\n";
    };

    using namespace prism::theory;
    for (int k : {1, 2, 3, 5, 10}) {
        row("iid_coverage", "0.4", std::to_string(k), "", "", "",
            iid_coverage(0.4, k));
    }
    row("binary_entropy", "0.4", "", "", "", "", binary_entropy(0.4));

    const ChannelSpec text_channel{0.4, 0.1, 0.15};
    const auto analysis = channel_analysis(text_channel);
    row("posterior_correct", "0.4", "", "", "", "", analysis.posterior_correct);
    row("mutual_information", "0.4", "", "", "", "", analysis.mi);

    row("vote_accuracy", "0.3", "5", "", "", "", vote_accuracy(0.3, 5));
    row("prism_selection_bound", "", "3", "0.2", "", "",
        prism_selection_bound(0.2, 3));

    const BoundInputs standard{0.4, 3, 0.2, 3, 0.0};
    row("performance_bound", "0.4", "3", "0.2", "", "",
        performance_bound(standard, false));
    row("performance_bound_tightened", "0.4", "3", "0.2", "3", "",
        performance_bound(standard, true));

    row("diversity_correction", "0.76", "3", "", "", "-0.15",
        diversity_correction(0.76, 3, -0.15));
    row("synergy_coefficient", "", "", "", "", "",
        synergy_coefficient(8.6, {5.2, 3.8, 0.8}));
    row("token_cost", "", "3", "", "3", "",
        static_cast<double>(token_cost(3, 3, 800, 400, 1200)));
    return 0;
}

// ---------------------------------------------------------------------------
// simulate: sweep over the simulated world
// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& config_path, std::optional<long long> seed,
                 std::optional<long long> trials, const std::string& out_path) {
    prism::configfile::Config config;
    if (!config_path.empty()) {
        config = prism::configfile::Config::parse_file(config_path);
    }
    auto base = prism::configfile::load_run_config(config);
    auto grid = prism::configfile::load_sweep_grid(config);
    if (grid.axes.empty()) {
        grid.axes.emplace_back("K", std::vector<double>{1, 2, 3});
    }
    if (trials) grid.trials_per_cell = *trials;
    if (seed) base.seed.root_seed = static_cast<std::uint64_t>(*seed);

    prism::rng::SeedStream stream(base.seed.root_seed, "simulate");
    const auto cells = prism::montecarlo::sweep(grid, base, stream);

    std::ofstream file;
    std::ostream& os = open_output(out_path, file);
    prism::montecarlo::write_sweep_csv(grid, cells, os);
    return 0;
}

// ---------------------------------------------------------------------------
// game: verify | dynamics on serialized games
// ---------------------------------------------------------------------------

int cmd_game_verify(const std::string& game_path) {
    std::ifstream in(game_path);
    if (!in) throw std::runtime_error("cannot open game file: " + game_path);
    const auto game = prism::game::read_game(in);
    const auto report = prism::game::verify_exact_potential(game);
    std::cout << "players=" << game.k_players
              << " deviations=" << report.deviations_checked
              << " max_discrepancy=" << report.max_discrepancy.str()
              << " exact_potential=" << (report.pass ? "yes" : "no") << "\n";
    return report.pass ? 0 : 2;
}

int cmd_game_dynamics(const std::string& game_path, long long seed) {
    std::ifstream in(game_path);
    if (!in) throw std::runtime_error("cannot open game file: " + game_path);
    const auto game = prism::game::read_game(in);

    prism::game::Profile initial;
    for (const auto& set : game.strategies) initial.push_back(set.front());
    const auto trace = prism::game::best_response_dynamics(
        game, initial, prism::game::UpdateOrder::kRoundRobin,
        static_cast<std::uint64_t>(seed));

    for (const auto& step : trace.steps) {
        std::cout << "player " << step.player << ": " << step.from_strategy
                  << " -> " << step.to_strategy
                  << " (potential " << step.potential_after.str() << ")\n";
    }
    std::cout << "terminal:";
    for (int s : trace.terminal) std::cout << ' ' << s;
    std::cout << "\nnash=" << (prism::game::is_nash(game, trace.terminal) ? "yes" : "no")
              << " steps=" << trace.steps.size() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// pipeline: batch runs over tasks
// ---------------------------------------------------------------------------

int cmd_pipeline(const std::string& config_path, std::optional<long long> seed,
                 const std::string& tasks, const std::string& out_path,
                 const std::string& backend_flag,
                 const std::string& aggregator_flag,
                 const std::string& transcript_flag) {
    prism::configfile::Config config;
    if (!config_path.empty()) {
        config = prism::configfile::Config::parse_file(config_path);
    }
    auto run = prism::configfile::load_run_config(config);
    if (seed) run.seed.root_seed = static_cast<std::uint64_t>(*seed);
    if (!backend_flag.empty()) {
        run.backend = prism::pipeline::backend_from_string(backend_flag);
    }
    if (!aggregator_flag.empty()) {
        run.aggregator = prism::pipeline::aggregator_from_string(aggregator_flag);
    }

    std::ofstream file;
    std::ostream& os = open_output(out_path, file);

    if (run.backend == prism::pipeline::Backend::kSimulated) {
        long long n_tasks = 1000;
        try {
            n_tasks = std::stoll(tasks);
        } catch (const std::exception&) {
            throw std::invalid_argument(
                "simulated backend expects --tasks <count>, got '" + tasks + "'");
        }
        prism::pipeline::SimulatedRunner runner(run);
        for (long long t = 0; t < n_tasks; ++t) {
            const auto result = runner.run_task(static_cast<std::uint64_t>(t));
            os << result.to_json_line("task_" + std::to_string(t),
                                      run.aggregator)
               << "\n";
        }
        return 0;
    }

    // Chat backends consume a task directory.
    const auto chat_tasks = prism::pipeline::load_chat_tasks(tasks);
    prism::llm::EndpointConfig endpoint;
    endpoint.base_url = config.get_string("llm.base_url", endpoint.base_url);
    if (const char* base_override = std::getenv("PRISM_BASE_URL")) {
        endpoint.base_url = base_override;
    }
    endpoint.model_name = config.get_string("llm.model", endpoint.model_name);
    endpoint.timeout_seconds =
        config.get_double("llm.timeout_seconds", endpoint.timeout_seconds);
    endpoint.max_retries =
        static_cast<int>(config.get_int("llm.max_retries", endpoint.max_retries));

    std::shared_ptr<prism::llm::Transport> transport;
    if (run.backend == prism::pipeline::Backend::kMockLlm) {
        std::string transcript = !transcript_flag.empty()
                                     ? transcript_flag
                                     : config.get_string("llm.mock_transcript", "");
        if (transcript.empty()) {
            throw std::invalid_argument(
                "mock backend needs llm.mock_transcript in the config or "
                "--transcript");
        }
        transport = std::make_shared<prism::llm::MockTransport>(transcript);
    } else {
        transport = prism::llm::make_http_transport(endpoint);
    }

    prism::llm::ChatClient client(endpoint, transport);
    prism::pipeline::ChatRunner runner(run, std::move(client));
    for (const auto& task : chat_tasks) {
        const auto result = runner.run_prism(task);
        os << result.to_json_line(task.id, run.aggregator) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// pareto: frontier filter over cost/quality CSV
// ---------------------------------------------------------------------------

int cmd_pareto(const std::string& in_path, const std::string& out_path) {
    std::ifstream in(in_path);
    if (!in) throw std::runtime_error("cannot open points file: " + in_path);

    std::vector<prism::montecarlo::FrontierPoint> points;
    std::string line;
    std::getline(in, line);  // header: config,cost,quality
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        prism::montecarlo::FrontierPoint point;
        std::string cost_text, quality_text;
        if (!std::getline(row, point.config_id, ',') ||
            !std::getline(row, cost_text, ',') ||
            !std::getline(row, quality_text, ',')) {
            throw std::runtime_error("points CSV: bad row '" + line + "'");
        }
        point.token_cost = std::stod(cost_text);
        point.mean_quality.point = std::stod(quality_text);
        points.push_back(std::move(point));
    }

    const auto frontier = prism::montecarlo::pareto_frontier(std::move(points));
    std::ofstream file;
    std::ostream& os = open_output(out_path, file);
    prism::montecarlo::write_frontier_csv(frontier, os);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent reasoning engine: closed-form gain theory, "
                 "seeded simulation, potential-game dynamics, and the "
                 "propose/execute/review/synthesize pipeline."};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, out_path, tasks = "1000";
    std::optional<long long> seed, trials;
    std::string backend_flag, aggregator_flag, transcript_flag;
    std::string game_path;
    long long game_seed = 0;
    std::string points_path;

    auto* theory = app.add_subcommand("theory", "print golden analytic values as CSV");
    theory->add_option("--out", out_path, "output file (default stdout)");

    auto* simulate =
        app.add_subcommand("simulate", "sweep the simulated world, emit CSV");
    simulate->add_option("--config", config_path, "config file");
    simulate->add_option("--seed", seed, "override root seed");
    simulate->add_option("--trials", trials, "trials per cell");
    simulate->add_option("--out", out_path, "output file (default stdout)");

    auto* game = app.add_subcommand("game", "potential game utilities");
    game->require_subcommand(1);
    auto* verify = game->add_subcommand("verify", "check the exact-potential property");
    verify->add_option("game_file", game_path, "serialized game")->required();
    auto* dynamics = game->add_subcommand("dynamics", "run best-response dynamics");
    dynamics->add_option("game_file", game_path, "serialized game")->required();
    dynamics->add_option("--seed", game_seed, "seed for random update order");

    auto* pipeline = app.add_subcommand("pipeline", "run the multi-agent pipeline");
    pipeline->add_option("--config", config_path, "config file");
    pipeline->add_option("--seed", seed, "override root seed");
    pipeline->add_option("--tasks", tasks, "task count (simulated) or task dir (chat)");
    pipeline->add_option("--out", out_path, "results JSONL (default stdout)");
    pipeline->add_option("--backend", backend_flag, "simulated | llm | mock");
    pipeline->add_option("--aggregator", aggregator_flag,
                         "prism | majority_vote | random_select | oracle_select");
    pipeline->add_option("--transcript", transcript_flag,
                         "mock transport transcript (JSONL)");

    auto* pareto = app.add_subcommand("pareto", "frontier filter over cost/quality points");
    pareto->add_option("points_file", points_path, "CSV: config,cost,quality")->required();
    pareto->add_option("--out", out_path, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Help/version requests exit 0; every parse problem is a
        // validation error.
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (theory->parsed()) return cmd_theory(out_path);
        if (simulate->parsed()) return cmd_simulate(config_path, seed, trials, out_path);
        if (game->parsed()) {
            if (verify->parsed()) return cmd_game_verify(game_path);
            if (dynamics->parsed()) return cmd_game_dynamics(game_path, game_seed);
        }
        if (pipeline->parsed()) {
            return cmd_pipeline(config_path, seed, tasks, out_path, backend_flag,
                                aggregator_flag, transcript_flag);
        }
        if (pareto->parsed()) return cmd_pareto(points_path, out_path);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
