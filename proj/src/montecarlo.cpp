#include "prism/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

namespace prism::montecarlo {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

std::string format_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

EstimateWithCI bootstrap_ci(const std::vector<double>& samples, int iters,
                            double level, rng::SeedStream& stream) {
    if (samples.size() < 2) {
        throw std::domain_error("bootstrap_ci: need at least 2 samples");
    }
    if (iters < 1 || !(level > 0.0 && level < 1.0)) {
        throw std::domain_error("bootstrap_ci: bad iters/level");
    }

    const std::size_t n = samples.size();
    double sum = 0.0;
    for (double s : samples) sum += s;

    EstimateWithCI est;
    est.point = sum / static_cast<double>(n);
    est.n = static_cast<long long>(n);
    est.level = level;

    std::vector<double> means(static_cast<std::size_t>(iters));
    for (auto& mean : means) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += samples[stream.next_below(n)];
        }
        mean = acc / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    const double alpha = 1.0 - level;
    est.ci_low = quantile_sorted(means, alpha / 2.0);
    est.ci_high = quantile_sorted(means, 1.0 - alpha / 2.0);
    return est;
}

EstimateWithCI bootstrap_ci_bits(const std::vector<std::uint8_t>& bits,
                                 int iters, double level,
                                 rng::SeedStream& stream) {
    if (bits.size() < 2) {
        throw std::domain_error("bootstrap_ci: need at least 2 samples");
    }
    if (iters < 1 || !(level > 0.0 && level < 1.0)) {
        throw std::domain_error("bootstrap_ci: bad iters/level");
    }
    // For 0/1 samples the resampled mean is Binomial(n, p-hat)/n exactly,
    // so one binomial draw replaces n index draws per iteration.
    const std::size_t n = bits.size();
    long long ones = 0;
    for (auto b : bits) ones += b;

    EstimateWithCI est;
    est.point = static_cast<double>(ones) / static_cast<double>(n);
    est.n = static_cast<long long>(n);
    est.level = level;

    std::binomial_distribution<long long> binom(static_cast<long long>(n),
                                                est.point);
    std::vector<double> means(static_cast<std::size_t>(iters));
    for (auto& mean : means) {
        mean = static_cast<double>(binom(stream)) / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    const double alpha = 1.0 - level;
    est.ci_low = quantile_sorted(means, alpha / 2.0);
    est.ci_high = quantile_sorted(means, 1.0 - alpha / 2.0);
    return est;
}

IdentityEstimate estimate_identity(const pipeline::RunConfig& config,
                                   long long trials, rng::SeedStream& stream) {
    pipeline::SimulatedRunner runner(config);

    IdentityEstimate est;
    est.n_tasks = trials;
    std::vector<std::uint8_t> quality_bits;
    std::vector<std::uint8_t> coverage_bits;
    std::vector<std::uint8_t> selection_bits;  // conditional on coverage
    quality_bits.reserve(static_cast<std::size_t>(trials));
    coverage_bits.reserve(static_cast<std::size_t>(trials));

    for (long long t = 0; t < trials; ++t) {
        const auto result = runner.run_task(static_cast<std::uint64_t>(t));
        const std::uint8_t q = result.quality == 1 ? 1 : 0;
        const std::uint8_t c = result.any_correct ? 1 : 0;
        if (q == 1 && c == 0) {
            // Success without coverage would break the multiplicative
            // identity; the deterministic-executor branch forbids it.
            throw std::logic_error(
                "estimate_identity: correct output with zero coverage");
        }
        quality_bits.push_back(q);
        coverage_bits.push_back(c);
        if (c == 1) {
            selection_bits.push_back(q);
            ++est.n_covered;
        }
        if (q == 1) ++est.n_success;
    }

    auto ci_stream = stream.substream("bootstrap");
    auto s1 = ci_stream.substream("quality");
    auto s2 = ci_stream.substream("coverage");
    est.mean_quality = bootstrap_ci_bits(quality_bits, 1000, 0.95, s1);
    est.coverage = bootstrap_ci_bits(coverage_bits, 1000, 0.95, s2);
    est.selection_defined = est.n_covered > 0;
    if (est.selection_defined && est.n_covered >= 2) {
        auto s3 = ci_stream.substream("selection");
        est.selection = bootstrap_ci_bits(selection_bits, 1000, 0.95, s3);
    } else if (est.selection_defined) {
        est.selection.point = static_cast<double>(est.n_success) /
                              static_cast<double>(est.n_covered);
        est.selection.n = est.n_covered;
    }

    // meanQ = coverage * selection holds exactly as counted ratios:
    // (succ/n) = (cov/n) * (succ/cov).
    est.identity_exact =
        !est.selection_defined
            ? est.n_success == 0
            : est.n_success ==
                  static_cast<long long>(
                      std::llround(est.selection.point *
                                   static_cast<double>(est.n_covered)));
    return est;
}

EstimateWithCI estimate_selection_error(int k, double eps0, long long trials,
                                        rng::SeedStream& stream) {
    if (k < 2) throw std::domain_error("estimate_selection_error: k >= 2");
    simworld::ReviewerModel reviewer{eps0, k - 1};
    reviewer.validate();

    std::vector<std::uint8_t> all_reject(static_cast<std::size_t>(trials));
    auto draw_stream = stream.substream("draws");
    for (long long t = 0; t < trials; ++t) {
        auto trial_stream = draw_stream.substream(static_cast<std::uint64_t>(t));
        bool rejected_by_all = true;
        for (int j = 0; j < k - 1 && rejected_by_all; ++j) {
            auto rev_stream = trial_stream.substream(static_cast<std::uint64_t>(j));
            rejected_by_all =
                simworld::sample_review(reviewer, 1, rev_stream) == 0;
        }
        all_reject[static_cast<std::size_t>(t)] = rejected_by_all ? 1 : 0;
    }
    auto ci_stream = stream.substream("bootstrap");
    return bootstrap_ci_bits(all_reject, 1000, 0.95, ci_stream);
}

EstimateWithCI estimate_loop_failure(int k, double eps0, int s_iters,
                                     long long trials, rng::SeedStream& stream) {
    if (k < 2) throw std::domain_error("estimate_loop_failure: k >= 2");
    if (s_iters < 1) throw std::domain_error("estimate_loop_failure: s >= 1");
    simworld::ReviewerModel reviewer{eps0, k - 1};
    reviewer.validate();

    std::vector<std::uint8_t> failed(static_cast<std::size_t>(trials));
    auto draw_stream = stream.substream("draws");
    for (long long t = 0; t < trials; ++t) {
        auto trial_stream = draw_stream.substream(static_cast<std::uint64_t>(t));
        bool rejected_by_all = true;
        for (int j = 0; j < k - 1 && rejected_by_all; ++j) {
            auto rev_stream = trial_stream.substream(static_cast<std::uint64_t>(j));
            rejected_by_all =
                simworld::sample_review(reviewer, 1, rev_stream) == 0;
        }
        bool failure = false;
        if (rejected_by_all) {
            // Selection lost the correct candidate; the loop gets s
            // independent rescue attempts.
            auto loop_stream = trial_stream.substream("loop");
            const auto outcome = pipeline::simulated_synth_loop(
                1.0 - eps0, s_iters, loop_stream);
            failure = !outcome.passed;
        }
        failed[static_cast<std::size_t>(t)] = failure ? 1 : 0;
    }
    auto ci_stream = stream.substream("bootstrap");
    return bootstrap_ci_bits(failed, 1000, 0.95, ci_stream);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

pipeline::RunConfig apply_cell_params(
    const pipeline::RunConfig& base,
    const std::map<std::string, double>& params) {
    pipeline::RunConfig config = base;

    auto population_p = [&]() {
        return config.world.population.marginals.empty()
                   ? 0.4
                   : config.world.population.marginals.front();
    };
    auto population_rho = [&]() {
        return config.world.population.k >= 2 ? config.world.population.rho_bar()
                                              : 0.0;
    };

    for (const auto& [name, value] : params) {
        if (name == "K") {
            config.k_proposers = static_cast<int>(value);
            config.world.population = simworld::AgentPopulation::common(
                config.k_proposers, population_p(), population_rho());
        } else if (name == "R") {
            config.r_reviewers = static_cast<int>(value);
            config.world.reviewer.count_reviewers = config.r_reviewers;
        } else if (name == "S") {
            config.s_synth_iters = static_cast<int>(value);
        } else if (name == "p") {
            config.world.population = simworld::AgentPopulation::common(
                config.world.population.k, value, population_rho());
            config.world.task.per_problem_p = value;
        } else if (name == "eps0") {
            config.world.reviewer.error_rate = value;
        } else if (name == "rho") {
            config.world.population = simworld::AgentPopulation::common(
                config.world.population.k, population_p(), value);
        } else if (name == "M") {
            config.world.task.correct_variants = static_cast<int>(value);
        } else if (name == "synth") {
            config.world.synth_success = value;
        } else {
            throw std::invalid_argument("unknown sweep axis '" + name + "'");
        }
    }
    return config;
}

std::vector<SweepCell> sweep(const SweepGrid& grid,
                             const pipeline::RunConfig& base,
                             rng::SeedStream& stream) {
    if (grid.trials_per_cell < 1) {
        throw std::domain_error("sweep: trials_per_cell >= 1");
    }

    // Cartesian product of the axes; an empty grid is the single base cell.
    std::vector<std::map<std::string, double>> cells_params;
    cells_params.emplace_back();
    for (const auto& [name, values] : grid.axes) {
        std::vector<std::map<std::string, double>> expanded;
        for (const auto& cell : cells_params) {
            for (double v : values) {
                auto next = cell;
                next[name] = v;
                expanded.push_back(std::move(next));
            }
        }
        cells_params = std::move(expanded);
    }

    // Cells are independent given their substreams, so they run on a
    // small worker pool; results land in preallocated slots and the
    // output is identical to a sequential run.
    std::vector<SweepCell> cells(cells_params.size());
    const auto root = stream.substream("cell");
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        while (true) {
            const std::size_t index = next.fetch_add(1);
            if (index >= cells_params.size()) return;
            SweepCell& cell = cells[index];
            cell.params = cells_params[index];
            auto cell_stream = root.substream(index);
            try {
                auto config = apply_cell_params(base, cell.params);
                config.seed.root_seed = cell_stream.next_u64();
                pipeline::SimulatedRunner runner(config);

                std::vector<std::uint8_t> quality_bits(
                    static_cast<std::size_t>(grid.trials_per_cell));
                long long total_tokens = 0;
                for (long long t = 0; t < grid.trials_per_cell; ++t) {
                    const auto result =
                        runner.run_task(static_cast<std::uint64_t>(t));
                    quality_bits[static_cast<std::size_t>(t)] =
                        result.quality == 1 ? 1 : 0;
                    total_tokens += result.ledger.total();
                }
                auto ci_stream = cell_stream.substream("bootstrap");
                cell.mean_quality =
                    bootstrap_ci_bits(quality_bits, 1000, 0.95, ci_stream);
                cell.tokens_per_task = static_cast<double>(total_tokens) /
                                       static_cast<double>(grid.trials_per_cell);
            } catch (const std::exception& e) {
                cell.failed = true;
                cell.error = e.what();
            }
        }
    };

    const std::size_t n_workers =
        std::min<std::size_t>(cells_params.size(),
                              std::max(1u, std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return cells;
}

void write_sweep_csv(const SweepGrid& grid, const std::vector<SweepCell>& cells,
                     std::ostream& os) {
    for (const auto& [name, values] : grid.axes) {
        (void)values;
        os << name << ",";
    }
    os << "mean,ci_low,ci_high,tokens,status\n";
    for (const auto& cell : cells) {
        for (const auto& [name, values] : grid.axes) {
            (void)values;
            const auto it = cell.params.find(name);
            os << (it != cell.params.end() ? format_double(it->second) : "")
               << ",";
        }
        if (cell.failed) {
            os << ",,,," << "failed: " << cell.error << "\n";
        } else {
            os << format_double(cell.mean_quality.point) << ","
               << format_double(cell.mean_quality.ci_low) << ","
               << format_double(cell.mean_quality.ci_high) << ","
               << format_double(cell.tokens_per_task) << ",ok\n";
        }
    }
}

std::vector<FrontierPoint> pareto_frontier(std::vector<FrontierPoint> points) {
    if (points.empty()) {
        throw std::domain_error("pareto_frontier: need at least one point");
    }
    auto dominates = [](const FrontierPoint& a, const FrontierPoint& b) {
        const bool no_worse = a.token_cost <= b.token_cost &&
                              a.mean_quality.point >= b.mean_quality.point;
        const bool strict = a.token_cost < b.token_cost ||
                            a.mean_quality.point > b.mean_quality.point;
        return no_worse && strict;
    };

    std::sort(points.begin(), points.end(),
              [](const FrontierPoint& a, const FrontierPoint& b) {
                  if (a.token_cost != b.token_cost) {
                      return a.token_cost < b.token_cost;
                  }
                  return a.mean_quality.point > b.mean_quality.point;
              });

    std::vector<FrontierPoint> frontier;
    for (const auto& point : points) {
        const bool dominated =
            !frontier.empty() && dominates(frontier.back(), point);
        if (!dominated) frontier.push_back(point);
    }
    return frontier;
}

void write_frontier_csv(const std::vector<FrontierPoint>& frontier,
                        std::ostream& os) {
    os << "config,cost,quality\n";
    for (const auto& point : frontier) {
        os << point.config_id << "," << format_double(point.token_cost) << ","
           << format_double(point.mean_quality.point) << "\n";
    }
}

}  // namespace prism::montecarlo
