#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "prism/pipeline.hpp"
#include "prism/rng.hpp"

// Experiment runner: empirical estimates with percentile-bootstrap CIs for
// every closed-form quantity, parameter sweeps, and Pareto frontiers.

namespace prism::montecarlo {

struct EstimateWithCI {
    double point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    long long n = 0;
    double level = 0.95;

    bool covers(double value) const {
        return ci_low <= value && value <= ci_high;
    }
};

/// Percentile bootstrap around the sample mean: `iters` resamples with
/// replacement, interval at the (1-level)/2 and 1-(1-level)/2 quantiles.
EstimateWithCI bootstrap_ci(const std::vector<double>& samples, int iters,
                            double level, rng::SeedStream& stream);

/// Convenience for 0/1 outcomes.
EstimateWithCI bootstrap_ci_bits(const std::vector<std::uint8_t>& bits,
                                 int iters, double level,
                                 rng::SeedStream& stream);

/// Coverage / selection / mean-quality triple with the counted
/// multiplicative identity meanQ = coverage * selection.
struct IdentityEstimate {
    EstimateWithCI mean_quality;
    EstimateWithCI coverage;
    EstimateWithCI selection;  // conditional on coverage
    bool selection_defined = false;  // false when no batch had coverage
    bool identity_exact = false;     // holds exactly as counted ratios
    long long n_tasks = 0;
    long long n_covered = 0;
    long long n_success = 0;
};

IdentityEstimate estimate_identity(const pipeline::RunConfig& config,
                                   long long trials, rng::SeedStream& stream);

/// Frequency of the all-reviewers-reject event on a correct candidate
/// with k-1 reviewers of error rate eps0 (analytic value eps0^(k-1)).
EstimateWithCI estimate_selection_error(int k, double eps0, long long trials,
                                        rng::SeedStream& stream);

/// Frequency of full-loop failure: all k-1 reviewers reject the correct
/// candidate AND all s rescue iterations of the simulated synthesizer
/// (per-iteration success 1-eps0) fail. Analytic value eps0^(k-1+s).
EstimateWithCI estimate_loop_failure(int k, double eps0, int s_iters,
                                     long long trials, rng::SeedStream& stream);

// ---------------------------------------------------------------------------
// Sweeps and frontiers
// ---------------------------------------------------------------------------

/// Named parameter axes; the cartesian product defines the cells.
/// Recognized axis names: K, R, S, p, eps0, rho, M, synth.
struct SweepGrid {
    std::vector<std::pair<std::string, std::vector<double>>> axes;
    long long trials_per_cell = 100000;
};

struct SweepCell {
    std::map<std::string, double> params;
    EstimateWithCI mean_quality;
    double tokens_per_task = 0.0;
    bool failed = false;
    std::string error;
};

/// Applies one cell's parameters onto a base configuration.
pipeline::RunConfig apply_cell_params(const pipeline::RunConfig& base,
                                      const std::map<std::string, double>& params);

/// One row per cell; per-cell failures are recorded and the sweep
/// continues. Deterministic under a fixed seed.
std::vector<SweepCell> sweep(const SweepGrid& grid,
                             const pipeline::RunConfig& base,
                             rng::SeedStream& stream);

void write_sweep_csv(const SweepGrid& grid, const std::vector<SweepCell>& cells,
                     std::ostream& os);

struct FrontierPoint {
    std::string config_id;
    EstimateWithCI mean_quality;
    double token_cost = 0.0;
};

/// Non-dominated subset (cost <=, quality >=, at least one strict),
/// sorted by cost.
std::vector<FrontierPoint> pareto_frontier(std::vector<FrontierPoint> points);

void write_frontier_csv(const std::vector<FrontierPoint>& frontier,
                        std::ostream& os);

}  // namespace prism::montecarlo
