#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "prism/rng.hpp"
#include "prism/theory.hpp"

// Seeded stochastic world: correlated Bernoulli proposers (Gaussian copula),
// noisy reviewers, and synthetic tasks with controllable answer-space
// fragmentation. All samplers draw from explicit SeedStream state.

namespace prism::simworld {

using prism::theory::InfeasibleCorrelationError;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// K proposers with per-agent success rates and a pairwise success
/// correlation matrix (symmetric, unit diagonal, entries within the
/// Bernoulli feasibility range of the marginals).
struct AgentPopulation {
    int k = 1;
    std::vector<double> marginals;         // length k
    std::vector<std::vector<double>> corr; // k x k

    /// Common marginal p and a common off-diagonal correlation.
    static AgentPopulation common(int k, double p, double rho_bar = 0.0);
    /// Heterogeneous marginals with an explicit correlation matrix.
    static AgentPopulation general(std::vector<double> marginals,
                                   std::vector<std::vector<double>> corr);

    void validate() const;

    /// Average off-diagonal correlation.
    double rho_bar() const;
};

/// Reviewer with per-verdict error rate below 0.5 (better than chance).
struct ReviewerModel {
    double error_rate = 0.2;  // in [0, 0.5)
    int count_reviewers = 1;  // >= 0

    void validate() const;
};

/// Synthetic task: marginal success rate and answer-space shape.
/// Correct answers fragment uniformly over `correct_variants` ids
/// (0 .. M-1); incorrect answers over `incorrect_variants` ids
/// (M .. M+I-1). All ids are distinct.
struct TaskModel {
    double per_problem_p = 0.5;
    int correct_variants = 1;    // M >= 1
    int incorrect_variants = 1;  // >= 1

    void validate() const;
    bool is_correct_id(int answer_id) const {
        return answer_id >= 0 && answer_id < correct_variants;
    }
};

/// Reproducibility contract: identical (root_seed, label) pairs reproduce
/// identical draws.
struct WorldSeed {
    std::uint64_t root_seed = 42;
    std::vector<std::string> stream_labels;

    rng::SeedStream stream() const;
};

struct Candidate {
    int answer_id = 0;
    int quality = 0;  // 0/1
};

// ---------------------------------------------------------------------------
// Correlated Bernoulli sampling (Gaussian copula)
// ---------------------------------------------------------------------------

/// Standard normal CDF and quantile.
double normal_cdf(double x);
double normal_quantile(double p);

/// Bivariate standard normal CDF P(X <= h, Y <= k) with correlation rho.
/// Plackett's identity reduces it to a 1-D quadrature over the density.
double bivariate_normal_cdf(double h, double k, double rho);

/// Gaussian correlation that induces a target Bernoulli correlation for
/// marginals (p1, p2), found by bisection (tolerance 1e-6 on the
/// Bernoulli scale). Throws InfeasibleCorrelationError outside the
/// Frechet range.
double gaussian_corr_for_bernoulli(double p1, double p2, double target_rho);

/// Sampler over joint success vectors. Uses a thresholded Gaussian copula
/// in the interior of the feasible region; for k = 2 populations at (or
/// numerically on) the correlation boundary it switches to the exact
/// 4-outcome joint table, which the copula cannot represent stably.
class CorrelatedBernoulliSampler {
public:
    explicit CorrelatedBernoulliSampler(AgentPopulation pop);

    std::vector<std::uint8_t> sample(rng::SeedStream& stream) const;

    const AgentPopulation& population() const { return pop_; }

private:
    AgentPopulation pop_;
    bool use_joint_table_ = false;
    // Copula state: thresholds and Cholesky factor of the Gaussian
    // correlation matrix (row-major lower triangle).
    std::vector<double> thresholds_;
    std::vector<std::vector<double>> chol_;
    // k = 2 joint table: probabilities of (00, 01, 10, 11).
    double table_[4] = {0, 0, 0, 0};
};

/// One joint draw of success bits for the population.
std::vector<std::uint8_t> sample_correlated_successes(
    const CorrelatedBernoulliSampler& sampler, rng::SeedStream& stream);

/// Pearson correlation matrix of 0/1 sample columns. Degenerate
/// (constant) columns make the affected off-diagonal entries NaN.
std::vector<std::vector<double>> empirical_correlation(
    const std::vector<std::vector<std::uint8_t>>& samples);

/// Draw an answer id for a candidate of known quality: uniform over the
/// task's correct variants if is_correct, else uniform over the
/// incorrect variants.
Candidate sample_candidate(const TaskModel& task, bool is_correct,
                           rng::SeedStream& stream);

/// One reviewer verdict: equals true_quality with probability
/// 1 - error_rate.
int sample_review(const ReviewerModel& model, int true_quality,
                  rng::SeedStream& stream);

// ---------------------------------------------------------------------------
// Population round-tripping (CSV)
// ---------------------------------------------------------------------------

/// Writes "i,j,rho" rows of the upper triangle.
void write_correlation_csv(const AgentPopulation& pop, std::ostream& os);
/// Writes "i,p" rows.
void write_marginals_csv(const AgentPopulation& pop, std::ostream& os);
/// Rebuilds a population from the two CSVs above.
AgentPopulation read_population_csv(std::istream& corr_csv,
                                    std::istream& marginals_csv);

}  // namespace prism::simworld
