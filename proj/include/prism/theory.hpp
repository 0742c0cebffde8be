#pragma once

#include <stdexcept>
#include <vector>

// Closed-form reference results for the multi-agent gain decomposition:
// coverage curves, binary-channel information quantities, voting and
// selection bounds, and the token cost model. Everything here is a pure
// function; the montecarlo module checks these against simulation.

namespace prism::theory {

/// Thrown when a requested pairwise correlation cannot be realized by a
/// Bernoulli pair with the given marginals.
class InfeasibleCorrelationError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Binary feedback channel: prior success rate plus false-positive /
/// false-negative rates of the verdict.
struct ChannelSpec {
    double prior_p = 0.5;  // P(Q = 1), in (0,1)
    double fp_rate = 0.0;  // P(verdict = correct | Q = 0), in [0,1)
    double fn_rate = 0.0;  // P(verdict = incorrect | Q = 1), in [0,1)

    void validate() const;
};

/// Exact information-theoretic summary of a ChannelSpec (all entropies in
/// bits, log base 2).
struct ChannelAnalysis {
    double entropy_q = 0.0;           // H(Q)
    double mi = 0.0;                  // I(Q; verdict)
    double posterior_correct = 0.0;   // P(Q=1 | verdict = correct)
    double posterior_incorrect = 0.0; // P(Q=1 | verdict = incorrect)
    double cond_entropy = 0.0;        // H(Q | verdict)
    double bayes_error = 0.0;         // minimal error of any decoder
};

/// Inputs to the closed-form performance bound.
struct BoundInputs {
    double baseline_p = 0.4;     // single-agent success probability, in (0,1)
    int k_proposers = 3;         // >= 1
    double reviewer_error = 0.2; // in (0, 0.5)
    int synth_iters = 3;         // >= 1
    double rho_bar = 0.0;        // average pairwise success correlation

    void validate() const;
};

/// Decomposition of the gain over baseline into exploration, information
/// and aggregation terms, together with the multiplicative identity
/// total_gain + baseline = coverage * selection.
struct GainBreakdown {
    double coverage = 0.0;
    double selection = 0.0;
    double g_explore = 0.0;
    double g_info = 0.0;
    double g_aggr = 0.0;
    double total_gain = 0.0;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Coverage of k independent agents with success rate p: 1 - (1-p)^k.
double iid_coverage(double p, int k);

/// Bonferroni lower bound on coverage for equicorrelated agents:
/// clamp(k*p - C(k,2)*p^2 - C(k,2)*rho_bar*p*(1-p), 0, 1).
/// Negative rho_bar raises the bound relative to rho_bar = 0.
double diversity_coverage_lower_bound(double p, int k, double rho_bar);

/// The rho_bar-dependent term of the bound above,
/// -C(k,2)*rho_bar*p*(1-p); positive for rho_bar < 0.
double diversity_correction(double p, int k, double rho_bar);

/// Feasible correlation range for a Bernoulli(p1)/Bernoulli(p2) pair
/// (Frechet bounds). For p1 == p2 the lower end is
/// max(-p/(1-p), -(1-p)/p) and the upper end is 1.
struct CorrelationRange {
    double lo;
    double hi;
};
CorrelationRange bernoulli_correlation_range(double p1, double p2);

/// Binary entropy in bits, with 0*log(0) := 0.
double binary_entropy(double p);

/// Exact analysis of the 2x2 joint induced by a ChannelSpec.
ChannelAnalysis channel_analysis(const ChannelSpec& spec);

/// Probability a strict majority of k iid Bernoulli(p_i) votes is correct.
/// Requires odd k; strictly below p_i when p_i < 0.5 and k >= 3.
double vote_accuracy(double p_i, int k);

/// Evidence-based selection efficiency with k-1 reviewers of error rate
/// eps: 1 - eps^(k-1).
double prism_selection_bound(double reviewer_error, int k);

/// Closed-form quality lower bound. Untightened:
///   (1-(1-p)^K) * (1 - eps^(K-1)).
/// Tightened (deterministic re-execution over S iterations):
///   (1-(1-p)^K) * (1 - eps^(K-1+S)).
/// K = 1 has no reviewers; the bound degenerates to p.
double performance_bound(const BoundInputs& inputs, bool tightened);

/// Assemble the gain decomposition from coverage and efficiencies.
GainBreakdown gain_decomposition(double c_k, double eta_star_exec,
                                 double eta_star_text, double eta_actual,
                                 double eta_base, double baseline_p);

/// Ratio of joint gain to the sum of single-dimension gains.
double synergy_coefficient(double joint_gain,
                           const std::vector<double>& individual_gains);

/// Token cost of one run: k proposals, k*(k-1) reviews, t synthesis calls.
long long token_cost(int k, int t, long long c_prop, long long c_rev,
                     long long c_syn);

}  // namespace prism::theory
