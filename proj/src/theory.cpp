#include "prism/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace prism::theory {

namespace {

double log2_safe(double x) { return std::log2(x); }

// p*log2(p) with the 0*log(0) := 0 convention.
double plog2p(double p) { return p > 0.0 ? p * log2_safe(p) : 0.0; }

double choose2(int k) { return 0.5 * static_cast<double>(k) * (k - 1); }

double binomial_coefficient(int n, int j) {
    double c = 1.0;
    for (int i = 1; i <= j; ++i) {
        c *= static_cast<double>(n - j + i) / static_cast<double>(i);
    }
    return c;
}

}  // namespace

void ChannelSpec::validate() const {
    if (!(prior_p > 0.0 && prior_p < 1.0)) {
        throw std::domain_error("ChannelSpec: prior_p must lie in (0,1)");
    }
    if (!(fp_rate >= 0.0 && fp_rate < 1.0)) {
        throw std::domain_error("ChannelSpec: fp_rate must lie in [0,1)");
    }
    if (!(fn_rate >= 0.0 && fn_rate < 1.0)) {
        throw std::domain_error("ChannelSpec: fn_rate must lie in [0,1)");
    }
    if (!(fp_rate + (1.0 - fn_rate) > 0.0)) {
        throw std::domain_error("ChannelSpec: the 'correct' verdict has zero mass");
    }
}

void BoundInputs::validate() const {
    if (!(baseline_p > 0.0 && baseline_p < 1.0)) {
        throw std::domain_error("BoundInputs: baseline_p must lie in (0,1)");
    }
    if (k_proposers < 1) {
        throw std::domain_error("BoundInputs: k_proposers must be >= 1");
    }
    if (!(reviewer_error > 0.0 && reviewer_error < 0.5)) {
        throw std::domain_error(
            "BoundInputs: reviewer_error must lie in (0, 0.5)");
    }
    if (synth_iters < 1) {
        throw std::domain_error("BoundInputs: synth_iters must be >= 1");
    }
    if (!(rho_bar >= -1.0 && rho_bar <= 1.0)) {
        throw std::domain_error("BoundInputs: rho_bar must lie in [-1,1]");
    }
}

double iid_coverage(double p, int k) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("iid_coverage: p must lie in (0,1)");
    }
    if (k < 1) {
        throw std::domain_error("iid_coverage: k must be >= 1");
    }
    return 1.0 - std::pow(1.0 - p, k);
}

CorrelationRange bernoulli_correlation_range(double p1, double p2) {
    const double denom = std::sqrt(p1 * (1.0 - p1) * p2 * (1.0 - p2));
    const double p11_lo = std::max(0.0, p1 + p2 - 1.0);
    const double p11_hi = std::min(p1, p2);
    return {(p11_lo - p1 * p2) / denom, (p11_hi - p1 * p2) / denom};
}

double diversity_correction(double p, int k, double rho_bar) {
    return -choose2(k) * rho_bar * p * (1.0 - p);
}

double diversity_coverage_lower_bound(double p, int k, double rho_bar) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error(
            "diversity_coverage_lower_bound: p must lie in (0,1)");
    }
    if (k < 2) {
        throw std::domain_error(
            "diversity_coverage_lower_bound: k must be >= 2");
    }
    const CorrelationRange range = bernoulli_correlation_range(p, p);
    if (rho_bar < range.lo || rho_bar > range.hi) {
        std::ostringstream msg;
        msg << "rho_bar " << rho_bar << " infeasible for Bernoulli(" << p
            << ") pairs; feasible range is [" << range.lo << ", " << range.hi
            << "]";
        throw InfeasibleCorrelationError(msg.str());
    }
    const double raw = static_cast<double>(k) * p - choose2(k) * p * p +
                       diversity_correction(p, k, rho_bar);
    return std::clamp(raw, 0.0, 1.0);
}

double binary_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::domain_error("binary_entropy: p must lie in [0,1]");
    }
    return -plog2p(p) - plog2p(1.0 - p);
}

ChannelAnalysis channel_analysis(const ChannelSpec& spec) {
    spec.validate();
    const double p = spec.prior_p;

    // Joint over (Q, verdict); verdict index 1 = "correct".
    const double j11 = p * (1.0 - spec.fn_rate);        // Q=1, correct
    const double j10 = p * spec.fn_rate;                // Q=1, incorrect
    const double j01 = (1.0 - p) * spec.fp_rate;        // Q=0, correct
    const double j00 = (1.0 - p) * (1.0 - spec.fp_rate);// Q=0, incorrect

    const double s1 = j11 + j01;  // P(verdict = correct)
    const double s0 = j10 + j00;

    ChannelAnalysis out;
    out.entropy_q = binary_entropy(p);
    out.posterior_correct = s1 > 0.0 ? j11 / s1 : 0.0;
    out.posterior_incorrect = s0 > 0.0 ? j10 / s0 : 0.0;

    // Conditioning on a zero-mass verdict contributes nothing; the rate
    // invariants keep both verdicts on-support anyway.
    out.cond_entropy = 0.0;
    if (s1 > 0.0) out.cond_entropy += s1 * binary_entropy(out.posterior_correct);
    if (s0 > 0.0) out.cond_entropy += s0 * binary_entropy(out.posterior_incorrect);

    out.mi = out.entropy_q - out.cond_entropy;
    out.bayes_error = std::min(j11, j01) + std::min(j10, j00);
    return out;
}

double vote_accuracy(double p_i, int k) {
    if (!(p_i >= 0.0 && p_i <= 1.0)) {
        throw std::domain_error("vote_accuracy: p_i must lie in [0,1]");
    }
    if (k < 1 || k % 2 == 0) {
        throw std::domain_error(
            "vote_accuracy: k must be odd (strict majority); pipeline level "
            "tie rules handle even ensembles");
    }
    const int majority = (k + 1) / 2;
    double acc = 0.0;
    for (int j = majority; j <= k; ++j) {
        acc += binomial_coefficient(k, j) * std::pow(p_i, j) *
               std::pow(1.0 - p_i, k - j);
    }
    return acc;
}

double prism_selection_bound(double reviewer_error, int k) {
    if (!(reviewer_error > 0.0 && reviewer_error < 0.5)) {
        throw std::domain_error(
            "prism_selection_bound: reviewer_error must lie in (0, 0.5)");
    }
    if (k < 2) {
        throw std::domain_error("prism_selection_bound: k must be >= 2");
    }
    return 1.0 - std::pow(reviewer_error, k - 1);
}

double performance_bound(const BoundInputs& inputs, bool tightened) {
    inputs.validate();
    if (inputs.k_proposers == 1) {
        // No reviewers: the selection factor is vacuous and a single agent
        // achieves exactly the baseline.
        return inputs.baseline_p;
    }
    const double coverage = iid_coverage(inputs.baseline_p, inputs.k_proposers);
    const int exponent =
        inputs.k_proposers - 1 + (tightened ? inputs.synth_iters : 0);
    return coverage * (1.0 - std::pow(inputs.reviewer_error, exponent));
}

GainBreakdown gain_decomposition(double c_k, double eta_star_exec,
                                 double eta_star_text, double eta_actual,
                                 double eta_base, double baseline_p) {
    for (double eta : {eta_star_exec, eta_star_text, eta_actual, eta_base}) {
        if (!(eta >= 0.0 && eta <= 1.0)) {
            throw std::domain_error(
                "gain_decomposition: efficiencies must lie in [0,1]");
        }
    }
    if (!(c_k >= 0.0 && c_k <= 1.0)) {
        throw std::domain_error("gain_decomposition: coverage must lie in [0,1]");
    }
    if (eta_star_exec < eta_star_text) {
        throw std::domain_error(
            "gain_decomposition: execution-optimal efficiency cannot fall "
            "below text-optimal efficiency");
    }

    GainBreakdown out;
    out.coverage = c_k;
    out.selection = eta_actual;
    out.g_explore = c_k - baseline_p;
    out.g_info = c_k * (eta_star_exec - eta_star_text);
    out.g_aggr = c_k * (eta_actual - eta_base);
    out.total_gain = c_k * eta_actual - baseline_p;

    if (out.g_info >= 0.0 && out.g_aggr >= 0.0) {
        const double budget = out.g_explore + out.g_info + out.g_aggr;
        if (out.total_gain > budget + 1e-12) {
            throw std::logic_error(
                "gain_decomposition: subadditivity violated");
        }
    }
    return out;
}

double synergy_coefficient(double joint_gain,
                           const std::vector<double>& individual_gains) {
    const double total = std::accumulate(individual_gains.begin(),
                                         individual_gains.end(), 0.0);
    if (total == 0.0) {
        throw std::domain_error(
            "synergy_coefficient: individual gains sum to zero");
    }
    return joint_gain / total;
}

long long token_cost(int k, int t, long long c_prop, long long c_rev,
                     long long c_syn) {
    return static_cast<long long>(k) * c_prop +
           static_cast<long long>(k) * (k - 1) * c_rev +
           static_cast<long long>(t) * c_syn;
}

}  // namespace prism::theory
