#include "prism/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

namespace prism::simworld {

namespace {

constexpr double kBoundaryEps = 1e-9;

// Gauss-Legendre rule on [-1, 1], computed once by Newton iteration on
// the Legendre recurrence. 48 points is far more than the smooth
// Plackett integrand needs.
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendre(int n) {
        nodes.resize(static_cast<std::size_t>(n));
        weights.resize(static_cast<std::size_t>(n));
        const int m = (n + 1) / 2;
        for (int i = 0; i < m; ++i) {
            double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double pp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p1 = 1.0, p2 = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
                }
                pp = n * (z * p1 - p2) / (z * z - 1.0);
                const double z1 = z;
                z = z1 - p1 / pp;
                if (std::abs(z - z1) < 1e-15) break;
            }
            nodes[static_cast<std::size_t>(i)] = -z;
            nodes[static_cast<std::size_t>(n - 1 - i)] = z;
            const double w = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[static_cast<std::size_t>(i)] = w;
            weights[static_cast<std::size_t>(n - 1 - i)] = w;
        }
    }
};

const GaussLegendre& plackett_rule() {
    static const GaussLegendre rule(48);
    return rule;
}

double validate_probability(double p, const char* what) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error(std::string(what) + " must lie in (0,1)");
    }
    return p;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
    static const boost::math::normal_distribution<double> unit{};
    return boost::math::quantile(unit, p);
}

double bivariate_normal_cdf(double h, double k, double rho) {
    if (!(rho > -1.0 && rho < 1.0)) {
        throw std::domain_error("bivariate_normal_cdf: |rho| must be < 1");
    }
    double value = normal_cdf(h) * normal_cdf(k);
    if (rho == 0.0) return value;
    // d Phi2 / d rho = bivariate density at (h, k); integrate from 0 to rho.
    const auto& rule = plackett_rule();
    const double half = 0.5 * rho;
    double integral = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double r = half * (1.0 + rule.nodes[i]);
        const double omr2 = 1.0 - r * r;
        const double expo = -(h * h - 2.0 * r * h * k + k * k) / (2.0 * omr2);
        integral += rule.weights[i] * std::exp(expo) / std::sqrt(omr2);
    }
    value += half * integral / (2.0 * std::numbers::pi);
    return value;
}

namespace {

double bernoulli_corr_from_gaussian(double rho_g, double p1, double p2,
                                    double h1, double h2) {
    const double p11 = bivariate_normal_cdf(h1, h2, rho_g);
    return (p11 - p1 * p2) /
           std::sqrt(p1 * (1.0 - p1) * p2 * (1.0 - p2));
}

}  // namespace

double gaussian_corr_for_bernoulli(double p1, double p2, double target_rho) {
    validate_probability(p1, "marginal");
    validate_probability(p2, "marginal");
    const auto range = theory::bernoulli_correlation_range(p1, p2);
    if (target_rho < range.lo - kBoundaryEps ||
        target_rho > range.hi + kBoundaryEps) {
        std::ostringstream msg;
        msg << "target correlation " << target_rho
            << " infeasible for marginals (" << p1 << ", " << p2
            << "); range [" << range.lo << ", " << range.hi << "]";
        throw InfeasibleCorrelationError(msg.str());
    }
    if (target_rho == 0.0) return 0.0;

    const double h1 = normal_quantile(p1);
    const double h2 = normal_quantile(p2);
    double lo = -1.0 + 1e-12, hi = 1.0 - 1e-12;
    // Bernoulli correlation is increasing in the Gaussian correlation.
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double got = bernoulli_corr_from_gaussian(mid, p1, p2, h1, h2);
        if (got < target_rho) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo < 1e-12) break;
        if (std::abs(got - target_rho) < 1e-6 && hi - lo < 1e-7) break;
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// AgentPopulation
// ---------------------------------------------------------------------------

AgentPopulation AgentPopulation::common(int k, double p, double rho_bar) {
    AgentPopulation pop;
    pop.k = k;
    pop.marginals.assign(static_cast<std::size_t>(k), p);
    pop.corr.assign(static_cast<std::size_t>(k),
                    std::vector<double>(static_cast<std::size_t>(k), rho_bar));
    for (int i = 0; i < k; ++i) pop.corr[i][i] = 1.0;
    pop.validate();
    return pop;
}

AgentPopulation AgentPopulation::general(
    std::vector<double> marginals, std::vector<std::vector<double>> corr) {
    AgentPopulation pop;
    pop.k = static_cast<int>(marginals.size());
    pop.marginals = std::move(marginals);
    pop.corr = std::move(corr);
    pop.validate();
    return pop;
}

void AgentPopulation::validate() const {
    if (k < 1 || marginals.size() != static_cast<std::size_t>(k)) {
        throw std::domain_error("AgentPopulation: bad k / marginals length");
    }
    for (double p : marginals) validate_probability(p, "AgentPopulation marginal");
    if (corr.size() != static_cast<std::size_t>(k)) {
        throw std::domain_error("AgentPopulation: corr must be k x k");
    }
    for (int i = 0; i < k; ++i) {
        if (corr[i].size() != static_cast<std::size_t>(k)) {
            throw std::domain_error("AgentPopulation: corr must be k x k");
        }
        if (std::abs(corr[i][i] - 1.0) > 1e-12) {
            throw std::domain_error("AgentPopulation: corr diagonal must be 1");
        }
        for (int j = i + 1; j < k; ++j) {
            if (std::abs(corr[i][j] - corr[j][i]) > 1e-12) {
                throw std::domain_error("AgentPopulation: corr must be symmetric");
            }
            const auto range =
                theory::bernoulli_correlation_range(marginals[i], marginals[j]);
            if (corr[i][j] < range.lo - kBoundaryEps ||
                corr[i][j] > range.hi + kBoundaryEps) {
                std::ostringstream msg;
                msg << "corr(" << i << "," << j << ") = " << corr[i][j]
                    << " infeasible for marginals (" << marginals[i] << ", "
                    << marginals[j] << "); range [" << range.lo << ", "
                    << range.hi << "]";
                throw InfeasibleCorrelationError(msg.str());
            }
        }
    }
}

double AgentPopulation::rho_bar() const {
    if (k < 2) return 0.0;
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) sum += corr[i][j];
    }
    return sum / (0.5 * k * (k - 1));
}

void ReviewerModel::validate() const {
    if (!(error_rate >= 0.0 && error_rate < 0.5)) {
        throw std::domain_error("ReviewerModel: error_rate must lie in [0, 0.5)");
    }
    if (count_reviewers < 0) {
        throw std::domain_error("ReviewerModel: count_reviewers must be >= 0");
    }
}

void TaskModel::validate() const {
    validate_probability(per_problem_p, "TaskModel per_problem_p");
    if (correct_variants < 1 || incorrect_variants < 1) {
        throw std::domain_error("TaskModel: variant counts must be >= 1");
    }
}

rng::SeedStream WorldSeed::stream() const {
    rng::SeedStream s(root_seed);
    for (const auto& label : stream_labels) s = s.substream(label);
    return s;
}

// ---------------------------------------------------------------------------
// Sampler
// ---------------------------------------------------------------------------

namespace {

// Lower-triangular Cholesky factor; throws if the matrix is not positive
// definite (the induced Gaussian correlation matrix may be infeasible even
// when each pair is).
std::vector<std::vector<double>> cholesky(
    const std::vector<std::vector<double>>& a) {
    const int n = static_cast<int>(a.size());
    std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = a[i][j];
            for (int m = 0; m < j; ++m) sum -= l[i][m] * l[j][m];
            if (i == j) {
                if (sum <= 1e-12) {
                    throw InfeasibleCorrelationError(
                        "Gaussian correlation matrix for the requested "
                        "population is not positive definite");
                }
                l[i][j] = std::sqrt(sum);
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    return l;
}

}  // namespace

CorrelatedBernoulliSampler::CorrelatedBernoulliSampler(AgentPopulation pop)
    : pop_(std::move(pop)) {
    pop_.validate();
    const int k = pop_.k;

    if (k == 2) {
        const double p1 = pop_.marginals[0];
        const double p2 = pop_.marginals[1];
        const auto range = theory::bernoulli_correlation_range(p1, p2);
        const double rho = pop_.corr[0][1];
        if (rho <= range.lo + kBoundaryEps || rho >= range.hi - kBoundaryEps) {
            // Exact joint table at the feasibility boundary.
            const double denom = std::sqrt(p1 * (1 - p1) * p2 * (1 - p2));
            const double p11 = std::clamp(rho * denom + p1 * p2,
                                          std::max(0.0, p1 + p2 - 1.0),
                                          std::min(p1, p2));
            table_[3] = p11;              // (1,1)
            table_[2] = p1 - p11;         // (1,0)
            table_[1] = p2 - p11;         // (0,1)
            table_[0] = 1.0 - p1 - p2 + p11;
            use_joint_table_ = true;
            return;
        }
    }

    thresholds_.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) thresholds_[i] = normal_quantile(pop_.marginals[i]);

    std::vector<std::vector<double>> gauss(
        static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(k), 0.0));
    for (int i = 0; i < k; ++i) {
        gauss[i][i] = 1.0;
        for (int j = i + 1; j < k; ++j) {
            const double g = gaussian_corr_for_bernoulli(
                pop_.marginals[i], pop_.marginals[j], pop_.corr[i][j]);
            gauss[i][j] = gauss[j][i] = g;
        }
    }
    chol_ = cholesky(gauss);
}

std::vector<std::uint8_t> CorrelatedBernoulliSampler::sample(
    rng::SeedStream& stream) const {
    const int k = pop_.k;
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(k), 0);

    if (use_joint_table_) {
        const double u = stream.next_unit();
        double acc = 0.0;
        int cell = 3;
        for (int c = 0; c < 4; ++c) {
            acc += table_[c];
            if (u < acc) {
                cell = c;
                break;
            }
        }
        bits[0] = static_cast<std::uint8_t>((cell >> 1) & 1);
        bits[1] = static_cast<std::uint8_t>(cell & 1);
        return bits;
    }

    std::vector<double> g(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) g[i] = normal_quantile(stream.next_open_unit());
    for (int i = 0; i < k; ++i) {
        double z = 0.0;
        for (int j = 0; j <= i; ++j) z += chol_[i][j] * g[j];
        bits[i] = static_cast<std::uint8_t>(z <= thresholds_[i]);
    }
    return bits;
}

std::vector<std::uint8_t> sample_correlated_successes(
    const CorrelatedBernoulliSampler& sampler, rng::SeedStream& stream) {
    return sampler.sample(stream);
}

std::vector<std::vector<double>> empirical_correlation(
    const std::vector<std::vector<std::uint8_t>>& samples) {
    if (samples.size() < 2) {
        throw std::domain_error("empirical_correlation: need >= 2 samples");
    }
    const std::size_t n = samples.size();
    const std::size_t k = samples.front().size();
    for (const auto& row : samples) {
        if (row.size() != k) {
            throw std::domain_error("empirical_correlation: ragged sample matrix");
        }
    }

    std::vector<double> mean(k, 0.0);
    for (const auto& row : samples) {
        for (std::size_t j = 0; j < k; ++j) mean[j] += row[j];
    }
    for (auto& m : mean) m /= static_cast<double>(n);

    std::vector<double> var(k, 0.0);
    std::vector<std::vector<double>> cov(k, std::vector<double>(k, 0.0));
    for (const auto& row : samples) {
        for (std::size_t i = 0; i < k; ++i) {
            const double di = row[i] - mean[i];
            var[i] += di * di;
            for (std::size_t j = i + 1; j < k; ++j) {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> corr(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        corr[i][i] = 1.0;
        for (std::size_t j = i + 1; j < k; ++j) {
            const double denom = std::sqrt(var[i] * var[j]);
            corr[i][j] = corr[j][i] = denom > 0.0 ? cov[i][j] / denom : nan;
        }
    }
    return corr;
}

Candidate sample_candidate(const TaskModel& task, bool is_correct,
                           rng::SeedStream& stream) {
    task.validate();
    Candidate c;
    c.quality = is_correct ? 1 : 0;
    if (is_correct) {
        c.answer_id = static_cast<int>(
            stream.next_below(static_cast<std::uint64_t>(task.correct_variants)));
    } else {
        c.answer_id =
            task.correct_variants +
            static_cast<int>(stream.next_below(
                static_cast<std::uint64_t>(task.incorrect_variants)));
    }
    return c;
}

int sample_review(const ReviewerModel& model, int true_quality,
                  rng::SeedStream& stream) {
    model.validate();
    const bool flip = stream.next_bernoulli(model.error_rate);
    return flip ? 1 - true_quality : true_quality;
}

// ---------------------------------------------------------------------------
// CSV round-trip
// ---------------------------------------------------------------------------

void write_correlation_csv(const AgentPopulation& pop, std::ostream& os) {
    os << "i,j,rho\n";
    char buf[64];
    for (int i = 0; i < pop.k; ++i) {
        for (int j = i + 1; j < pop.k; ++j) {
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", i, j, pop.corr[i][j]);
            os << buf;
        }
    }
}

void write_marginals_csv(const AgentPopulation& pop, std::ostream& os) {
    os << "i,p\n";
    char buf[48];
    for (int i = 0; i < pop.k; ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g\n", i, pop.marginals[i]);
        os << buf;
    }
}

AgentPopulation read_population_csv(std::istream& corr_csv,
                                    std::istream& marginals_csv) {
    std::string line;
    std::map<int, double> marginals;
    std::getline(marginals_csv, line);  // header
    while (std::getline(marginals_csv, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        int i;
        char comma;
        double p;
        if (!(row >> i >> comma >> p)) {
            throw std::runtime_error("marginals CSV: bad row '" + line + "'");
        }
        marginals[i] = p;
    }
    if (marginals.empty()) {
        throw std::runtime_error("marginals CSV: no rows");
    }
    const int k = static_cast<int>(marginals.size());
    std::vector<double> m(static_cast<std::size_t>(k));
    for (const auto& [i, p] : marginals) {
        if (i < 0 || i >= k) throw std::runtime_error("marginals CSV: bad index");
        m[static_cast<std::size_t>(i)] = p;
    }

    std::vector<std::vector<double>> corr(
        static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(k), 0.0));
    for (int i = 0; i < k; ++i) corr[i][i] = 1.0;
    std::getline(corr_csv, line);  // header
    while (std::getline(corr_csv, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        int i, j;
        char c1, c2;
        double rho;
        if (!(row >> i >> c1 >> j >> c2 >> rho)) {
            throw std::runtime_error("correlation CSV: bad row '" + line + "'");
        }
        if (i < 0 || j < 0 || i >= k || j >= k) {
            throw std::runtime_error("correlation CSV: index out of range");
        }
        corr[i][j] = corr[j][i] = rho;
    }
    return AgentPopulation::general(std::move(m), std::move(corr));
}

}  // namespace prism::simworld
