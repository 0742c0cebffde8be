#include "prism/game.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace prism::game {

void FiniteGame::validate() const {
    if (k_players < 1) throw std::domain_error("FiniteGame: need >= 1 player");
    if (strategies.size() != static_cast<std::size_t>(k_players) ||
        role_score.size() != static_cast<std::size_t>(k_players)) {
        throw std::domain_error("FiniteGame: per-player tables must have k entries");
    }
    if (lambda < Rational(0)) {
        throw std::domain_error("FiniteGame: lambda must be >= 0");
    }
    for (int k = 0; k < k_players; ++k) {
        if (strategies[k].empty()) {
            throw std::domain_error("FiniteGame: empty strategy set");
        }
        for (int s : strategies[k]) {
            if (!quality.count(s)) {
                throw std::domain_error("FiniteGame: strategy without quality");
            }
            if (!role_score[k].count(s)) {
                throw std::domain_error("FiniteGame: strategy without role score");
            }
        }
    }
}

void FiniteGame::validate_profile(const Profile& profile) const {
    if (profile.size() != static_cast<std::size_t>(k_players)) {
        throw std::invalid_argument("profile length != k_players");
    }
    for (int k = 0; k < k_players; ++k) {
        const auto& set = strategies[k];
        if (std::find(set.begin(), set.end(), profile[k]) == set.end()) {
            throw std::invalid_argument("profile uses a strategy outside player " +
                                        std::to_string(k) + "'s set");
        }
    }
}

std::uint64_t FiniteGame::deviation_count() const {
    std::uint64_t profiles = 1;
    for (const auto& set : strategies) profiles *= set.size();
    std::uint64_t deviations_per_profile = 0;
    for (const auto& set : strategies) deviations_per_profile += set.size() - 1;
    return profiles * deviations_per_profile;
}

namespace {

int max_quality(const FiniteGame& game, const Profile& profile) {
    int best = 0;
    for (int s : profile) best = std::max(best, game.quality.at(s));
    return best;
}

}  // namespace

Rational potential(const FiniteGame& game, const Profile& profile) {
    game.validate_profile(profile);
    Rational sum(0);
    for (int k = 0; k < game.k_players; ++k) {
        sum = sum + game.role_score[k].at(profile[k]);
    }
    return Rational(max_quality(game, profile)) + game.lambda * sum;
}

Rational utility(const FiniteGame& game, int player, const Profile& profile) {
    if (player < 0 || player >= game.k_players) {
        throw std::invalid_argument("utility: bad player index");
    }
    game.validate_profile(profile);
    return Rational(max_quality(game, profile)) +
           game.lambda * game.role_score[player].at(profile[player]);
}

VerificationReport verify_exact_potential(const FiniteGame& game,
                                          std::uint64_t deviation_cap,
                                          const UtilityFn& utility_fn) {
    game.validate();
    const std::uint64_t total = game.deviation_count();
    if (total > deviation_cap) {
        throw std::length_error("verify_exact_potential: " + std::to_string(total) +
                                " deviations exceed cap " +
                                std::to_string(deviation_cap));
    }

    const auto u = utility_fn ? utility_fn : UtilityFn(&utility);

    VerificationReport report;
    report.max_discrepancy = Rational(0);

    Profile profile(static_cast<std::size_t>(game.k_players));
    std::vector<std::size_t> index(static_cast<std::size_t>(game.k_players), 0);
    for (int k = 0; k < game.k_players; ++k) profile[k] = game.strategies[k][0];

    while (true) {
        const Rational phi_before = potential(game, profile);
        for (int player = 0; player < game.k_players; ++player) {
            const int original = profile[player];
            const Rational u_before = u(game, player, profile);
            for (int alt : game.strategies[player]) {
                if (alt == original) continue;
                profile[player] = alt;
                const Rational du = u(game, player, profile) - u_before;
                const Rational dphi = potential(game, profile) - phi_before;
                const Rational gap = (du - dphi).abs();
                if (gap > report.max_discrepancy) report.max_discrepancy = gap;
                ++report.deviations_checked;
                profile[player] = original;
            }
        }

        // Advance the mixed-radix profile counter.
        int pos = 0;
        while (pos < game.k_players) {
            if (++index[pos] < game.strategies[pos].size()) {
                profile[pos] = game.strategies[pos][index[pos]];
                break;
            }
            index[pos] = 0;
            profile[pos] = game.strategies[pos][0];
            ++pos;
        }
        if (pos == game.k_players) break;
    }

    report.pass = report.max_discrepancy == Rational(0);
    return report;
}

namespace {

/// Best strictly-improving response for one player, or the current
/// strategy when none improves. Lowest id wins among strict improvers.
int best_response(const FiniteGame& game, int player, Profile& profile) {
    const int original = profile[player];
    Rational best_u = utility(game, player, profile);
    int best_s = original;
    std::vector<int> sorted = game.strategies[player];
    std::sort(sorted.begin(), sorted.end());
    for (int s : sorted) {
        if (s == original) continue;
        profile[player] = s;
        const Rational u = utility(game, player, profile);
        if (u > best_u) {
            best_u = u;
            best_s = s;
        }
    }
    profile[player] = original;
    return best_s;
}

}  // namespace

PotentialTrace best_response_dynamics(const FiniteGame& game,
                                      const Profile& initial, UpdateOrder order,
                                      std::uint64_t order_seed) {
    game.validate();
    game.validate_profile(initial);

    PotentialTrace trace;
    trace.terminal = initial;
    rng::SeedStream order_stream(order_seed, "best-response-order");

    std::vector<int> players(static_cast<std::size_t>(game.k_players));
    std::iota(players.begin(), players.end(), 0);

    bool moved = true;
    while (moved) {
        moved = false;
        if (order == UpdateOrder::kRandom) {
            for (std::size_t i = players.size(); i > 1; --i) {
                std::swap(players[i - 1],
                          players[order_stream.next_below(i)]);
            }
        }
        for (int player : players) {
            const int current = trace.terminal[player];
            const int response = best_response(game, player, trace.terminal);
            if (response != current) {
                trace.terminal[player] = response;
                trace.steps.push_back(PotentialStep{
                    player, current, response, potential(game, trace.terminal)});
                moved = true;
            }
        }
    }
    return trace;
}

bool is_nash(const FiniteGame& game, const Profile& profile) {
    game.validate_profile(profile);
    Profile work = profile;
    for (int player = 0; player < game.k_players; ++player) {
        const Rational u_now = utility(game, player, work);
        const int original = work[player];
        for (int alt : game.strategies[player]) {
            if (alt == original) continue;
            work[player] = alt;
            if (utility(game, player, work) > u_now) return false;
            work[player] = original;
        }
    }
    return true;
}

void write_game(const FiniteGame& game, std::ostream& os) {
    os << "k " << game.k_players << " lambda " << game.lambda.str() << "\n";
    for (int k = 0; k < game.k_players; ++k) {
        for (int s : game.strategies[k]) {
            os << k << " " << s << " " << game.quality.at(s) << " "
               << game.role_score[k].at(s).str() << "\n";
        }
    }
}

FiniteGame read_game(std::istream& is) {
    FiniteGame game;
    std::string tag;
    std::string lambda_text;
    if (!(is >> tag >> game.k_players) || tag != "k") {
        throw std::runtime_error("game file: expected 'k <players>' header");
    }
    if (!(is >> tag >> lambda_text) || tag != "lambda") {
        throw std::runtime_error("game file: expected 'lambda <value>' header");
    }
    game.lambda = Rational::parse(lambda_text);
    game.strategies.resize(static_cast<std::size_t>(game.k_players));
    game.role_score.resize(static_cast<std::size_t>(game.k_players));

    int player, strategy, quality;
    std::string score_text;
    while (is >> player >> strategy >> quality >> score_text) {
        if (player < 0 || player >= game.k_players) {
            throw std::runtime_error("game file: player index out of range");
        }
        game.strategies[player].push_back(strategy);
        game.quality[strategy] = quality;
        game.role_score[player][strategy] = Rational::parse(score_text);
    }
    game.validate();
    return game;
}

FiniteGame random_game(rng::SeedStream& stream, int max_players,
                       int max_strategies) {
    FiniteGame game;
    game.k_players = 1 + static_cast<int>(stream.next_below(
                             static_cast<std::uint64_t>(max_players)));
    game.lambda = Rational(static_cast<std::int64_t>(stream.next_below(101)), 100);
    game.strategies.resize(static_cast<std::size_t>(game.k_players));
    game.role_score.resize(static_cast<std::size_t>(game.k_players));

    int next_id = 0;
    for (int k = 0; k < game.k_players; ++k) {
        const int n = 1 + static_cast<int>(stream.next_below(
                              static_cast<std::uint64_t>(max_strategies)));
        for (int s = 0; s < n; ++s) {
            const int id = next_id++;
            game.strategies[k].push_back(id);
            game.quality[id] = static_cast<int>(stream.next_below(2));
            game.role_score[k][id] =
                Rational(static_cast<std::int64_t>(stream.next_below(65)), 64);
        }
    }
    game.validate();
    return game;
}

}  // namespace prism::game
