#include <doctest.h>

#include <set>
#include <sstream>

#include "prism/game.hpp"

using namespace prism;
using namespace prism::game;

namespace {

FiniteGame tiny_game(Rational lambda) {
    // Two players, two strategies each. Ids 0/1 belong to player 0,
    // ids 2/3 to player 1.
    FiniteGame g;
    g.k_players = 2;
    g.lambda = lambda;
    g.strategies = {{0, 1}, {2, 3}};
    g.quality = {{0, 0}, {1, 1}, {2, 0}, {3, 1}};
    g.role_score.resize(2);
    g.role_score[0] = {{0, Rational(1, 2)}, {1, Rational(1, 4)}};
    g.role_score[1] = {{2, Rational(3, 4)}, {3, Rational(1, 8)}};
    return g;
}

// Brute-force Nash oracle: recompute utilities straight from the game
// definition without going through game::utility.
bool nash_oracle(const FiniteGame& g, const Profile& profile) {
    auto raw_utility = [&g](int player, const Profile& prof) {
        int best_q = 0;
        for (int s : prof) best_q = std::max(best_q, g.quality.at(s));
        return Rational(best_q) + g.lambda * g.role_score[player].at(prof[player]);
    };
    Profile work = profile;
    for (int player = 0; player < g.k_players; ++player) {
        const Rational base = raw_utility(player, work);
        const int keep = work[player];
        for (int alt : g.strategies[player]) {
            work[player] = alt;
            if (raw_utility(player, work) > base) return false;
            work[player] = keep;
        }
    }
    return true;
}

std::vector<Profile> all_profiles(const FiniteGame& g) {
    std::vector<Profile> out;
    Profile profile(static_cast<std::size_t>(g.k_players));
    std::vector<std::size_t> idx(static_cast<std::size_t>(g.k_players), 0);
    for (int k = 0; k < g.k_players; ++k) profile[k] = g.strategies[k][0];
    while (true) {
        out.push_back(profile);
        int pos = 0;
        while (pos < g.k_players) {
            if (++idx[pos] < g.strategies[pos].size()) {
                profile[pos] = g.strategies[pos][idx[pos]];
                break;
            }
            idx[pos] = 0;
            profile[pos] = g.strategies[pos][0];
            ++pos;
        }
        if (pos == g.k_players) break;
    }
    return out;
}

}  // namespace

TEST_CASE("rational arithmetic is exact") {
    CHECK(Rational(1, 3) + Rational(1, 6) == Rational(1, 2));
    CHECK(Rational(1, 10) * Rational(3, 2) == Rational(3, 20));
    CHECK(Rational(-2, 4) == Rational(-1, 2));
    CHECK(Rational::parse("0.15") == Rational(3, 20));
    CHECK(Rational::parse("-0.25") == Rational(-1, 4));
    CHECK(Rational::parse("7/8") == Rational(7, 8));
    CHECK(Rational(5, 8).to_double() == doctest::Approx(0.625));
    CHECK_THROWS_AS(Rational(1, 0), std::domain_error);
}

TEST_CASE("potential and utility closed forms") {
    auto g = tiny_game(Rational(0));
    // lambda = 0: potential and every utility equal the shared max quality.
    CHECK(potential(g, {0, 2}) == Rational(0));
    CHECK(potential(g, {1, 2}) == Rational(1));
    CHECK(utility(g, 0, {1, 2}) == Rational(1));
    CHECK(utility(g, 1, {1, 2}) == Rational(1));

    // lambda = 0.1, all qualities 1, role scores 0.5 each, k = 3:
    // potential = 1 + 0.1 * 1.5.
    FiniteGame h;
    h.k_players = 3;
    h.lambda = Rational(1, 10);
    h.strategies = {{0}, {1}, {2}};
    h.quality = {{0, 1}, {1, 1}, {2, 1}};
    h.role_score = {{{0, Rational(1, 2)}},
                    {{1, Rational(1, 2)}},
                    {{2, Rational(1, 2)}}};
    CHECK(potential(h, {0, 1, 2}) == Rational(23, 20));  // 1.15 exactly

    CHECK_THROWS_AS(potential(g, {0, 5}), std::invalid_argument);
    CHECK_THROWS_AS(utility(g, 7, {0, 2}), std::invalid_argument);
}

TEST_CASE("potential stays inside the [ -lambda K Rmax, 1 + lambda K Rmax ] band") {
    rng::SeedStream stream(41, "phi-bounds");
    for (int i = 0; i < 200; ++i) {
        const auto g = random_game(stream);
        Rational r_max(0);
        for (int k = 0; k < g.k_players; ++k) {
            for (int s : g.strategies[k]) {
                if (g.role_score[k].at(s) > r_max) r_max = g.role_score[k].at(s);
            }
        }
        const Rational hi = Rational(1) + g.lambda * Rational(g.k_players) * r_max;
        const Rational lo = -(g.lambda * Rational(g.k_players) * r_max);
        for (const auto& profile : all_profiles(g)) {
            const Rational phi = potential(g, profile);
            CHECK(phi <= hi);
            CHECK(phi >= lo);
        }
    }
}

TEST_CASE("exact potential verification passes for the family") {
    rng::SeedStream stream(42, "verify");
    for (int i = 0; i < 1000; ++i) {
        const auto g = random_game(stream);
        const auto report = verify_exact_potential(g);
        REQUIRE(report.pass);
        CHECK(report.max_discrepancy == Rational(0));
        CHECK(report.deviations_checked == g.deviation_count());
    }
}

TEST_CASE("a player-specific quality bonus breaks the exact potential") {
    // Player 0 owns strategies of both qualities, so the private bonus
    // actually varies across its deviations.
    const auto g = tiny_game(Rational(1, 10));
    const UtilityFn mutated = [](const FiniteGame& game, int player,
                                 const Profile& profile) {
        Rational u = utility(game, player, profile);
        if (player == 0) {
            u = u + Rational(game.quality.at(profile[0]));
        }
        return u;
    };
    const auto report = verify_exact_potential(g, 1'000'000, mutated);
    CHECK(!report.pass);
    CHECK(report.max_discrepancy > Rational(0));

    // The genuine utility on the same game still verifies.
    CHECK(verify_exact_potential(g).pass);
}

TEST_CASE("deviation cap raises with the attempted size in the message") {
    rng::SeedStream stream(44, "cap");
    const auto g = random_game(stream);
    try {
        verify_exact_potential(g, 1);
        FAIL("expected length_error");
    } catch (const std::length_error& e) {
        CHECK(std::string(e.what()).find(std::to_string(g.deviation_count())) !=
              std::string::npos);
    }
}

TEST_CASE("best-response dynamics: Nash endpoint, monotone potential") {
    rng::SeedStream stream(45, "dynamics");
    for (int i = 0; i < 1000; ++i) {
        const auto g = random_game(stream);
        Profile initial;
        for (const auto& set : g.strategies) {
            initial.push_back(set[stream.next_below(set.size())]);
        }
        const auto trace = best_response_dynamics(g, initial);

        // Terminal profile must satisfy the independent Nash oracle.
        REQUIRE(nash_oracle(g, trace.terminal));
        CHECK(is_nash(g, trace.terminal));

        // Potential strictly increases along the accepted moves.
        Rational prev = potential(g, initial);
        for (const auto& step : trace.steps) {
            CHECK(step.potential_after > prev);
            prev = step.potential_after;
        }

        // Finite improvement: the number of accepted moves is bounded by
        // the number of profiles.
        std::uint64_t profiles = 1;
        for (const auto& set : g.strategies) profiles *= set.size();
        CHECK(trace.steps.size() <= profiles);
    }
}

TEST_CASE("dynamics from a Nash profile makes zero moves") {
    rng::SeedStream stream(46, "nash-start");
    for (int i = 0; i < 50; ++i) {
        const auto g = random_game(stream);
        // The global potential maximizer is always Nash.
        Profile best;
        Rational best_phi;
        bool first = true;
        for (const auto& profile : all_profiles(g)) {
            const Rational phi = potential(g, profile);
            if (first || phi > best_phi) {
                best_phi = phi;
                best = profile;
                first = false;
            }
        }
        REQUIRE(is_nash(g, best));
        const auto trace = best_response_dynamics(g, best);
        CHECK(trace.steps.empty());
        CHECK(trace.terminal == best);
    }
}

TEST_CASE("every generated game has at least one Nash profile") {
    rng::SeedStream stream(47, "exists");
    for (int i = 0; i < 200; ++i) {
        const auto g = random_game(stream);
        bool found = false;
        for (const auto& profile : all_profiles(g)) {
            if (nash_oracle(g, profile)) {
                found = true;
                break;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("lambda = 0 dynamics reach max quality when reachable") {
    // Any player can flip to a quality-1 strategy; the terminal profile
    // must carry quality 1.
    FiniteGame g = tiny_game(Rational(0));
    const auto trace = best_response_dynamics(g, {0, 2});
    int best_q = 0;
    for (int s : trace.terminal) best_q = std::max(best_q, g.quality.at(s));
    CHECK(best_q == 1);
}

TEST_CASE("random update order also terminates at Nash") {
    rng::SeedStream stream(48, "rand-order");
    for (int i = 0; i < 100; ++i) {
        const auto g = random_game(stream);
        Profile initial;
        for (const auto& set : g.strategies) initial.push_back(set.front());
        const auto trace =
            best_response_dynamics(g, initial, UpdateOrder::kRandom, 7 + i);
        CHECK(nash_oracle(g, trace.terminal));
    }
}

TEST_CASE("ties keep the current strategy, preventing cycles") {
    // Two strategies with identical quality and role score: no strict
    // improvement exists, so dynamics must not move at all.
    FiniteGame g;
    g.k_players = 2;
    g.lambda = Rational(1, 2);
    g.strategies = {{0, 1}, {2, 3}};
    g.quality = {{0, 1}, {1, 1}, {2, 0}, {3, 0}};
    g.role_score.resize(2);
    g.role_score[0] = {{0, Rational(1, 4)}, {1, Rational(1, 4)}};
    g.role_score[1] = {{2, Rational(1, 2)}, {3, Rational(1, 2)}};

    for (const auto initial : {Profile{1, 3}, Profile{0, 2}}) {
        const auto trace = best_response_dynamics(g, initial);
        CHECK(trace.steps.empty());
        CHECK(trace.terminal == initial);
    }
}

TEST_CASE("single-player game: dynamics maximize own utility") {
    FiniteGame g;
    g.k_players = 1;
    g.lambda = Rational(1, 2);
    g.strategies = {{0, 1, 2}};
    g.quality = {{0, 0}, {1, 0}, {2, 0}};
    g.role_score = {{{0, Rational(1, 4)}, {1, Rational(3, 4)}, {2, Rational(1, 2)}}};
    const auto trace = best_response_dynamics(g, {0});
    CHECK(trace.terminal == Profile{1});
    CHECK(is_nash(g, trace.terminal));
}

TEST_CASE("game text round-trip preserves structure exactly") {
    rng::SeedStream stream(49, "serialize");
    const auto g = random_game(stream);
    std::ostringstream os;
    write_game(g, os);
    std::istringstream is(os.str());
    const auto loaded = read_game(is);

    CHECK(loaded.k_players == g.k_players);
    CHECK(loaded.lambda == g.lambda);
    CHECK(loaded.strategies == g.strategies);
    for (int k = 0; k < g.k_players; ++k) {
        for (int s : g.strategies[k]) {
            CHECK(loaded.quality.at(s) == g.quality.at(s));
            CHECK(loaded.role_score[k].at(s) == g.role_score[k].at(s));
        }
    }
    // Verification outcome carries over bit-exactly.
    CHECK(verify_exact_potential(loaded).pass);
}
