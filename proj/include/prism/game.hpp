#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <unordered_map>
#include <vector>

#include "prism/rational.hpp"
#include "prism/rng.hpp"

// Finite exact-potential game: shared quality term plus role-weighted
// private terms. Potential Phi(profile) = max_k Q(choice_k)
// + lambda * sum_k R_k(choice_k); every unilateral deviation changes a
// player's utility by exactly the change in Phi, so best-response
// dynamics climb Phi and stop at a pure Nash equilibrium.

namespace prism::game {

using Profile = std::vector<int>;  // one strategy id per player

struct FiniteGame {
    int k_players = 0;
    std::vector<std::vector<int>> strategies;  // per-player strategy ids
    std::unordered_map<int, int> quality;      // strategy id -> {0,1}
    std::vector<std::unordered_map<int, Rational>> role_score;  // per player
    Rational lambda = Rational(1, 10);

    void validate() const;
    void validate_profile(const Profile& profile) const;

    /// Number of (profile, player, alternative) deviation triples.
    std::uint64_t deviation_count() const;
};

struct PotentialStep {
    int player = 0;
    int from_strategy = 0;
    int to_strategy = 0;
    Rational potential_after;
};

struct PotentialTrace {
    std::vector<PotentialStep> steps;  // potential strictly increases
    Profile terminal;
};

struct VerificationReport {
    bool pass = false;
    Rational max_discrepancy;        // max |delta-u - delta-Phi|, exact
    std::uint64_t deviations_checked = 0;
};

enum class UpdateOrder { kRoundRobin, kRandom };

/// Utility a player would receive under an arbitrary rule; used to feed
/// deliberately broken utilities into the verifier.
using UtilityFn =
    std::function<Rational(const FiniteGame&, int player, const Profile&)>;

Rational potential(const FiniteGame& game, const Profile& profile);
Rational utility(const FiniteGame& game, int player, const Profile& profile);

/// Enumerates every unilateral deviation and compares the utility change
/// against the potential change, in exact arithmetic. Throws
/// std::length_error when the game exceeds `deviation_cap`.
VerificationReport verify_exact_potential(
    const FiniteGame& game, std::uint64_t deviation_cap = 1'000'000,
    const UtilityFn& utility_fn = nullptr);

/// Sequential best-response dynamics. Ties keep the current strategy;
/// among strictly better responses the lowest id wins. Terminates because
/// every accepted move strictly increases the finite-valued potential.
PotentialTrace best_response_dynamics(
    const FiniteGame& game, const Profile& initial,
    UpdateOrder order = UpdateOrder::kRoundRobin, std::uint64_t order_seed = 0);

bool is_nash(const FiniteGame& game, const Profile& profile);

/// Text round-trip: header "k <n> lambda <rational>", then one
/// "player strategy quality role_score" row per (player, strategy).
void write_game(const FiniteGame& game, std::ostream& os);
FiniteGame read_game(std::istream& is);

/// Random game in the family: k players, up to `max_strategies` each,
/// random 0/1 qualities, random small-denominator role scores, random
/// lambda in [0, 1].
FiniteGame random_game(rng::SeedStream& stream, int max_players = 4,
                       int max_strategies = 6);

}  // namespace prism::game
