#pragma once

#include <cstdint>
#include <string_view>

namespace prism::rng {

// SplitMix64 finalizer. Bijective on 64-bit words, passes the usual
// statistical batteries when driven by a Weyl sequence.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Counter-based stream with label-derived substreams.
///
/// Draw n is mix64(key + n*gamma), so streams are pure functions of
/// (root seed, label path, counter): identical construction reproduces
/// identical draws, and distinct labels give decorrelated streams that
/// can be consumed from parallel workers without coordination.
class SeedStream {
public:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

    explicit SeedStream(std::uint64_t root_seed)
        : key_(mix64(root_seed ^ 0x5157495244415441ULL)) {}

    SeedStream(std::uint64_t root_seed, std::string_view label)
        : SeedStream(SeedStream(root_seed).substream(label)) {}

    /// Child stream for a named component ("propose", "review", ...).
    [[nodiscard]] SeedStream substream(std::string_view label) const {
        return SeedStream(Key{mix64(key_ ^ fnv1a64(label))});
    }

    /// Child stream for an indexed item (task number, agent number, ...).
    [[nodiscard]] SeedStream substream(std::uint64_t index) const {
        return SeedStream(Key{mix64(key_ ^ (kGamma * (index + 1)))});
    }

    std::uint64_t next_u64() { return mix64(key_ + kGamma * ++counter_); }

    /// Uniform in [0, 1), 53-bit resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1); safe as input to inverse CDFs.
    double next_open_unit() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    bool next_bernoulli(double p) { return next_unit() < p; }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    // UniformRandomBitGenerator interface.
    using result_type = std::uint64_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~std::uint64_t{0}; }
    result_type operator()() { return next_u64(); }

private:
    struct Key {
        std::uint64_t v;
    };
    explicit SeedStream(Key k) : key_(k.v) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace prism::rng
