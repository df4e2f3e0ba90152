#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace derauth {

// splitmix64 finalizer; used to derive independent stream seeds and
// counter-based draws from structured keys.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) noexcept {
    std::uint64_t h = 0x6A09E667F3BCC908ULL;
    for (auto p : parts) {
        h = mix64(h ^ p);
    }
    return h;
}

// Maps 64 random bits to [0, 1) using the top 53 bits. Unlike
// std::uniform_real_distribution the result is identical on every standard library.
constexpr double unit_from_bits(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform in [-1, 1) from a structured key.
constexpr double symmetric_from_key(std::initializer_list<std::uint64_t> parts) noexcept {
    return 2.0 * unit_from_bits(hash_key(parts)) - 1.0;
}

// Seeded engine with portable helpers. std::mt19937_64 output is fixed by the
// standard, so sequences are reproducible everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    std::uint64_t next() { return engine_(); }
    double unit() { return unit_from_bits(engine_()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    // Uniform integer in [0, bound) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0}) - (~std::uint64_t{0}) % bound;
        std::uint64_t x = engine_();
        while (x >= limit) {
            x = engine_();
        }
        return x % bound;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace derauth
