#pragma once

#include <cstdint>
#include <vector>

namespace lunar {

// splitmix64 finalizer. Bijective on 64-bit words, so distinct inputs give
// distinct outputs; this is what makes per-sample seeds collision-free.
inline std::uint64_t splitmix64_mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
}

// Avalanche-combine two words (e.g. master seed + sample index). For fixed
// `a` this is injective in `b`.
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return splitmix64_mix(a + 0x9e3779b97f4a7c15ull * (b + 1));
}

// Deterministic PRNG used everywhere randomness is needed. We do not use
// <random> distributions because their output is not pinned across standard
// library implementations.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        return splitmix64_mix(state_);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform in [0, n), unbiased via rejection.
    std::uint64_t next_below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return v % n;
    }

    // Uniform in [-bound, bound].
    double next_symmetric(double bound) {
        return (2.0 * next_double() - 1.0) * bound;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace lunar
