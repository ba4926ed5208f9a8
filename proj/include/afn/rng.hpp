#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace afn {

/// Seedable, splittable random stream.
///
/// Streams are mt19937_64 engines whose seeds are derived from a user seed and
/// a stream index through SplitMix64, so replicas get statistically independent
/// streams from one experiment seed. Uniform variates are built directly from
/// the raw 64-bit output (53-bit mantissa), never through std distributions,
/// so identical (seed, stream) pairs reproduce byte-identical results.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
        : engine_(mix(seed, stream)) {}

    /// Uniform on [0, 1).
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Exponential with the given rate; strictly positive.
    double exponential(double rate) {
        return -std::log1p(-uniform01()) / rate;
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free modulo bias is irrelevant for n << 2^64, but keep it exact.
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    std::uint64_t raw() { return engine_(); }

private:
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        // SplitMix64 over (seed, stream); the standard remedy for correlated
        // mt19937 seeds.
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace afn
