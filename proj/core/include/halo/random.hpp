#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace halo {

// splitmix64 finalizer; used to derive independent child seeds so that
// every consumer of randomness can be keyed by (base_seed, purpose, index)
// instead of sharing one mutable stream.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return mix_seed(a ^ mix_seed(b));
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

// Deterministic generator. Draws bypass std::*_distribution so the
// produced sequences are identical for a given seed on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // [0, n)
    int uniform_int(int n) {
        return static_cast<int>(next() % static_cast<std::uint64_t>(n));
    }

    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(next() % static_cast<std::uint64_t>(n));
    }

    // Box-Muller, one variate per call.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) {
        return mean + stddev * normal();
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace halo
