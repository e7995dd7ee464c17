#pragma once

#include <cstdint>
#include <random>

#include "lab/types.hpp"

namespace lab {

// splitmix64; used to derive independent per-chain streams from (seed, chain).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// One RNG stream per chain, reproducible regardless of worker scheduling.
inline std::mt19937_64 chain_rng(std::uint64_t seed, std::uint64_t chain_index) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ (chain_index + 1)));
}

// A fresh distribution per call keeps draws a pure function of the rng state
// (normal_distribution caches a spare variate internally).
inline Vector standard_normal(int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Vector z(dim);
    for (int i = 0; i < dim; ++i) z(i) = dist(rng);
    return z;
}

} // namespace lab
