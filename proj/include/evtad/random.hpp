#pragma once

// Deterministic random draws built on the standard mt19937_64 engine.
//
// The engine itself is fully specified by the standard, but the
// <random> distributions are implementation-defined, so every
// conversion (uniform double, exponential, bounded int, shuffle,
// subsampling) is spelled out here.  Streams seeded through
// substream() are reproducible regardless of the order in which
// they are consumed, which keeps multi-pixel generators and
// --jobs parallelism byte-stable.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace evtad {

// splitmix64 finalizer; good avalanche, cheap.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Independent engine for (seed, role, index).  role separates logical
// streams (background vs. action vs. labeling, ...), index separates
// units within a role (pixel id, epoch, ...).
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t role,
                                 std::uint64_t index = 0) {
    std::uint64_t k = mix64(seed);
    k = mix64(k ^ mix64(role + 0x51ED2701FB2D6E1AULL));
    k = mix64(k ^ mix64(index + 0xABF0E52D34F2A96CULL));
    return std::mt19937_64(k);
}

// Uniform double in [0, 1), 53 mantissa bits.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform double in [lo, hi).
inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Exponential inter-arrival time for a Poisson process of the given rate.
inline double exp_interval(std::mt19937_64& rng, double rate) {
    if (rate <= 0.0)
        throw std::invalid_argument("exp_interval: rate must be positive");
    // -log(1-u) so u == 0 is safe; u == 1 cannot occur.
    return -std::log1p(-uniform01(rng)) / rate;
}

// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0)
        throw std::invalid_argument("uniform_index: n must be nonzero");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = rng();
    while (r >= limit) r = rng();
    return r % n;
}

// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// Selection sampling (Knuth's Algorithm S): k of n indices, ascending order.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k,
                                               std::mt19937_64& rng) {
    if (k > n)
        throw std::invalid_argument("sample_indices: k exceeds n");
    std::vector<std::size_t> out;
    out.reserve(k);
    std::size_t need = k;
    for (std::size_t i = 0; i < n && need > 0; ++i) {
        const std::size_t remaining = n - i;
        if (uniform01(rng) * static_cast<double>(remaining) <
            static_cast<double>(need)) {
            out.push_back(i);
            --need;
        }
    }
    return out;
}

}  // namespace evtad
