#pragma once

#include <cstdint>
#include <random>

#include "hash.hpp"

namespace guiq {

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

/// Independent child stream: same seed + different tag never collide in practice.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream_tag) {
    return Rng(mix64(mix64(seed) ^ mix64(stream_tag)));
}

inline std::uint64_t rng_u64(Rng& rng) { return rng(); }

// Modulo reduction: the tiny bias is irrelevant at the ranges used here, and the
// result does not depend on the standard library's distribution internals.
inline std::size_t rng_below(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double rng_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double rng_range(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * rng_unit(rng);
}

} // namespace guiq
