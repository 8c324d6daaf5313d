#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace guiq {

// splitmix64 finalizer; fixed constants, stable across platforms.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seeded FNV-1a over the bytes of `s`, post-mixed so low bits are usable.
inline std::uint64_t hash64(std::string_view s, std::uint64_t seed = 0) {
    std::uint64_t h = 0xCBF29CE484222325ULL ^ mix64(seed);
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return mix64(h);
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

} // namespace guiq
