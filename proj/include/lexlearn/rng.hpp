#pragma once
// Portable seeded randomness. std::mt19937_64 output is fixed by the standard;
// the std distributions are not, so uniform draws are derived by hand here.

#include <cstdint>
#include <random>
#include <stdexcept>

namespace lexlearn {

using Engine = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent seeds from (seed, index).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(splitmix64(seed) ^ index);
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n) by threshold rejection (no modulo bias).
inline std::uint64_t uniform_index(Engine& eng, std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: empty range");
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
        const std::uint64_t r = eng();
        if (r >= threshold) return r % n;
    }
}

}  // namespace lexlearn
