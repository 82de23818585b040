#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace mcm {

// splitmix64 finalizer; used to mix (seed, purpose, step) into independent
// generator seeds so every consumer of randomness owns its own stream.
// Two loops that draw the same named streams in the same order produce
// bit-identical results regardless of what other streams exist.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic generator for (seed, purpose tag, step). Purpose tags are
// short literals like "teacher.noise" or "distill.traj".
inline std::mt19937_64 derive_rng(std::uint64_t seed, std::string_view purpose, std::uint64_t step = 0) {
    std::uint64_t s = mix64(seed);
    s = mix64(s ^ fnv1a64(purpose));
    s = mix64(s ^ step);
    return std::mt19937_64(s);
}

inline double uniform01(std::mt19937_64& g) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(g);
}

inline double normal01(std::mt19937_64& g) {
    return std::normal_distribution<double>(0.0, 1.0)(g);
}

}  // namespace mcm
