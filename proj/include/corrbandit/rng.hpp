#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace corrbandit {

// SplitMix64 finalizer. Used to derive well-separated engine seeds from
// structured keys (run ids, chunk/policy/sample indices) so that every job
// in an experiment owns an independent, reproducible stream.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = 0x853c49e6748fea9bull;
    for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k));
    return h;
}

inline std::mt19937_64 make_engine(std::initializer_list<std::uint64_t> keys) {
    return std::mt19937_64(mix_seed(keys));
}

} // namespace corrbandit
