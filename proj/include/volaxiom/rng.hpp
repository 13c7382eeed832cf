#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace volaxiom {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Per-stage seed = hash(master, stage name, index); stages never share a stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stage, std::uint64_t index = 0) {
    std::uint64_t h = splitmix64(master);
    for (unsigned char c : stage) h = splitmix64(h ^ c);
    return splitmix64(h ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

} // namespace volaxiom
