#pragma once

#include <cstdint>
#include <random>

namespace cpi {

// splitmix64 step, used to mix a master seed with a stream index so that
// per-frame / per-realization generators are independent of scheduling.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
    return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::mt19937_64 make_rng(uint64_t master, uint64_t stream) {
    return std::mt19937_64(derive_seed(master, stream));
}

} // namespace cpi
